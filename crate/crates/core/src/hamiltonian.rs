//! Pointwise Hamiltonians `H(x, m, p)` with the partial derivatives the
//! Newton system needs, and the Lions Hessian monotonicity test.

use std::io::Write;

use crate::error::{Error, Result};
use crate::grid::{GridSpec, MAX_DIM};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum HamiltonianKind<T> {
    /// `H = h(x) |p|^2 / (1 + m)^alpha`.
    Congestion { alpha: T },
    /// `H = h(x) |p|^2`, independent of the density.
    SeparableQuadratic,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HamiltonianSpec<T> {
    kind: HamiltonianKind<T>,
    h: Vec<T>,
    m_floor: T,
}

/// `H` and its derivatives at one point. Only the first `dim` entries of
/// the vector and matrix parts are meaningful.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HamiltonianBundle<T> {
    pub dim: usize,
    pub h: T,
    pub hp: [T; MAX_DIM],
    pub hm: T,
    pub hpp: [[T; MAX_DIM]; MAX_DIM],
    pub hpm: [T; MAX_DIM],
    pub hmm: T,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HessianCheck<T> {
    pub min_eigenvalue: T,
    /// Strict positive definiteness.
    pub satisfied: bool,
    /// `p = 0`: the matrix is only semidefinite.
    pub degenerate: bool,
}

impl<T: Scalar> HamiltonianSpec<T> {
    /// Congestion Hamiltonian with coefficient `h` sampled on the spatial grid.
    pub fn congestion(h: Vec<T>, alpha: T) -> Result<Self> {
        if !(alpha > T::zero()) || !alpha.is_finite() {
            return Err(Error::InvalidInput(format!("alpha must be positive, got {alpha}")));
        }
        Self::build(HamiltonianKind::Congestion { alpha }, h)
    }

    pub fn separable_quadratic(h: Vec<T>) -> Result<Self> {
        Self::build(HamiltonianKind::SeparableQuadratic, h)
    }

    fn build(kind: HamiltonianKind<T>, h: Vec<T>) -> Result<Self> {
        if h.is_empty() {
            return Err(Error::InvalidInput("h must be sampled on at least one node".into()));
        }
        if let Some((s, v)) = h.iter().enumerate().find(|(_, v)| !(**v > T::zero()) || !v.is_finite()) {
            return Err(Error::InvalidInput(format!("h must be positive, h[{s}] = {v}")));
        }
        Ok(Self {
            kind,
            h,
            m_floor: T::lit(-0.5),
        })
    }

    pub fn with_m_floor(mut self, m_floor: T) -> Self {
        self.m_floor = m_floor;
        self
    }

    pub fn kind(&self) -> HamiltonianKind<T> {
        self.kind
    }

    pub fn h(&self) -> &[T] {
        &self.h
    }

    pub fn m_floor(&self) -> T {
        self.m_floor
    }

    /// Whether `alpha` lies in the range where the Hessian condition holds.
    pub fn is_monotone_regime(&self) -> bool {
        match self.kind {
            HamiltonianKind::Congestion { alpha } => alpha <= T::lit(2.0),
            HamiltonianKind::SeparableQuadratic => true,
        }
    }

    pub fn check_grid(&self, grid: &GridSpec<T>) -> Result<()> {
        if self.h.len() != grid.spatial_len() {
            return Err(Error::InvalidInput(format!(
                "h has {} samples, grid has {} spatial nodes",
                self.h.len(),
                grid.spatial_len()
            )));
        }
        Ok(())
    }

    pub fn eval_bundle(&self, node: usize, m: T, p: &[T]) -> Result<HamiltonianBundle<T>> {
        if !(m > self.m_floor) {
            return Err(Error::Domain(format!(
                "density {m} at node {node} is not above the evaluation floor {}",
                self.m_floor
            )));
        }
        let dim = p.len();
        debug_assert!(dim <= MAX_DIM);
        let h = self.h[node];
        let two = T::lit(2.0);
        let p2 = p.iter().fold(T::zero(), |acc, &v| acc + v * v);
        let mut b = HamiltonianBundle {
            dim,
            h: T::zero(),
            hp: [T::zero(); MAX_DIM],
            hm: T::zero(),
            hpp: [[T::zero(); MAX_DIM]; MAX_DIM],
            hpm: [T::zero(); MAX_DIM],
            hmm: T::zero(),
        };
        // scale = (1 + m)^-alpha, 1 for the separable case
        let (scale, alpha, inv) = match self.kind {
            HamiltonianKind::Congestion { alpha } => {
                let base = T::one() + m;
                (base.powf(-alpha), alpha, T::one() / base)
            }
            HamiltonianKind::SeparableQuadratic => (T::one(), T::zero(), T::zero()),
        };
        let hs = h * scale;
        b.h = hs * p2;
        b.hm = -alpha * hs * p2 * inv;
        b.hmm = alpha * (alpha + T::one()) * hs * p2 * inv * inv;
        for a in 0..dim {
            b.hp[a] = two * hs * p[a];
            b.hpm[a] = -two * alpha * hs * p[a] * inv;
            b.hpp[a][a] = two * hs;
        }
        Ok(b)
    }

    /// Smallest eigenvalue of `[[-H_m, (m/2) H_pm^T], [(m/2) H_pm, m H_pp]]`.
    pub fn hessian_condition(&self, node: usize, m: T, p: &[T]) -> Result<HessianCheck<T>> {
        if !(m > T::zero()) {
            return Err(Error::Domain(format!("Hessian condition needs m > 0, got {m}")));
        }
        let b = self.eval_bundle(node, m, p)?;
        let d = b.dim;
        let n = d + 1;
        let half_m = m / T::lit(2.0);
        let mut mat = [[T::zero(); MAX_DIM + 1]; MAX_DIM + 1];
        mat[0][0] = -b.hm;
        for a in 0..d {
            mat[0][a + 1] = half_m * b.hpm[a];
            mat[a + 1][0] = half_m * b.hpm[a];
            for c in 0..d {
                mat[a + 1][c + 1] = m * b.hpp[a][c];
            }
        }
        let degenerate = p.iter().all(|v| *v == T::zero());
        let min_eigenvalue = if degenerate {
            T::zero()
        } else {
            symmetric_eigenvalues(&mut mat, n).into_iter().take(n).fold(T::infinity(), T::min)
        };
        Ok(HessianCheck {
            min_eigenvalue,
            satisfied: !degenerate && min_eigenvalue > T::zero(),
            degenerate,
        })
    }
}

/// Eigenvalues of a small symmetric matrix by cyclic Jacobi rotations.
/// Only the leading `n x n` block is used; it is overwritten.
fn symmetric_eigenvalues<T: Scalar>(a: &mut [[T; MAX_DIM + 1]; MAX_DIM + 1], n: usize) -> [T; MAX_DIM + 1] {
    for _sweep in 0..64 {
        let off = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .fold(T::zero(), |acc, (i, j)| acc + a[i][j] * a[i][j]);
        let diag = (0..n).fold(T::zero(), |acc, i| acc + a[i][i] * a[i][i]);
        if off <= T::epsilon() * T::epsilon() * diag || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q] == T::zero() {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (T::lit(2.0) * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut out = [T::zero(); MAX_DIM + 1];
    for (i, o) in out.iter_mut().enumerate().take(n) {
        *o = a[i][i];
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HessianSweepRow<T> {
    pub alpha: T,
    pub m: T,
    pub p: T,
    pub check: HessianCheck<T>,
}

/// Hessian condition of the 1D congestion Hamiltonian with `h = 1` on a
/// parameter grid.
pub fn hessian_sweep<T: Scalar>(alphas: &[T], ms: &[T], ps: &[T]) -> Result<Vec<HessianSweepRow<T>>> {
    let mut rows = Vec::with_capacity(alphas.len() * ms.len() * ps.len());
    for &alpha in alphas {
        let spec = HamiltonianSpec::congestion(vec![T::one()], alpha)?;
        for &m in ms {
            for &p in ps {
                let check = spec.hessian_condition(0, m, &[p])?;
                rows.push(HessianSweepRow { alpha, m, p, check });
            }
        }
    }
    Ok(rows)
}

pub fn write_hessian_sweep_csv<T: Scalar, W: Write>(rows: &[HessianSweepRow<T>], mut w: W) -> Result<()> {
    writeln!(w, "alpha,m,p,min_eig,satisfied")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{:.16e},{}",
            r.alpha.as_f64(),
            r.m.as_f64(),
            r.p.as_f64(),
            r.check.min_eigenvalue.as_f64(),
            r.check.satisfied
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn hand_evaluated_bundle() {
        let spec = HamiltonianSpec::congestion(vec![1.0], 1.0).unwrap();
        let b = spec.eval_bundle(0, 1.0, &[2.0]).unwrap();
        assert_eq!(b.h, 2.0);
        assert_eq!(b.hp[0], 2.0);
        assert_eq!(b.hm, -1.0);
        assert_eq!(b.hpp[0][0], 1.0);
        assert_eq!(b.hpm[0], -1.0);
        assert_eq!(b.hmm, 1.0);
    }

    #[test]
    fn zero_momentum_kills_m_derivatives() {
        let spec = HamiltonianSpec::congestion(vec![1.5, 2.0], 1.7).unwrap();
        let b = spec.eval_bundle(1, 0.4, &[0.0, 0.0]).unwrap();
        assert_eq!((b.h, b.hm, b.hmm), (0.0, 0.0, 0.0));
        assert_eq!(b.hp, [0.0, 0.0]);
        assert_eq!(b.hpm, [0.0, 0.0]);
        let expected = 4.0 / 1.4f64.powf(1.7);
        assert!(close(b.hpp[0][0], expected, 1e-15) && close(b.hpp[1][1], expected, 1e-15));
        assert_eq!(b.hpp[0][1], 0.0);
        assert_eq!(b.hpp[0][1], b.hpp[1][0]);
    }

    #[test]
    fn floor_guard() {
        let spec = HamiltonianSpec::congestion(vec![1.0], 1.0).unwrap();
        assert!(matches!(spec.eval_bundle(0, -0.5, &[1.0]), Err(Error::Domain(_))));
        assert!(spec.eval_bundle(0, -0.49, &[1.0]).is_ok());
        assert!(HamiltonianSpec::congestion(vec![1.0, -1.0], 1.0).is_err());
        assert!(HamiltonianSpec::congestion(vec![1.0], 0.0).is_err());
    }

    #[test]
    fn derivatives_match_finite_differences() {
        // Central differences of the scalar H, step 1e-5.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let step = 1e-5;
        for alpha in [0.5, 1.0, 2.0] {
            let spec = HamiltonianSpec::congestion(vec![1.3, 0.7], alpha).unwrap();
            for _ in 0..100 {
                let node = rng.gen_range(0..2);
                let m: f64 = rng.gen_range(0.1..3.0);
                let r: f64 = rng.gen_range(0.2..3.0);
                let th: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                let p = [r * th.cos(), r * th.sin()];
                let h = |m: f64, p: [f64; 2]| spec.eval_bundle(node, m, &p).unwrap();
                let b = h(m, p);
                let fd_m = (h(m + step, p).h - h(m - step, p).h) / (2.0 * step);
                assert!(close(b.hm, fd_m, 1e-6), "Hm {} vs {}", b.hm, fd_m);
                let fd_mm = (h(m + step, p).hm - h(m - step, p).hm) / (2.0 * step);
                assert!(close(b.hmm, fd_mm, 1e-6));
                for a in 0..2 {
                    let mut pp = p;
                    let mut pm = p;
                    pp[a] += step;
                    pm[a] -= step;
                    let fd_p = (h(m, pp).h - h(m, pm).h) / (2.0 * step);
                    assert!(close(b.hp[a], fd_p, 1e-6));
                    let fd_pm = (h(m + step, p).hp[a] - h(m - step, p).hp[a]) / (2.0 * step);
                    assert!(close(b.hpm[a], fd_pm, 1e-6));
                    for c in 0..2 {
                        let fd_pp = (h(m, pp).hp[c] - h(m, pm).hp[c]) / (2.0 * step);
                        assert!(close(b.hpp[c][a], fd_pp, 1e-6));
                    }
                }
                assert_eq!(b.hpp[0][1], b.hpp[1][0]);
            }
        }
    }

    #[test]
    fn hessian_positive_for_alpha_two() {
        // matrix [[0.25, -0.25], [-0.25, 0.5]]
        let spec = HamiltonianSpec::congestion(vec![1.0], 2.0).unwrap();
        let c = spec.hessian_condition(0, 1.0, &[1.0]).unwrap();
        let expected = (0.75 - (0.0625f64 * 4.0 + 0.0625).sqrt()) / 2.0;
        assert!(close(c.min_eigenvalue, expected, 1e-14), "{}", c.min_eigenvalue);
        assert!(c.satisfied && !c.degenerate);
    }

    #[test]
    fn hessian_fails_for_alpha_three_at_m_three() {
        let spec = HamiltonianSpec::congestion(vec![1.0], 3.0).unwrap();
        let c = spec.hessian_condition(0, 3.0, &[1.0]).unwrap();
        assert!(c.min_eigenvalue < 0.0 && !c.satisfied);
    }

    #[test]
    fn hessian_zero_momentum_is_degenerate() {
        let spec = HamiltonianSpec::congestion(vec![1.0], 1.0).unwrap();
        let c = spec.hessian_condition(0, 1.0, &[0.0]).unwrap();
        assert_eq!(c.min_eigenvalue, 0.0);
        assert!(!c.satisfied && c.degenerate);
        assert!(spec.hessian_condition(0, 0.0, &[1.0]).is_err());
    }

    #[test]
    fn hessian_sign_follows_determinant_reduction() {
        let alphas = [0.5, 1.0, 2.0, 2.5, 3.0];
        let ms = [0.1, 1.0, 10.0, 100.0];
        let rows = hessian_sweep(&alphas, &ms, &[0.5, 1.0, 2.0]).unwrap();
        for r in &rows {
            let sign = 2.0 * (1.0 + r.m) - r.alpha * r.m;
            assert_eq!(r.check.satisfied, sign > 0.0, "{r:?}");
        }
        for alpha in alphas {
            let all = rows.iter().filter(|r| r.alpha == alpha).all(|r| r.check.satisfied);
            assert_eq!(all, alpha <= 2.0);
        }
    }

    #[test]
    fn two_dimensional_hessian_has_transverse_direction() {
        let spec = HamiltonianSpec::congestion(vec![1.0], 1.0).unwrap();
        let c = spec.hessian_condition(0, 2.0, &[0.3, -0.4]).unwrap();
        assert!(c.satisfied);
        // eigenvalue orthogonal to p is m * 2h / (1+m)^alpha = 4/3; min is below it
        assert!(c.min_eigenvalue < 4.0 / 3.0);
    }
}
