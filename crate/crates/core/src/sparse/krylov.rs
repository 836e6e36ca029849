//! Restarted GMRES with ILU(0) right preconditioning.

use crate::error::{Error, Result};
use crate::scalar::{dot, l2_norm, Scalar};
use crate::sparse::SparseMatrix;

/// Incomplete LU factorisation on the sparsity pattern of `A`.
#[derive(Clone, Debug)]
pub struct Ilu0<T> {
    factors: SparseMatrix<T>,
    diag_pos: Vec<usize>,
}

impl<T: Scalar> Ilu0<T> {
    pub fn factor(a: &SparseMatrix<T>) -> Result<Self> {
        let n = a.n_rows();
        let row_ptr = a.row_ptr();
        let cols = a.col_idx();
        let mut vals = a.values().to_vec();
        let mut diag_pos = vec![usize::MAX; n];
        for (r, d) in diag_pos.iter_mut().enumerate() {
            if let Ok(p) = cols[row_ptr[r]..row_ptr[r + 1]].binary_search(&r) {
                *d = row_ptr[r] + p;
            } else {
                return Err(Error::SingularMatrix(format!("ILU(0): no diagonal entry in row {r}")));
            }
        }
        let mut pos = vec![usize::MAX; n];
        for i in 0..n {
            let range = row_ptr[i]..row_ptr[i + 1];
            for p in range.clone() {
                pos[cols[p]] = p;
            }
            for p in range.clone() {
                let k = cols[p];
                if k >= i {
                    break;
                }
                let pivot = vals[diag_pos[k]];
                if pivot == T::zero() {
                    return Err(Error::SingularMatrix(format!("ILU(0): zero pivot in row {k}")));
                }
                let lik = vals[p] / pivot;
                vals[p] = lik;
                for q in diag_pos[k] + 1..row_ptr[k + 1] {
                    let j = cols[q];
                    if pos[j] != usize::MAX && pos[j] >= range.start && pos[j] < range.end {
                        let delta = lik * vals[q];
                        vals[pos[j]] -= delta;
                    }
                }
            }
            for p in range {
                pos[cols[p]] = usize::MAX;
            }
            if vals[diag_pos[i]] == T::zero() {
                return Err(Error::SingularMatrix(format!("ILU(0): zero pivot in row {i}")));
            }
        }
        let factors = SparseMatrix::from_triplets(
            n,
            n,
            (0..n)
                .flat_map(|r| (row_ptr[r]..row_ptr[r + 1]).map(move |p| (r, p)))
                .map(|(r, p)| (r, cols[p], vals[p]))
                .collect(),
        )?;
        // rebuilding may prune exact zeros; recompute diagonal positions
        let fr = factors.row_ptr().to_vec();
        let fc = factors.col_idx().to_vec();
        for (r, d) in diag_pos.iter_mut().enumerate() {
            let p = fc[fr[r]..fr[r + 1]]
                .binary_search(&r)
                .map_err(|_| Error::SingularMatrix(format!("ILU(0): zero pivot in row {r}")))?;
            *d = fr[r] + p;
        }
        Ok(Self { factors, diag_pos })
    }

    /// Applies `(LU)^-1` to `x` in place.
    pub fn apply(&self, x: &mut [T]) {
        let rp = self.factors.row_ptr();
        let ci = self.factors.col_idx();
        let v = self.factors.values();
        let n = x.len();
        for i in 0..n {
            let mut s = x[i];
            for p in rp[i]..self.diag_pos[i] {
                s -= v[p] * x[ci[p]];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for p in self.diag_pos[i] + 1..rp[i + 1] {
                s -= v[p] * x[ci[p]];
            }
            x[i] = s / v[self.diag_pos[i]];
        }
    }
}

/// Outcome of a GMRES run.
#[derive(Clone, Debug)]
pub struct GmresResult<T> {
    pub x: Vec<T>,
    pub iterations: usize,
    /// `|b - Ax| / max(|b|, 1)` of the returned iterate.
    pub relative_residual: T,
}

/// Right-preconditioned restarted GMRES; stops when the true relative
/// residual `|b - Ax| / max(|b|, 1)` falls below `tol`.
pub fn gmres<T: Scalar>(
    a: &SparseMatrix<T>,
    b: &[T],
    precond: &Ilu0<T>,
    tol: T,
    max_iter: usize,
    restart: usize,
) -> Result<GmresResult<T>> {
    let n = b.len();
    let scale = l2_norm(b).max(T::one());
    let mut x = vec![T::zero(); n];
    let mut iterations = 0;
    let restart = restart.max(1);

    loop {
        let ax = a.mul_vec(&x);
        let r: Vec<T> = b.iter().zip(&ax).map(|(&bi, &ai)| bi - ai).collect();
        let beta = l2_norm(&r);
        if beta / scale <= tol {
            return Ok(GmresResult {
                x,
                iterations,
                relative_residual: beta / scale,
            });
        }
        if iterations >= max_iter {
            return Err(Error::NoConvergence {
                iterations,
                residual: (beta / scale).as_f64(),
            });
        }
        let mut basis: Vec<Vec<T>> = vec![r.iter().map(|&v| v / beta).collect()];
        let mut hess: Vec<Vec<T>> = Vec::new();
        let mut cs: Vec<T> = Vec::new();
        let mut sn: Vec<T> = Vec::new();
        let mut g = vec![beta];
        let mut inner = 0;
        while inner < restart && iterations < max_iter {
            let mut z = basis[inner].clone();
            precond.apply(&mut z);
            let mut w = a.mul_vec(&z);
            let mut h = vec![T::zero(); inner + 2];
            // modified Gram-Schmidt
            for (j, v) in basis.iter().enumerate() {
                let hij = dot(&w, v);
                h[j] = hij;
                for (wi, &vi) in w.iter_mut().zip(v) {
                    *wi -= hij * vi;
                }
            }
            let wn = l2_norm(&w);
            h[inner + 1] = wn;
            for j in 0..inner {
                let t = cs[j] * h[j] + sn[j] * h[j + 1];
                h[j + 1] = -sn[j] * h[j] + cs[j] * h[j + 1];
                h[j] = t;
            }
            let denom = (h[inner] * h[inner] + h[inner + 1] * h[inner + 1]).sqrt();
            let (c, s) = if denom == T::zero() {
                (T::one(), T::zero())
            } else {
                (h[inner] / denom, h[inner + 1] / denom)
            };
            cs.push(c);
            sn.push(s);
            h[inner] = c * h[inner] + s * h[inner + 1];
            h[inner + 1] = T::zero();
            let gi = g[inner];
            g[inner] = c * gi;
            g.push(-s * gi);
            hess.push(h);
            iterations += 1;
            inner += 1;
            if (g[inner].abs() / scale) <= tol * T::lit(0.5) || wn == T::zero() {
                break;
            }
            basis.push(w.into_iter().map(|v| v / wn).collect());
        }
        // back substitution for the least-squares coefficients
        let mut y = vec![T::zero(); inner];
        for i in (0..inner).rev() {
            let mut s = g[i];
            for j in i + 1..inner {
                s -= hess[j][i] * y[j];
            }
            y[i] = s / hess[i][i];
        }
        let mut update = vec![T::zero(); n];
        for (j, &yj) in y.iter().enumerate() {
            for (u, &v) in update.iter_mut().zip(&basis[j]) {
                *u += yj * v;
            }
        }
        precond.apply(&mut update);
        for (xi, ui) in x.iter_mut().zip(update) {
            *xi += ui;
        }
    }
}
