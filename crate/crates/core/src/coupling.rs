//! Density couplings: local `f(m)` and nonlocal kernel couplings
//! `f[m](x) = w * phi((K * m)(x))` with their measure derivatives.

use std::io::Write;

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LocalCoupling<T> {
    /// `1 / (1 + e^-m)`.
    Sigmoid,
    Linear,
    /// `m^alpha` on `m >= 0`, `alpha >= 2`.
    Power { alpha: T },
    Zero,
}

/// `f`, `f'` and `f''` at one density value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CouplingValue<T> {
    pub f: T,
    pub f1: T,
    pub f2: T,
}

impl<T: Scalar> LocalCoupling<T> {
    pub fn power(alpha: T) -> Result<Self> {
        if !(alpha >= T::lit(2.0)) {
            return Err(Error::InvalidInput(format!("power coupling needs alpha >= 2, got {alpha}")));
        }
        Ok(LocalCoupling::Power { alpha })
    }

    pub fn local_eval(&self, m: T) -> Result<CouplingValue<T>> {
        let one = T::one();
        Ok(match *self {
            LocalCoupling::Sigmoid => {
                let s = sigmoid(m);
                CouplingValue {
                    f: s,
                    f1: s * (one - s),
                    f2: s * (one - s) * (one - T::lit(2.0) * s),
                }
            }
            LocalCoupling::Linear => CouplingValue {
                f: m,
                f1: one,
                f2: T::zero(),
            },
            LocalCoupling::Power { alpha } => {
                if m < T::zero() {
                    return Err(Error::Domain(format!("power coupling evaluated at m = {m} < 0")));
                }
                CouplingValue {
                    f: m.powf(alpha),
                    f1: alpha * m.powf(alpha - one),
                    f2: alpha * (alpha - one) * m.powf(alpha - T::lit(2.0)),
                }
            }
            LocalCoupling::Zero => CouplingValue {
                f: T::zero(),
                f1: T::zero(),
                f2: T::zero(),
            },
        })
    }
}

fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Outer map `phi` applied after the convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelOuter {
    Identity,
    Sigmoid,
}

/// Convolution coupling on a periodic grid.
///
/// The kernel is even, has nonnegative discrete Fourier coefficients and is
/// normalised to unit discrete mean, `dx^d sum K = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelCoupling<T> {
    grid: GridSpec<T>,
    kernel: Vec<T>,
    outer: KernelOuter,
    weight: T,
    sigma: Option<T>,
}

/// Result of evaluating a kernel coupling on one density slice.
#[derive(Clone, Debug, PartialEq)]
pub struct NonlocalEval<T> {
    /// `f[m](x)` at every node.
    pub values: Vec<T>,
    /// `(K * m)(x)`.
    pub convolution: Vec<T>,
    /// `w * phi'((K * m)(x))`.
    pub slope: Vec<T>,
    pub mass: T,
    kernel: Vec<T>,
    grid: GridSpec<T>,
}

impl<T: Scalar> NonlocalEval<T> {
    /// Measure derivative `df/dm[m](x)(y)`, normalised so that its integral
    /// against `m` vanishes.
    pub fn deriv(&self, x: usize, y: usize) -> T {
        let k = self.kernel[self.grid.difference(x, y)];
        self.slope[x] * (k - self.normalization(x))
    }

    fn normalization(&self, x: usize) -> T {
        if self.mass != T::zero() {
            self.convolution[x] / self.mass
        } else {
            T::zero()
        }
    }

    /// `dx^d sum_y df/dm[m](x)(y) dm(y)` for every `x`.
    pub fn apply_deriv(&self, dm: &[T]) -> Vec<T> {
        let conv = convolve(&self.grid, &self.kernel, dm);
        let dmass = self.grid.slice_mass(dm);
        conv.iter()
            .enumerate()
            .map(|(x, &c)| self.slope[x] * (c - self.normalization(x) * dmass))
            .collect()
    }
}

/// `dx^d sum_y K(x - y) m(y)`.
fn convolve<T: Scalar>(grid: &GridSpec<T>, kernel: &[T], m: &[T]) -> Vec<T> {
    let n = grid.spatial_len();
    let vol = grid.cell_volume();
    (0..n)
        .map(|x| (0..n).fold(T::zero(), |acc, y| acc + kernel[grid.difference(x, y)] * m[y]) * vol)
        .collect()
}

impl<T: Scalar> KernelCoupling<T> {
    /// Periodised Gaussian of width `sigma`, product form in two dimensions.
    pub fn gaussian(grid: GridSpec<T>, sigma: T) -> Result<Self> {
        if !(sigma > T::zero()) || !sigma.is_finite() {
            return Err(Error::InvalidInput(format!("kernel sigma must be positive, got {sigma}")));
        }
        let nx = grid.nx();
        let images = (sigma.as_f64() * 8.0).ceil() as i64 + 1;
        let two_s2 = T::lit(2.0) * sigma * sigma;
        // 1D profile evaluated on the folded distance so that K(i) == K(nx - i) bitwise.
        let profile: Vec<T> = (0..nx)
            .map(|i| {
                let r = T::of_usize(i.min(nx - i)) * grid.dx();
                (-images..=images).fold(T::zero(), |acc, n| {
                    let d = r - T::lit(n as f64);
                    acc + (-(d * d) / two_s2).exp()
                })
            })
            .collect();
        let raw: Vec<T> = (0..grid.spatial_len())
            .map(|s| {
                let idx = grid.multi_index(s);
                (0..grid.dim()).fold(T::one(), |acc, a| acc * profile[idx[a]])
            })
            .collect();
        let mut c = Self::from_samples(grid, raw)?;
        c.sigma = Some(sigma);
        Ok(c)
    }

    /// Kernel from samples indexed by displacement node. The samples are
    /// rescaled to unit discrete mean.
    pub fn from_samples(grid: GridSpec<T>, samples: Vec<T>) -> Result<Self> {
        if samples.len() != grid.spatial_len() {
            return Err(Error::InvalidInput(format!(
                "kernel has {} samples, grid has {} spatial nodes",
                samples.len(),
                grid.spatial_len()
            )));
        }
        for s in 0..samples.len() {
            let mirror = grid.difference(0, s);
            if samples[s] != samples[mirror] {
                return Err(Error::InvalidInput(format!("kernel is not even at node {s}")));
            }
        }
        let mean = grid.slice_mass(&samples);
        if !(mean > T::zero()) {
            return Err(Error::InvalidInput("kernel must have positive mean".into()));
        }
        let kernel: Vec<T> = samples.into_iter().map(|v| v / mean).collect();
        let c = Self {
            grid,
            kernel,
            outer: KernelOuter::Identity,
            weight: T::one(),
            sigma: None,
        };
        let tol = T::lit(-1e3) * T::epsilon();
        if let Some((k, v)) = c.fourier_coefficients().into_iter().enumerate().find(|(_, v)| *v < tol) {
            return Err(Error::InvalidInput(format!("kernel Fourier coefficient {k} is negative ({v})")));
        }
        Ok(c)
    }

    pub fn with_outer(mut self, outer: KernelOuter) -> Self {
        self.outer = outer;
        self
    }

    pub fn with_weight(mut self, weight: T) -> Self {
        self.weight = weight;
        self
    }

    pub fn grid(&self) -> &GridSpec<T> {
        &self.grid
    }

    pub fn kernel(&self) -> &[T] {
        &self.kernel
    }

    pub fn sigma(&self) -> Option<T> {
        self.sigma
    }

    pub fn outer(&self) -> KernelOuter {
        self.outer
    }

    pub fn weight(&self) -> T {
        self.weight
    }

    /// Discrete Fourier coefficients `sum_s K(s) cos(2 pi k.s / nx)` (real
    /// because the kernel is even).
    pub fn fourier_coefficients(&self) -> Vec<T> {
        let g = &self.grid;
        let n = g.spatial_len();
        let tau = T::TAU() / T::of_usize(g.nx());
        (0..n)
            .map(|k| {
                let kk = g.multi_index(k);
                (0..n).fold(T::zero(), |acc, s| {
                    let ss = g.multi_index(s);
                    let phase = (0..g.dim()).fold(0usize, |p, a| p + kk[a] * ss[a]) % g.nx();
                    acc + self.kernel[s] * (tau * T::of_usize(phase)).cos()
                })
            })
            .collect()
    }

    pub fn nonlocal_eval(&self, m: &[T]) -> NonlocalEval<T> {
        let convolution = convolve(&self.grid, &self.kernel, m);
        let (values, slope) = convolution
            .iter()
            .map(|&c| match self.outer {
                KernelOuter::Identity => (self.weight * c, self.weight),
                KernelOuter::Sigmoid => {
                    let s = sigmoid(c);
                    (self.weight * s, self.weight * s * (T::one() - s))
                }
            })
            .unzip();
        NonlocalEval {
            values,
            convolution,
            slope,
            mass: self.grid.slice_mass(m),
            kernel: self.kernel.clone(),
            grid: self.grid,
        }
    }

    /// Sup over `x` of the first-order Taylor remainder of `f` from `m` to `m2`.
    pub fn nonlocal_taylor_gap(&self, m: &[T], m2: &[T]) -> T {
        let base = self.nonlocal_eval(m);
        let target = self.nonlocal_eval(m2);
        let dm: Vec<T> = m2.iter().zip(m).map(|(&a, &b)| a - b).collect();
        let lin = base.apply_deriv(&dm);
        (0..m.len())
            .map(|x| (target.values[x] - base.values[x] - lin[x]).abs())
            .fold(T::zero(), T::max)
    }

    /// Writes `i[,j],value` rows of the normalised kernel.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let g = &self.grid;
        match g.dim() {
            1 => writeln!(w, "i,value")?,
            _ => writeln!(w, "i,j,value")?,
        }
        for (s, v) in self.kernel.iter().enumerate() {
            let idx = g.multi_index(s);
            match g.dim() {
                1 => writeln!(w, "{},{:.16e}", idx[0], v.as_f64())?,
                _ => writeln!(w, "{},{},{:.16e}", idx[0], idx[1], v.as_f64())?,
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(nx: usize) -> GridSpec<f64> {
        GridSpec::new(1, nx, 2, 1.0).unwrap()
    }

    fn random_density(rng: &mut ChaCha8Rng, g: &GridSpec<f64>) -> Vec<f64> {
        let raw: Vec<f64> = (0..g.spatial_len()).map(|_| rng.gen_range(0.1..2.0)).collect();
        let mass = g.slice_mass(&raw);
        raw.into_iter().map(|v| v / mass).collect()
    }

    #[test]
    fn local_values() {
        let c = LocalCoupling::<f64>::Sigmoid.local_eval(0.0).unwrap();
        assert_eq!((c.f, c.f1, c.f2), (0.5, 0.25, 0.0));
        let c = LocalCoupling::<f64>::Linear.local_eval(2.5).unwrap();
        assert_eq!((c.f, c.f1, c.f2), (2.5, 1.0, 0.0));
        let p = LocalCoupling::power(2.0).unwrap();
        let c = p.local_eval(1.5).unwrap();
        assert_eq!((c.f, c.f1, c.f2), (2.25, 3.0, 2.0));
        assert!(matches!(p.local_eval(-0.1), Err(Error::Domain(_))));
        assert!(LocalCoupling::<f64>::power(1.5).is_err());
        let z = LocalCoupling::<f64>::Zero.local_eval(4.0).unwrap();
        assert_eq!((z.f, z.f1, z.f2), (0.0, 0.0, 0.0));
    }

    #[test]
    fn local_derivatives_match_finite_differences() {
        let h = 1e-5;
        for c in [LocalCoupling::Sigmoid, LocalCoupling::Linear, LocalCoupling::Power { alpha: 2.5 }] {
            for i in 0..30 {
                let m = 0.1 + 2.9 * i as f64 / 29.0;
                let v = c.local_eval(m).unwrap();
                let fp = c.local_eval(m + h).unwrap();
                let fm = c.local_eval(m - h).unwrap();
                let d1 = (fp.f - fm.f) / (2.0 * h);
                let d2 = (fp.f1 - fm.f1) / (2.0 * h);
                assert!((v.f1 - d1).abs() <= 1e-6 * v.f1.abs().max(1.0));
                assert!((v.f2 - d2).abs() <= 1e-6 * v.f2.abs().max(1.0));
            }
        }
        for i in -50..=50 {
            assert!(LocalCoupling::Sigmoid.local_eval(i as f64 * 0.3).unwrap().f1 >= 0.0);
        }
    }

    #[test]
    fn gaussian_is_even_with_nonnegative_spectrum() {
        for (dim, nx) in [(1, 32), (2, 8)] {
            let g = GridSpec::<f64>::new(dim, nx, 2, 1.0).unwrap();
            let k = KernelCoupling::gaussian(g, 0.1).unwrap();
            for s in 0..g.spatial_len() {
                assert_eq!(k.kernel()[s], k.kernel()[g.difference(0, s)]);
            }
            assert!(k.fourier_coefficients().iter().all(|&c| c >= -1e-12));
            assert!((g.slice_mass(k.kernel()) - 1.0).abs() < 1e-13);
        }
        let g = grid(8);
        assert!(KernelCoupling::from_samples(g, vec![1.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).is_err());
        // even but with a negative Fourier coefficient: 1 + 2 cos(2 pi k / 8) * ... at k = 4
        assert!(KernelCoupling::from_samples(g, vec![1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn uniform_density_gives_kernel_mean() {
        let g = grid(32);
        let k = KernelCoupling::gaussian(g, 0.1).unwrap();
        let ev = k.nonlocal_eval(&vec![1.0; 32]);
        let mean = g.slice_mass(k.kernel());
        assert!(ev.values.iter().all(|&v| (v - mean).abs() < 1e-14));
    }

    #[test]
    fn spike_density_reproduces_kernel() {
        let g = grid(16);
        let k = KernelCoupling::gaussian(g, 0.07).unwrap();
        let j = 5;
        let mut m = vec![0.0; 16];
        m[j] = 16.0; // unit mass
        let ev = k.nonlocal_eval(&m);
        for x in 0..16 {
            // direct summation over the 16 terms
            let direct: f64 = (0..16).map(|y| k.kernel()[(x + 16 - y) % 16] * m[y]).sum::<f64>() / 16.0;
            assert!((ev.values[x] - direct).abs() < 1e-14);
            assert!((ev.values[x] - k.kernel()[(x + 16 - j) % 16]).abs() < 1e-13);
        }
    }

    #[test]
    fn convolution_coupling_is_monotone() {
        let g = grid(32);
        let k = KernelCoupling::gaussian(g, 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let m = random_density(&mut rng, &g);
            let m2 = random_density(&mut rng, &g);
            let (a, b) = (k.nonlocal_eval(&m), k.nonlocal_eval(&m2));
            let pairing: f64 = (0..32).map(|x| (a.values[x] - b.values[x]) * (m[x] - m2[x])).sum::<f64>() / 32.0;
            assert!(pairing >= -1e-12, "{pairing}");
        }
    }

    #[test]
    fn linearity_and_normalisation() {
        let g = grid(32);
        let k = KernelCoupling::gaussian(g, 0.15).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m1 = random_density(&mut rng, &g);
        let m2 = random_density(&mut rng, &g);
        let comb: Vec<f64> = m1.iter().zip(&m2).map(|(a, b)| 2.0 * a - 0.5 * b).collect();
        let (e1, e2, ec) = (k.nonlocal_eval(&m1), k.nonlocal_eval(&m2), k.nonlocal_eval(&comb));
        for x in 0..32 {
            assert!((ec.values[x] - (2.0 * e1.values[x] - 0.5 * e2.values[x])).abs() < 1e-13);
            let integral: f64 = (0..32).map(|y| e1.deriv(x, y) * m1[y]).sum::<f64>() / 32.0;
            assert!(integral.abs() < 1e-12);
        }
    }

    #[test]
    fn taylor_gap_vanishes_for_linear_coupling() {
        let g = grid(32);
        let k = KernelCoupling::gaussian(g, 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random_density(&mut rng, &g);
        let m2 = random_density(&mut rng, &g);
        assert!(k.nonlocal_taylor_gap(&m, &m2) < 1e-14);
        assert_eq!(k.nonlocal_taylor_gap(&m, &m), 0.0);
    }

    #[test]
    fn taylor_gap_is_second_order_for_sigmoid_outer() {
        let g = grid(32);
        let k = KernelCoupling::gaussian(g, 0.1).unwrap().with_outer(KernelOuter::Sigmoid);
        let m: Vec<f64> = (0..32).map(|s| 1.0 + 0.4 * (std::f64::consts::TAU * g.coordinate(s, 0)).cos()).collect();
        let psi: Vec<f64> = (0..32).map(|s| (std::f64::consts::TAU * 2.0 * g.coordinate(s, 0)).sin()).collect();
        let gaps: Vec<f64> = [1e-1, 1e-2, 1e-3]
            .iter()
            .map(|eps| {
                let m2: Vec<f64> = m.iter().zip(&psi).map(|(a, b)| a + eps * b).collect();
                k.nonlocal_taylor_gap(&m, &m2)
            })
            .collect();
        for w in gaps.windows(2) {
            let ratio = w[0] / w[1];
            assert!((80.0..125.0).contains(&ratio), "{gaps:?}");
        }
    }

    #[test]
    fn narrow_kernel_tends_to_identity() {
        let g = grid(16);
        let k = KernelCoupling::gaussian(g, 1.0 / 16.0 / 8.0).unwrap();
        let m: Vec<f64> = (0..16).map(|s| 1.0 + 0.3 * (std::f64::consts::TAU * g.coordinate(s, 0)).sin()).collect();
        let ev = k.nonlocal_eval(&m);
        for x in 0..16 {
            assert!((ev.values[x] - m[x]).abs() < 1e-12);
        }
    }

    #[test]
    fn kernel_csv() {
        let g = grid(8);
        let k = KernelCoupling::gaussian(g, 0.2).unwrap();
        let mut buf = Vec::new();
        k.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("i,value"));
        assert_eq!(text.lines().count(), 9);
    }
}
