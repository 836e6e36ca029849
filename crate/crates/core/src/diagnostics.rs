//! Manufactured problems, error norms against a reference and convergence
//! order fits.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::coupling::{KernelCoupling, LocalCoupling};
use crate::error::{Error, Result};
use crate::grid::{norms, Field, FieldRole, GridSpec, VectorField};
use crate::hamiltonian::HamiltonianSpec;
use crate::scalar::Scalar;
use crate::solver::{residual, ProblemSpec, Residual, SolverState};

/// Amplitude of the manufactured value function.
pub const MANUFACTURED_U_AMPLITUDE: f64 = 0.3;
/// Amplitude of the manufactured density oscillation.
pub const MANUFACTURED_M_AMPLITUDE: f64 = 0.3;

pub const HISTORY_HEADER: &str = "iter,res_u_sup,res_m_sup,err_c10_u,err_c0_m,err_sum,mass_min,mass_max,wall_ms";

/// Diagnostics of one iterate.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub res_u_sup: f64,
    pub res_m_sup: f64,
    /// `|u - u_ref|` in the `C^{1,0}` norm.
    pub err_c10_u: Option<f64>,
    /// `|m - m_ref|` in the sup norm.
    pub err_c0_m: Option<f64>,
    pub err_sum: Option<f64>,
    pub mass_min: f64,
    pub mass_max: f64,
    pub wall_ms: f64,
}

impl IterationRecord {
    pub fn new<T: Scalar>(
        iter: usize,
        r: &Residual<T>,
        state: &SolverState<T>,
        reference: Option<&SolverState<T>>,
        wall_ms: f64,
    ) -> Result<Self> {
        let (err_c10_u, err_c0_m) = match reference {
            Some(re) => {
                let (eu, em) = error_norms(state, re)?;
                (Some(eu.as_f64()), Some(em.as_f64()))
            }
            None => (None, None),
        };
        let masses = state.m.slice_masses();
        Ok(Self {
            iter,
            res_u_sup: r.sup_u().as_f64(),
            res_m_sup: r.sup_m().as_f64(),
            err_c10_u,
            err_c0_m,
            err_sum: err_c10_u.zip(err_c0_m).map(|(a, b)| a + b),
            mass_min: masses.iter().fold(f64::INFINITY, |a, m| a.min(m.as_f64())),
            mass_max: masses.iter().fold(f64::NEG_INFINITY, |a, m| a.max(m.as_f64())),
            wall_ms,
        })
    }

    pub fn res_sup(&self) -> f64 {
        self.res_u_sup.max(self.res_m_sup)
    }

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6e}")).unwrap_or_default();
        format!(
            "{},{:.6e},{:.6e},{},{},{},{:.15},{:.15},{:.3}",
            self.iter,
            self.res_u_sup,
            self.res_m_sup,
            opt(self.err_c10_u),
            opt(self.err_c0_m),
            opt(self.err_sum),
            self.mass_min,
            self.mass_max,
            self.wall_ms
        )
    }
}

/// Writes the header, one row per record and the fit comment when given.
pub fn write_history_csv<W: Write>(mut w: W, records: &[IterationRecord], fit: Option<&RateFit>) -> Result<()> {
    writeln!(w, "{HISTORY_HEADER}")?;
    for r in records {
        writeln!(w, "{}", r.csv_row())?;
    }
    if let Some(f) = fit {
        writeln!(w, "{}", f.csv_comment())?;
    }
    Ok(())
}

/// `(|u - u_ref|_{C^{1,0}}, |m - m_ref|_{C^0})`.
pub fn error_norms<T: Scalar>(state: &SolverState<T>, reference: &SolverState<T>) -> Result<(T, T)> {
    Ok((
        norms(&state.u, Some(&reference.u))?.c10,
        norms(&state.m, Some(&reference.m))?.c0,
    ))
}

/// Least-squares fit of `log e_{n+1} = q log e_n + log c`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateFit {
    pub q: f64,
    pub log_c: f64,
    /// Number of `(e_n, e_{n+1})` pairs used.
    pub points: usize,
    /// Euclidean norm of the fit residuals in log space.
    pub residual: f64,
    /// First entry at or below the floor, if any.
    pub floor_index: Option<usize>,
}

impl RateFit {
    pub fn c(&self) -> f64 {
        self.log_c.exp()
    }

    pub fn csv_comment(&self) -> String {
        format!("# fit: q={:.6} c={:.6e} n={}", self.q, self.c(), self.points)
    }
}

/// Fits the convergence order on the leading run of entries above `floor`.
pub fn fit_rate(errors: &[f64], floor: f64) -> Result<RateFit> {
    let floor_index = errors.iter().position(|&e| !(e > floor) || !e.is_finite());
    let usable = &errors[..floor_index.unwrap_or(errors.len())];
    if usable.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} entries above the floor {floor:e}, need at least 3",
            usable.len()
        )));
    }
    let logs: Vec<f64> = usable.iter().map(|e| e.ln()).collect();
    let xs = &logs[..logs.len() - 1];
    let ys = &logs[1..];
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("error sequence is constant".into()));
    }
    let q = sxy / sxx;
    let log_c = my - q * mx;
    let residual = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - q * x - log_c).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(RateFit {
        q,
        log_c,
        points: xs.len(),
        residual,
        floor_index,
    })
}

fn exact_fields<T: Scalar>(grid: &GridSpec<T>) -> Result<SolverState<T>> {
    let tau = T::TAU();
    let horizon = grid.horizon();
    let a = T::lit(MANUFACTURED_U_AMPLITUDE);
    let b = T::lit(MANUFACTURED_M_AMPLITUDE);
    let u = Field::from_fn(*grid, FieldRole::ValueFunction, |t, x| {
        a * x.iter().fold(T::one(), |acc, &xi| acc * (tau * xi).cos()) * (horizon - t) / horizon
    })?;
    let m = Field::from_fn(*grid, FieldRole::Density, |t, x| {
        T::one() + b * x.iter().fold(T::one(), |acc, &xi| acc * (tau * xi).sin()) * (T::one() - t / horizon)
    })?;
    SolverState::new(u, m)
}

fn attach_sources<T: Scalar>(problem: ProblemSpec<T>, exact: &SolverState<T>) -> Result<ProblemSpec<T>> {
    let r = residual(&problem, exact)?;
    problem.with_sources(r.u, r.m)
}

/// Problem whose sources make the sampled fields
/// `u = A cos(2 pi x) (T - t) / T`, `m = 1 + B sin(2 pi x) (1 - t / T)`
/// (products over the axes in two dimensions) an exact discrete root.
pub fn make_manufactured<T: Scalar>(
    grid: &GridSpec<T>,
    hamiltonian: &HamiltonianSpec<T>,
    coupling: LocalCoupling<T>,
) -> Result<(ProblemSpec<T>, SolverState<T>)> {
    let exact = exact_fields(grid)?;
    let nt = grid.nt();
    let base = ProblemSpec::local(
        *grid,
        hamiltonian.clone(),
        coupling,
        exact.m.slice(0).to_vec(),
        exact.u.slice(nt).to_vec(),
    )?;
    let problem = attach_sources(base, &exact)?;
    Ok((problem, exact))
}

/// Nonlocal counterpart of [`make_manufactured`]; the terminal source slot
/// absorbs `u(T) - g[m(T)]`.
pub fn make_manufactured_nonlocal<T: Scalar>(
    grid: &GridSpec<T>,
    hamiltonian: &HamiltonianSpec<T>,
    f: KernelCoupling<T>,
    g: KernelCoupling<T>,
) -> Result<(ProblemSpec<T>, SolverState<T>)> {
    let exact = exact_fields(grid)?;
    let base = ProblemSpec::nonlocal(*grid, hamiltonian.clone(), f, g, exact.m.slice(0).to_vec())?;
    let problem = attach_sources(base, &exact)?;
    Ok((problem, exact))
}

/// `u + eps cos(2 pi x) (T - t)`, `m + eps sin(2 pi x) t / T`; the density
/// perturbation has zero mass on every slice and vanishes at `t = 0`.
pub fn perturbed_start<T: Scalar>(reference: &SolverState<T>, eps: T) -> Result<SolverState<T>> {
    let g = *reference.grid();
    let tau = T::TAU();
    let horizon = g.horizon();
    let du = Field::from_fn(g, FieldRole::Perturbation, |t, x| eps * (tau * x[0]).cos() * (horizon - t))?;
    let dm = Field::from_fn(g, FieldRole::Perturbation, |t, x| eps * (tau * x[0]).sin() * t / horizon)?;
    SolverState::new(
        reference.u.zip_map(&du, |a, b| a + b)?,
        reference.m.zip_map(&dm, |a, b| a + b)?,
    )
}

const FORCING_SPACE_MODES: usize = 3;
const FORCING_TIME_MODES: usize = 3;

fn random_smooth<T: Scalar>(grid: &GridSpec<T>, rng: &mut ChaCha8Rng) -> Result<Field<T>> {
    let d = grid.dim();
    // coefficients for cos/sin in each axis, per spatial and temporal mode
    let n_terms = FORCING_TIME_MODES * FORCING_SPACE_MODES.pow(d as u32) * 2usize.pow(d as u32);
    let coef: Vec<f64> = (0..n_terms).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let horizon = grid.horizon().as_f64();
    Field::from_fn(*grid, FieldRole::Perturbation, |t, x| {
        let t = t.as_f64() / horizon;
        let mut acc = 0.0;
        let mut c = coef.iter();
        for l in 0..FORCING_TIME_MODES {
            let tm = (std::f64::consts::PI * l as f64 * t).cos();
            for combo in 0..FORCING_SPACE_MODES.pow(d as u32) * 2usize.pow(d as u32) {
                let mut rest = combo;
                let mut prod = 1.0;
                for xi in x.iter().take(d) {
                    let j = rest % FORCING_SPACE_MODES;
                    rest /= FORCING_SPACE_MODES;
                    let phase = rest % 2;
                    rest /= 2;
                    let arg = std::f64::consts::TAU * j as f64 * xi.as_f64();
                    prod *= if phase == 0 { arg.cos() } else { arg.sin() };
                }
                acc += c.next().copied().unwrap_or(0.0) * prod * tm;
            }
        }
        T::lit(acc)
    })
}

/// Seeded smooth forcing `(a, b)` built from low Fourier modes, scaled so
/// that `|a|_{C^0} + |b|_{C^0} = 1`. Distinct `draw` values give
/// independent streams for the same seed.
pub fn random_smooth_forcing<T: Scalar>(grid: &GridSpec<T>, seed: u64, draw: u64) -> Result<(Field<T>, VectorField<T>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(draw);
    let a = random_smooth(grid, &mut rng)?;
    let comps = (0..grid.dim())
        .map(|_| random_smooth(grid, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let b = VectorField::new(comps)?;
    let total = crate::scalar::sup_norm(a.values()) + b.sup_norm();
    if !(total > T::zero()) {
        return Err(Error::InvalidInput("degenerate random forcing".into()));
    }
    let a = a.map(|v| v / total)?;
    let b = VectorField::new(
        b.components()
            .iter()
            .map(|c| c.map(|v| v / total))
            .collect::<Result<Vec<_>>>()?,
    )?;
    Ok((a, b))
}
