use crate::coupling::NonlocalEval;
use crate::error::{Error, Result};
use crate::grid::{Field, FieldRole, GridSpec};
use crate::hamiltonian::{HamiltonianBundle, HamiltonianSpec};
use crate::scalar::{sup_norm, Scalar};
use crate::solver::{CouplingSpec, ProblemSpec, SolverState};

/// Discrete residual of both equations, boundary rows included:
/// `u[nt]` holds the terminal-condition row and `m[0]` the initial one.
#[derive(Clone, Debug, PartialEq)]
pub struct Residual<T> {
    pub u: Field<T>,
    pub m: Field<T>,
}

impl<T: Scalar> Residual<T> {
    pub fn sup_u(&self) -> T {
        sup_norm(self.u.values())
    }

    pub fn sup_m(&self) -> T {
        sup_norm(self.m.values())
    }

    pub fn sup(&self) -> T {
        self.sup_u().max(self.sup_m())
    }
}

/// Hamiltonian bundles on one time slice at `(x, m[k](x), D u[k](x))`.
pub(crate) fn slice_bundles<T: Scalar>(
    grid: &GridSpec<T>,
    hamiltonian: &HamiltonianSpec<T>,
    u: &[T],
    m: &[T],
) -> Result<Vec<HamiltonianBundle<T>>> {
    let grad = grid.gradient_slice(u);
    let d = grid.dim();
    let mut p = [T::zero(); crate::grid::MAX_DIM];
    (0..grid.spatial_len())
        .map(|s| {
            for a in 0..d {
                p[a] = grad[a][s];
            }
            hamiltonian.eval_bundle(s, m[s], &p[..d])
        })
        .collect()
}

/// Nonlocal `f` evaluations on slices `0..nt` and `g` on slice `nt`.
pub(crate) fn nonlocal_evals<T: Scalar>(
    coupling: &CouplingSpec<T>,
    m: &Field<T>,
) -> Option<(Vec<NonlocalEval<T>>, NonlocalEval<T>)> {
    match coupling {
        CouplingSpec::Nonlocal { f, g } => {
            let nt = m.grid().nt();
            let fe = (0..nt).map(|k| f.nonlocal_eval(m.slice(k))).collect();
            Some((fe, g.nonlocal_eval(m.slice(nt))))
        }
        CouplingSpec::Local { .. } => None,
    }
}

fn source_slice<T: Scalar>(src: Option<&Field<T>>, k: usize, n: usize) -> Vec<T> {
    src.map(|f| f.slice(k).to_vec()).unwrap_or_else(|| vec![T::zero(); n])
}

pub fn residual<T: Scalar>(problem: &ProblemSpec<T>, state: &SolverState<T>) -> Result<Residual<T>> {
    let g = *problem.grid();
    if *state.grid() != g {
        return Err(Error::InvalidInput("state does not live on the problem grid".into()));
    }
    let (nt, nsp) = (g.nt(), g.spatial_len());
    let inv_dt = T::one() / g.dt();
    let h = problem.hamiltonian();
    let nonlocal = nonlocal_evals(problem.coupling(), &state.m);

    let mut ru = Vec::with_capacity(g.len());
    let mut rm = vec![T::zero(); g.len()];

    for k in 0..nt {
        let u = state.u.slice(k);
        let m = state.m.slice(k);
        let next = state.u.slice(k + 1);
        let lap = g.laplacian_slice(u);
        let bundles = slice_bundles(&g, h, u, m)?;
        let src = source_slice(problem.source_u(), k, nsp);
        for s in 0..nsp {
            let coupling = match (problem.coupling(), &nonlocal) {
                (CouplingSpec::Local { f, .. }, _) => f.local_eval(m[s])?.f,
                (_, Some((fe, _))) => fe[k].values[s],
                _ => unreachable!("nonlocal evaluations exist for nonlocal couplings"),
            };
            ru.push(-(next[s] - u[s]) * inv_dt - lap[s] + bundles[s].h - coupling - src[s]);
        }
    }
    let src = source_slice(problem.source_u(), nt, nsp);
    let terminal: Vec<T> = match (problem.coupling(), &nonlocal) {
        (CouplingSpec::Local { terminal, .. }, _) => terminal.clone(),
        (_, Some((_, ge))) => ge.values.clone(),
        _ => unreachable!(),
    };
    for s in 0..nsp {
        ru.push(state.u.at(nt, s) - terminal[s] - src[s]);
    }

    let src = source_slice(problem.source_m(), 0, nsp);
    for s in 0..nsp {
        rm[s] = state.m.at(0, s) - problem.m0()[s] - src[s];
    }
    for k in 1..=nt {
        let u = state.u.slice(k);
        let m = state.m.slice(k);
        let prev = state.m.slice(k - 1);
        let lap = g.laplacian_slice(m);
        let bundles = slice_bundles(&g, h, u, m)?;
        let flux: Vec<Vec<T>> = (0..g.dim())
            .map(|a| (0..nsp).map(|s| m[s] * bundles[s].hp[a]).collect())
            .collect();
        let div = g.divergence_slice(&flux);
        let src = source_slice(problem.source_m(), k, nsp);
        for s in 0..nsp {
            rm[k * nsp + s] = (m[s] - prev[s]) * inv_dt - lap[s] - div[s] - src[s];
        }
    }
    Ok(Residual {
        u: Field::new(g, FieldRole::Perturbation, ru)?,
        m: Field::new(g, FieldRole::Perturbation, rm)?,
    })
}
