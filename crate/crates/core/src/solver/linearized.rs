use crate::error::{Error, Result};
use crate::grid::{divergence, Field, FieldRole, GridSpec, VectorField};
use crate::scalar::Scalar;
use crate::solver::operator::{AssembledSystem, LinearizedOperator, Mode};
use crate::solver::{ProblemSpec, Residual, SolverState};
use crate::sparse::LinearMethod;

/// The linearised system around a fixed base state, factorised once and
/// reusable for many right-hand sides.
pub struct LinearizedSolver<T> {
    grid: GridSpec<T>,
    nonlocal: bool,
    method: LinearMethod<T>,
    system: AssembledSystem<T>,
}

impl<T: Scalar> LinearizedSolver<T> {
    pub fn new(problem: &ProblemSpec<T>, base: &SolverState<T>, method: LinearMethod<T>) -> Result<Self> {
        if base.grid() != problem.grid() {
            return Err(Error::InvalidInput("base state does not live on the problem grid".into()));
        }
        let op = LinearizedOperator::new(problem, &base.u, &base.m, Mode::Newton)?;
        Ok(Self {
            grid: *problem.grid(),
            nonlocal: problem.is_nonlocal(),
            method,
            system: op.assemble()?,
        })
    }

    /// Solves with source `a` in the HJB rows, `div b` in the Fokker-Planck
    /// rows, `rho(0) = 0` and `v(T) = dg/dm rho(T) + c` (`c` only for
    /// nonlocal couplings; local problems have `v(T) = 0`).
    pub fn solve(&mut self, a: &Field<T>, b: &VectorField<T>, c: Option<&[T]>) -> Result<(Field<T>, Field<T>)> {
        let g = self.grid;
        let (nt, nsp) = (g.nt(), g.spatial_len());
        if *a.grid() != g || *b.grid() != g {
            return Err(Error::InvalidInput("forcing terms must live on the problem grid".into()));
        }
        let mut rhs_u = a.values().to_vec();
        rhs_u[nt * nsp..].fill(T::zero());
        match (c, self.nonlocal) {
            (Some(c), true) => {
                if c.len() != nsp {
                    return Err(Error::InvalidInput(format!("c has {} values, expected {nsp}", c.len())));
                }
                rhs_u[nt * nsp..].copy_from_slice(c);
            }
            (Some(_), false) => {
                return Err(Error::InvalidInput("a terminal forcing c applies to nonlocal couplings only".into()))
            }
            (None, _) => {}
        }
        let mut rhs_m = vec![T::zero(); g.len()];
        for k in 1..=nt {
            rhs_m[k * nsp..(k + 1) * nsp].copy_from_slice(&divergence(b, k));
        }
        let (v, rho, _) = self.system.solve(&rhs_u, &rhs_m, &self.method)?;
        Ok((
            Field::new(g, FieldRole::Perturbation, v)?,
            Field::new(g, FieldRole::Perturbation, rho)?,
        ))
    }
}

/// Jacobian of [`residual`](crate::solver::residual) at `base` applied to
/// the direction `(du, dm)`, boundary rows included.
pub fn apply_linearization<T: Scalar>(
    problem: &ProblemSpec<T>,
    base: &SolverState<T>,
    du: &Field<T>,
    dm: &Field<T>,
) -> Result<Residual<T>> {
    let g = *problem.grid();
    if *base.grid() != g || *du.grid() != g || *dm.grid() != g {
        return Err(Error::InvalidInput("direction must live on the problem grid".into()));
    }
    let op = LinearizedOperator::new(problem, &base.u, &base.m, Mode::Newton)?;
    let (ju, jm) = op.apply(du.values(), dm.values());
    Ok(Residual {
        u: Field::new(g, FieldRole::Perturbation, ju)?,
        m: Field::new(g, FieldRole::Perturbation, jm)?,
    })
}

/// Solves the linearised system around `base` once; see [`LinearizedSolver`].
pub fn solve_linearized<T: Scalar>(
    problem: &ProblemSpec<T>,
    base: &SolverState<T>,
    a: &Field<T>,
    b: &VectorField<T>,
    c: Option<&[T]>,
) -> Result<(Field<T>, Field<T>)> {
    LinearizedSolver::new(problem, base, LinearMethod::Direct)?.solve(a, b, c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::LocalCoupling;
    use crate::diagnostics::make_manufactured;
    use crate::hamiltonian::HamiltonianSpec;
    use crate::scalar::sup_norm;

    #[test]
    fn zero_data_gives_zero_solution() {
        let g = GridSpec::new(1, 16, 8, 1.0).unwrap();
        let h = HamiltonianSpec::congestion(vec![1.0; 16], 1.0).unwrap();
        let (p, exact) = make_manufactured(&g, &h, LocalCoupling::Sigmoid).unwrap();
        let (v, rho) = solve_linearized(
            &p,
            &exact,
            &Field::zeros(g, FieldRole::Perturbation),
            &VectorField::zeros(g),
            None,
        )
        .unwrap();
        assert_eq!(sup_norm(v.values()), 0.0);
        assert_eq!(sup_norm(rho.values()), 0.0);
    }

    #[test]
    fn local_rejects_terminal_forcing() {
        let g = GridSpec::new(1, 8, 4, 1.0).unwrap();
        let h = HamiltonianSpec::congestion(vec![1.0; 8], 1.0).unwrap();
        let (p, exact) = make_manufactured(&g, &h, LocalCoupling::Sigmoid).unwrap();
        let c = vec![1.0; 8];
        let res = solve_linearized(
            &p,
            &exact,
            &Field::zeros(g, FieldRole::Perturbation),
            &VectorField::zeros(g),
            Some(c.as_slice()),
        );
        assert!(matches!(res, Err(Error::InvalidInput(_))));
    }
}
