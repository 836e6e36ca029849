use std::time::Instant;

use crate::diagnostics::IterationRecord;
use crate::error::{Error, Result};
use crate::grid::Field;
use crate::scalar::Scalar;
use crate::solver::operator::{LinearizedOperator, Mode};
use crate::solver::residual::{residual, Residual};
use crate::solver::{NewtonConfig, ProblemSpec, SolverState};
use crate::sparse::SolveMeta;

/// Outcome of an iterative solve.
#[derive(Clone, Debug)]
pub struct SolveReport<T> {
    pub state: SolverState<T>,
    /// Record of the starting state (iteration 0).
    pub initial: IterationRecord,
    /// One record per completed step.
    pub history: Vec<IterationRecord>,
}

impl<T> SolveReport<T> {
    pub fn iterations(&self) -> usize {
        self.history.len()
    }

    /// Error sums of the starting state and every step, when a reference was given.
    pub fn errors(&self) -> Vec<f64> {
        std::iter::once(&self.initial)
            .chain(&self.history)
            .filter_map(|r| r.err_sum)
            .collect()
    }
}

/// A failed solve with the iterations recorded before the failure.
#[derive(Clone, Debug)]
pub struct SolveFailure<T> {
    pub error: Error,
    /// Index of the step that failed (1-based), or the step count on
    /// `MaxIterExceeded`.
    pub iteration: usize,
    pub history: Vec<IterationRecord>,
    /// Last valid iterate.
    pub last: Option<SolverState<T>>,
}

impl<T> std::fmt::Display for SolveFailure<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "iteration {}: {}", self.iteration, self.error)
    }
}

impl<T: std::fmt::Debug> std::error::Error for SolveFailure<T> {}

pub(crate) fn add_increment<T: Scalar>(state: &SolverState<T>, du: &[T], dm: &[T]) -> Result<SolverState<T>> {
    let g = *state.grid();
    let u: Vec<T> = state.u.values().iter().zip(du).map(|(&a, &b)| a + b).collect();
    let m: Vec<T> = state.m.values().iter().zip(dm).map(|(&a, &b)| a + b).collect();
    SolverState::new(
        Field::new(g, state.u.role(), u)?,
        Field::new(g, state.m.role(), m)?,
    )
}

/// One Newton step: linearise at `prev` and solve the coupled space-time system.
pub fn newton_step<T: Scalar>(
    problem: &ProblemSpec<T>,
    prev: &SolverState<T>,
    cfg: &NewtonConfig<T>,
) -> Result<(SolverState<T>, SolveMeta<T>)> {
    let r = residual(problem, prev)?;
    step_from_residual(problem, prev, &r, cfg)
}

fn step_from_residual<T: Scalar>(
    problem: &ProblemSpec<T>,
    prev: &SolverState<T>,
    r: &Residual<T>,
    cfg: &NewtonConfig<T>,
) -> Result<(SolverState<T>, SolveMeta<T>)> {
    let op = LinearizedOperator::new(problem, &prev.u, &prev.m, Mode::Newton)?;
    let mut sys = op.assemble()?;
    let rhs_u: Vec<T> = r.u.values().iter().map(|&v| -v).collect();
    let rhs_m: Vec<T> = r.m.values().iter().map(|&v| -v).collect();
    let (du, dm, meta) = sys.solve(&rhs_u, &rhs_m, &cfg.linear_method)?;
    Ok((add_increment(prev, &du, &dm)?, meta))
}

pub(crate) struct Recorder<'a, T> {
    problem: &'a ProblemSpec<T>,
    reference: Option<&'a SolverState<T>>,
    timing: bool,
    clock: Instant,
}

impl<'a, T: Scalar> Recorder<'a, T> {
    pub(crate) fn new(problem: &'a ProblemSpec<T>, reference: Option<&'a SolverState<T>>, timing: bool) -> Self {
        Self {
            problem,
            reference,
            timing,
            clock: Instant::now(),
        }
    }

    pub(crate) fn restart_clock(&mut self) {
        self.clock = Instant::now();
    }

    /// Residual of `state` and its record; the clock restarts afterwards.
    pub(crate) fn record(&mut self, iter: usize, state: &SolverState<T>) -> Result<(Residual<T>, IterationRecord)> {
        let wall_ms = if self.timing {
            self.clock.elapsed().as_secs_f64() * 1e3
        } else {
            0.0
        };
        let r = residual(self.problem, state)?;
        let rec = IterationRecord::new(iter, &r, state, self.reference, wall_ms)?;
        self.restart_clock();
        Ok((r, rec))
    }
}

/// Newton iteration until the residual sup-norm reaches `residual_tol`.
/// At least one step is always taken.
pub fn solve_newton<T: Scalar>(
    problem: &ProblemSpec<T>,
    initial: &SolverState<T>,
    cfg: &NewtonConfig<T>,
    reference: Option<&SolverState<T>>,
) -> Result<SolveReport<T>, SolveFailure<T>> {
    let fail = |error, iteration, history: &[IterationRecord], last: Option<&SolverState<T>>| SolveFailure {
        error,
        iteration,
        history: history.to_vec(),
        last: last.cloned(),
    };
    cfg.validate().map_err(|e| fail(e, 0, &[], None))?;
    if initial.grid() != problem.grid() {
        return Err(fail(
            Error::InvalidInput("initial state does not live on the problem grid".into()),
            0,
            &[],
            None,
        ));
    }
    if let Some(r) = reference {
        if r.grid() != problem.grid() {
            return Err(fail(
                Error::InvalidInput("reference does not live on the problem grid".into()),
                0,
                &[],
                None,
            ));
        }
    }

    let mut rec = Recorder::new(problem, reference, cfg.record_timing);
    let (mut r, initial_rec) = rec.record(0, initial).map_err(|e| fail(e, 0, &[], None))?;
    let mut state = initial.clone();
    let mut history = Vec::new();
    for n in 1..=cfg.max_iter {
        let (next, _) = step_from_residual(problem, &state, &r, cfg)
            .map_err(|e| fail(with_iterate(e, n), n, &history, Some(&state)))?;
        let (rn, record) = rec.record(n, &next).map_err(|e| fail(e, n, &history, Some(&state)))?;
        history.push(record);
        state = next;
        r = rn;
        if r.sup() <= cfg.residual_tol {
            return Ok(SolveReport {
                state,
                initial: initial_rec,
                history,
            });
        }
        if !r.sup().is_finite() {
            return Err(fail(Error::NonFinite(format!("residual at iterate {n}")), n, &history, None));
        }
    }
    let res = r.sup().as_f64();
    Err(fail(
        Error::MaxIterExceeded {
            max_iter: cfg.max_iter,
            residual: res,
        },
        cfg.max_iter,
        &history,
        Some(&state),
    ))
}

fn with_iterate(e: Error, n: usize) -> Error {
    match e {
        Error::SingularMatrix(msg) => Error::SingularMatrix(format!("Newton iterate {n}: {msg}")),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::LocalCoupling;
    use crate::grid::{norms, GridSpec};
    use crate::hamiltonian::HamiltonianSpec;
    use crate::solver::operator::{LinearizedOperator, Mode};

    fn manufactured(nx: usize, nt: usize) -> (ProblemSpec<f64>, SolverState<f64>) {
        let g = GridSpec::new(1, nx, nt, 1.0).unwrap();
        let h = HamiltonianSpec::congestion(vec![1.0; nx], 1.0).unwrap();
        crate::diagnostics::make_manufactured(&g, &h, LocalCoupling::Sigmoid).unwrap()
    }

    #[test]
    fn assembled_matrix_matches_apply() {
        let (p, exact) = manufactured(8, 6);
        let start = crate::diagnostics::perturbed_start(&exact, 0.05).unwrap();
        let op = LinearizedOperator::new(&p, &start.u, &start.m, Mode::Newton).unwrap();
        let mut sys = op.assemble().unwrap();
        let g = *p.grid();
        let rhs_u: Vec<f64> = (0..g.len()).map(|i| ((i * 7 % 11) as f64 - 5.0) * 0.1).collect();
        let rhs_m: Vec<f64> = (0..g.len()).map(|i| ((i * 5 % 13) as f64 - 6.0) * 0.1).collect();
        let (du, dm, _) = sys.solve(&rhs_u, &rhs_m, &crate::sparse::LinearMethod::Direct).unwrap();
        let (au, am) = op.apply(&du, &dm);
        for (a, b) in au.iter().zip(&rhs_u).chain(am.iter().zip(&rhs_m)) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn root_is_fixed_point() {
        let (p, exact) = manufactured(16, 8);
        let (next, _) = newton_step(&p, &exact, &NewtonConfig::default()).unwrap();
        let e = norms(&next.u, Some(&exact.u)).unwrap().c10 + norms(&next.m, Some(&exact.m)).unwrap().c0;
        assert!(e < 1e-10, "{e}");
    }

    #[test]
    fn reference_start_converges_in_one_step() {
        let (p, exact) = manufactured(16, 8);
        let rep = solve_newton(&p, &exact, &NewtonConfig::default(), Some(&exact)).unwrap();
        assert_eq!(rep.history.len(), 1);
    }

    #[test]
    fn max_iter_keeps_history() {
        let (p, exact) = manufactured(16, 8);
        let start = crate::diagnostics::perturbed_start(&exact, 0.1).unwrap();
        let cfg = NewtonConfig {
            max_iter: 1,
            residual_tol: 1e-14,
            ..NewtonConfig::default()
        };
        let err = solve_newton(&p, &start, &cfg, None).unwrap_err();
        assert!(matches!(err.error, Error::MaxIterExceeded { max_iter: 1, .. }));
        assert_eq!(err.history.len(), 1);
    }
}
