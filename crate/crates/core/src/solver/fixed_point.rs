use crate::diagnostics::IterationRecord;
use crate::error::{Error, Result};
use crate::grid::{Field, FieldRole};
use crate::scalar::{sup_norm, Scalar};
use crate::solver::newton::{add_increment, Recorder, SolveFailure, SolveReport};
use crate::solver::operator::{LinearizedOperator, Mode};
use crate::solver::residual::residual;
use crate::solver::{NewtonConfig, ProblemSpec, SolverState};

const MAX_INNER: usize = 30;

/// Newton in `u` alone with the density held fixed.
fn solve_hjb<T: Scalar>(problem: &ProblemSpec<T>, state: &SolverState<T>, cfg: &NewtonConfig<T>) -> Result<SolverState<T>> {
    let tol = (cfg.residual_tol * T::lit(0.01)).max(T::lit(1e-12));
    let g = *problem.grid();
    let zeros = vec![T::zero(); g.len()];
    let mut state = state.clone();
    let mut res = sup_norm(residual(problem, &state)?.u.values());
    for _ in 0..MAX_INNER {
        if res <= tol {
            break;
        }
        let r = residual(problem, &state)?;
        let op = LinearizedOperator::new(problem, &state.u, &state.m, Mode::HjbOnly)?;
        let rhs: Vec<T> = r.u.values().iter().map(|&v| -v).collect();
        let (du, _, _) = op.assemble()?.solve(&rhs, &zeros, &cfg.linear_method)?;
        let next = add_increment(&state, &du, &zeros)?;
        let next_res = sup_norm(residual(problem, &next)?.u.values());
        let stalled = next_res > res * T::lit(0.5);
        state = next;
        res = next_res;
        if stalled {
            break;
        }
    }
    Ok(state)
}

/// Density solving the Fokker-Planck equation with drift `H_p(x, m, D u)`
/// frozen at `state`.
fn solve_fp<T: Scalar>(problem: &ProblemSpec<T>, state: &SolverState<T>, cfg: &NewtonConfig<T>) -> Result<Field<T>> {
    let g = *problem.grid();
    let nsp = g.spatial_len();
    let mut rhs_m = match problem.source_m() {
        Some(s) => s.values().to_vec(),
        None => vec![T::zero(); g.len()],
    };
    for (r, &m0) in rhs_m[..nsp].iter_mut().zip(problem.m0()) {
        *r += m0;
    }
    let zeros = vec![T::zero(); g.len()];
    let op = LinearizedOperator::new(problem, &state.u, &state.m, Mode::FpFrozen)?;
    let (_, m, _) = op.assemble()?.solve(&zeros, &rhs_m, &cfg.linear_method)?;
    Field::new(g, FieldRole::Density, m)
}

/// Damped Picard iteration: best response in `u`, then relaxation of the
/// density toward the Fokker-Planck solution driven by that `u`.
pub fn solve_fixed_point<T: Scalar>(
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
    let theta = cfg.damping;
    let mut rec = Recorder::new(problem, reference, cfg.record_timing);
    let (_, initial_rec) = rec.record(0, initial).map_err(|e| fail(e, 0, &[], None))?;
    let mut state = initial.clone();
    let mut history = Vec::new();
    let mut last_res = T::infinity();
    for n in 1..=cfg.max_iter {
        let step = || -> Result<SolverState<T>> {
            let best = solve_hjb(problem, &state, cfg)?;
            let m_new = solve_fp(problem, &best, cfg)?;
            let m = state.m.zip_map(&m_new, |old, new| (T::one() - theta) * old + theta * new)?;
            SolverState::new(best.u, m)
        };
        let next = step().map_err(|e| fail(e, n, &history, Some(&state)))?;
        let (r, record) = rec.record(n, &next).map_err(|e| fail(e, n, &history, Some(&state)))?;
        history.push(record);
        state = next;
        last_res = r.sup();
        if last_res <= cfg.residual_tol {
            return Ok(SolveReport {
                state,
                initial: initial_rec,
                history,
            });
        }
        if !last_res.is_finite() {
            return Err(fail(Error::NonFinite(format!("residual at iterate {n}")), n, &history, None));
        }
    }
    Err(fail(
        Error::MaxIterExceeded {
            max_iter: cfg.max_iter,
            residual: last_res.as_f64(),
        },
        cfg.max_iter,
        &history,
        Some(&state),
    ))
}
