//! Experiment drivers. Each experiment expands into independent sub-runs
//! that may execute concurrently.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use mfg_newton::diagnostics::{perturbed_start, random_smooth_forcing};
use mfg_newton::grid::{norms, Field, FieldRole, GridSpec};
use mfg_newton::hamiltonian::{hessian_sweep, HessianSweepRow};
use mfg_newton::scalar::sup_norm;
use mfg_newton::solver::{LinearizedSolver, SolveFailure, SolveReport};
use mfg_newton::{
    fit_rate, make_manufactured, make_manufactured_nonlocal, residual, solve_fixed_point, solve_newton, Error,
    IterationRecord, ProblemSpec, RateFit, SolverState, VectorField,
};

use crate::config::{Experiment, RunConfig};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Job {
    Newton { eps: f64 },
    FixedPoint { eps: f64 },
    Lemma { nx: usize, nt: usize },
    Verify,
    Hessian { alpha: f64 },
}

impl Job {
    pub fn id(&self) -> String {
        match *self {
            Job::Newton { eps } => format!("newton_eps{eps:e}"),
            Job::FixedPoint { eps } => format!("fixed-point_eps{eps:e}"),
            Job::Lemma { nx, nt } => format!("lemma_nx{nx}_nt{nt}"),
            Job::Verify => "verify".to_string(),
            Job::Hessian { alpha } => format!("hessian_alpha{alpha}"),
        }
    }

    pub fn method(&self) -> &'static str {
        match self {
            Job::Newton { .. } | Job::Verify => "newton",
            Job::FixedPoint { .. } => "fixed-point",
            Job::Lemma { .. } => "linearized",
            Job::Hessian { .. } => "hessian",
        }
    }

    pub fn epsilon(&self) -> Option<f64> {
        match *self {
            Job::Newton { eps } | Job::FixedPoint { eps } => Some(eps),
            _ => None,
        }
    }
}

/// Result of one sub-run.
#[derive(Clone, Debug, Default)]
pub struct RunOutcome {
    pub nx: usize,
    pub nt: usize,
    /// Iteration 0 first, then one record per step.
    pub history: Vec<IterationRecord>,
    pub fit: Option<RateFit>,
    pub final_state: Option<SolverState<f64>>,
    pub iterations: Option<usize>,
    pub final_residual: Option<f64>,
    /// Experiment-specific scalar and its name.
    pub metric: Option<(&'static str, f64)>,
    pub sweep: Vec<HessianSweepRow<f64>>,
    pub error: Option<Error>,
}

pub fn jobs(cfg: &RunConfig) -> Vec<Job> {
    match cfg.experiment {
        Experiment::NewtonRate | Experiment::NonlocalRate => {
            cfg.epsilons.iter().map(|&eps| Job::Newton { eps }).collect()
        }
        Experiment::FixedPointCompare => cfg
            .epsilons
            .iter()
            .flat_map(|&eps| [Job::Newton { eps }, Job::FixedPoint { eps }])
            .collect(),
        Experiment::LemmaStability => {
            if cfg.lemma.grids.is_empty() {
                vec![Job::Lemma {
                    nx: cfg.grid.nx,
                    nt: cfg.grid.nt,
                }]
            } else {
                cfg.lemma.grids.iter().map(|&[nx, nt]| Job::Lemma { nx, nt }).collect()
            }
        }
        Experiment::ManufacturedVerify => vec![Job::Verify],
        Experiment::HessianSweep => {
            let alphas = if cfg.hessian.alphas.is_empty() {
                vec![cfg.hamiltonian.alpha]
            } else {
                cfg.hessian.alphas.clone()
            };
            alphas.into_iter().map(|alpha| Job::Hessian { alpha }).collect()
        }
    }
}

fn manufactured(cfg: &RunConfig, grid: &GridSpec<f64>) -> mfg_newton::Result<(ProblemSpec<f64>, SolverState<f64>)> {
    let h = cfg.hamiltonian_spec(grid)?;
    if let Some(local) = cfg.local_coupling() {
        return make_manufactured(grid, &h, local?);
    }
    let (f, g) = cfg.kernel_couplings(grid).expect("coupling is nonlocal")?;
    make_manufactured_nonlocal(grid, &h, f, g)
}

fn with_history(out: &mut RunOutcome, result: Result<SolveReport<f64>, SolveFailure<f64>>) -> Option<Vec<f64>> {
    match result {
        Ok(rep) => {
            out.history = std::iter::once(rep.initial.clone()).chain(rep.history.iter().cloned()).collect();
            out.iterations = Some(rep.iterations());
            out.final_residual = rep.history.last().map(|r| r.res_sup());
            let errors = rep.errors();
            out.final_state = Some(rep.state);
            Some(errors)
        }
        Err(fail) => {
            out.iterations = Some(fail.history.len());
            out.final_residual = fail.history.last().map(|r| r.res_sup());
            out.history = fail.history;
            out.final_state = fail.last;
            out.error = Some(fail.error);
            None
        }
    }
}

fn run_job(cfg: &RunConfig, job: Job) -> RunOutcome {
    let mut out = RunOutcome {
        nx: cfg.grid.nx,
        nt: cfg.grid.nt,
        ..RunOutcome::default()
    };
    if let Err(e) = execute(cfg, job, &mut out) {
        out.error = Some(e);
    }
    out
}

fn execute(cfg: &RunConfig, job: Job, out: &mut RunOutcome) -> mfg_newton::Result<()> {
    match job {
        Job::Newton { eps } | Job::FixedPoint { eps } => {
            let grid = cfg.grid_spec(cfg.grid.nx, cfg.grid.nt)?;
            let (p, exact) = manufactured(cfg, &grid)?;
            let start = perturbed_start(&exact, eps)?;
            let (result, solver_cfg) = match job {
                Job::Newton { .. } => {
                    let c = cfg.newton_config();
                    (solve_newton(&p, &start, &c, Some(&exact)), c)
                }
                _ => {
                    let c = cfg.fixed_point_config();
                    (solve_fixed_point(&p, &start, &c, Some(&exact)), c)
                }
            };
            if let Some(errors) = with_history(out, result) {
                match (fit_rate(&errors, solver_cfg.error_floor), job) {
                    (Ok(fit), _) => out.fit = Some(fit),
                    (Err(e), Job::Newton { .. }) => out.error = Some(e),
                    (Err(_), _) => {}
                }
            }
        }
        Job::Verify => {
            let grid = cfg.grid_spec(cfg.grid.nx, cfg.grid.nt)?;
            let (p, exact) = manufactured(cfg, &grid)?;
            let r = residual(&p, &exact)?;
            out.metric = Some(("exact_residual", r.sup()));
            with_history(out, solve_newton(&p, &exact, &cfg.newton_config(), Some(&exact)));
        }
        Job::Lemma { nx, nt } => {
            out.nx = nx;
            out.nt = nt;
            let grid = cfg.grid_spec(nx, nt)?;
            let (p, exact) = manufactured(cfg, &grid)?;
            let mut solver = LinearizedSolver::new(&p, &exact, cfg.newton_config().linear_method)?;
            let (v, rho) = solver.solve(&Field::zeros(grid, FieldRole::Perturbation), &VectorField::zeros(grid), None)?;
            let zero = norms(&v, None)?.c10 + norms(&rho, None)?.c0;
            if zero > 1e-9 {
                return Err(Error::InvalidInput(format!("zero data produced a solution of size {zero:e}")));
            }
            let mut worst = 0.0f64;
            for draw in 0..cfg.lemma.draws {
                let (a, b) = random_smooth_forcing(&grid, cfg.seed, draw)?;
                let data = sup_norm(a.values()) + b.sup_norm();
                let (v, rho) = solver.solve(&a, &b, None)?;
                worst = worst.max((norms(&v, None)?.c10 + norms(&rho, None)?.c0) / data);
            }
            out.metric = Some(("max_ratio", worst));
        }
        Job::Hessian { alpha } => {
            out.sweep = hessian_sweep(&[alpha], &cfg.hessian.m, &cfg.hessian.p)?;
            let all = out.sweep.iter().filter(|r| !r.check.degenerate).all(|r| r.check.satisfied);
            out.metric = Some(("all_satisfied", if all { 1.0 } else { 0.0 }));
        }
    }
    Ok(())
}

/// Runs every job on up to `cfg.workers` threads; results keep job order.
pub fn run_all(cfg: &RunConfig, jobs: &[Job], verbose: bool) -> Vec<RunOutcome> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<RunOutcome>>> = Mutex::new(vec![None; jobs.len()]);
    let workers = cfg.workers.min(jobs.len()).max(1);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&job) = jobs.get(i) else { break };
                if verbose {
                    eprintln!("[{}] start", job.id());
                }
                let outcome = run_job(cfg, job);
                if verbose {
                    match &outcome.error {
                        Some(e) => eprintln!("[{}] failed: {e}", job.id()),
                        None => eprintln!("[{}] done", job.id()),
                    }
                }
                slots.lock().expect("result lock")[i] = Some(outcome);
            });
        }
    });
    slots
        .into_inner()
        .expect("result lock")
        .into_iter()
        .map(|o| o.expect("every job ran"))
        .collect()
}
