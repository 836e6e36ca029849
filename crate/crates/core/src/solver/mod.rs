//! Discrete MFG system: residual, Newton iteration, damped fixed point and
//! the linearised perturbation solve.

mod fixed_point;
mod linearized;
mod newton;
mod operator;
mod problem;
mod residual;

pub use fixed_point::solve_fixed_point;
pub use linearized::{apply_linearization, solve_linearized, LinearizedSolver};
pub use newton::{newton_step, solve_newton, SolveFailure, SolveReport};
pub use problem::{CouplingSpec, NewtonConfig, ProblemSpec, SolverState};
pub use residual::{residual, Residual};
