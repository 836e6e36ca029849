//! Newton's method for second-order mean field games on the periodic torus.
//!
//! The crate discretises the coupled Hamilton-Jacobi-Bellman and
//! Fokker-Planck system with finite differences, fully implicit in time, and
//! solves it with a Newton iteration over the whole space-time grid. All
//! numerical types are generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! aliases below fix the scalar to `f64`.
//!
//! ```
//! use mfg_newton::diagnostics::perturbed_start;
//! use mfg_newton::{make_manufactured, solve_newton, GridSpec, HamiltonianSpec, LocalCoupling, NewtonConfig};
//!
//! let grid = GridSpec::<f64>::new(1, 32, 32, 1.0)?;
//! let h = HamiltonianSpec::congestion(vec![1.0; grid.spatial_len()], 1.0)?;
//! let (problem, exact) = make_manufactured(&grid, &h, LocalCoupling::Sigmoid)?;
//! let start = perturbed_start(&exact, 1e-2)?;
//! let report = solve_newton(&problem, &start, &NewtonConfig::default(), Some(&exact)).unwrap();
//! assert!(report.iterations() <= 6);
//! # Ok::<(), mfg_newton::Error>(())
//! ```

pub mod coupling;
pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod hamiltonian;
pub mod scalar;
pub mod solver;
pub mod sparse;

pub use coupling::{KernelCoupling, KernelOuter, LocalCoupling, NonlocalEval};
pub use diagnostics::{fit_rate, make_manufactured, make_manufactured_nonlocal, IterationRecord, RateFit};
pub use error::{Error, Result};
pub use grid::{Field, FieldRole, GridSpec, VectorField};
pub use hamiltonian::{HamiltonianKind, HamiltonianSpec};
pub use scalar::Scalar;
pub use solver::{
    newton_step, residual, solve_fixed_point, solve_linearized, solve_newton, CouplingSpec, NewtonConfig, ProblemSpec,
    SolverState,
};
pub use sparse::{LinearMethod, SparseMatrix};

pub type GridSpec64 = GridSpec<f64>;
pub type Field64 = Field<f64>;
pub type VectorField64 = VectorField<f64>;
pub type HamiltonianSpec64 = HamiltonianSpec<f64>;
pub type LocalCoupling64 = LocalCoupling<f64>;
pub type KernelCoupling64 = KernelCoupling<f64>;
pub type ProblemSpec64 = ProblemSpec<f64>;
pub type SolverState64 = SolverState<f64>;
pub type NewtonConfig64 = NewtonConfig<f64>;
pub type SparseMatrix64 = SparseMatrix<f64>;

pub type GridSpec32 = GridSpec<f32>;
pub type Field32 = Field<f32>;
pub type ProblemSpec32 = ProblemSpec<f32>;
pub type SolverState32 = SolverState<f32>;
pub type NewtonConfig32 = NewtonConfig<f32>;
