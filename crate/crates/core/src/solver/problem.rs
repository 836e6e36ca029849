use crate::coupling::{KernelCoupling, LocalCoupling};
use crate::error::{Error, Result};
use crate::grid::{Field, FieldRole, GridSpec};
use crate::hamiltonian::HamiltonianSpec;
use crate::scalar::Scalar;
use crate::sparse::LinearMethod;

#[derive(Clone, Debug, PartialEq)]
pub enum CouplingSpec<T> {
    /// `f(m)` in the HJB equation and a fixed terminal value `u(T) = u_T`.
    Local { f: LocalCoupling<T>, terminal: Vec<T> },
    /// `f[m(t)]` in the HJB equation and `u(T) = g[m(T)]`.
    Nonlocal { f: KernelCoupling<T>, g: KernelCoupling<T> },
}

/// A discrete MFG problem on a periodic space-time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemSpec<T> {
    grid: GridSpec<T>,
    hamiltonian: HamiltonianSpec<T>,
    coupling: CouplingSpec<T>,
    m0: Vec<T>,
    source_u: Option<Field<T>>,
    source_m: Option<Field<T>>,
}

impl<T: Scalar> ProblemSpec<T> {
    pub fn local(
        grid: GridSpec<T>,
        hamiltonian: HamiltonianSpec<T>,
        f: LocalCoupling<T>,
        m0: Vec<T>,
        terminal: Vec<T>,
    ) -> Result<Self> {
        if terminal.len() != grid.spatial_len() || terminal.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("terminal value must be a finite spatial slice".into()));
        }
        Self::build(grid, hamiltonian, CouplingSpec::Local { f, terminal }, m0)
    }

    pub fn nonlocal(
        grid: GridSpec<T>,
        hamiltonian: HamiltonianSpec<T>,
        f: KernelCoupling<T>,
        g: KernelCoupling<T>,
        m0: Vec<T>,
    ) -> Result<Self> {
        if *f.grid() != grid || *g.grid() != grid {
            return Err(Error::InvalidInput("kernel couplings must live on the problem grid".into()));
        }
        Self::build(grid, hamiltonian, CouplingSpec::Nonlocal { f, g }, m0)
    }

    fn build(grid: GridSpec<T>, hamiltonian: HamiltonianSpec<T>, coupling: CouplingSpec<T>, m0: Vec<T>) -> Result<Self> {
        hamiltonian.check_grid(&grid)?;
        if m0.len() != grid.spatial_len() {
            return Err(Error::InvalidInput(format!(
                "m0 has {} values, grid has {} spatial nodes",
                m0.len(),
                grid.spatial_len()
            )));
        }
        if let Some((s, v)) = m0.iter().enumerate().find(|(_, v)| !(**v > T::zero()) || !v.is_finite()) {
            return Err(Error::InvalidInput(format!("m0 must be bounded below by a positive constant, m0[{s}] = {v}")));
        }
        let mass = grid.slice_mass(&m0);
        let tol = T::lit(1e-10).max(T::lit(1e3) * T::epsilon());
        if (mass - T::one()).abs() > tol {
            return Err(Error::InvalidInput(format!("m0 must have unit mass, got {mass}")));
        }
        Ok(Self {
            grid,
            hamiltonian,
            coupling,
            m0,
            source_u: None,
            source_m: None,
        })
    }

    /// Adds source terms on the right-hand sides of both equations, including
    /// the boundary rows.
    pub fn with_sources(mut self, source_u: Field<T>, source_m: Field<T>) -> Result<Self> {
        if *source_u.grid() != self.grid || *source_m.grid() != self.grid {
            return Err(Error::InvalidInput("sources must live on the problem grid".into()));
        }
        self.source_u = Some(source_u);
        self.source_m = Some(source_m);
        Ok(self)
    }

    pub fn grid(&self) -> &GridSpec<T> {
        &self.grid
    }

    pub fn hamiltonian(&self) -> &HamiltonianSpec<T> {
        &self.hamiltonian
    }

    pub fn coupling(&self) -> &CouplingSpec<T> {
        &self.coupling
    }

    pub fn m0(&self) -> &[T] {
        &self.m0
    }

    pub fn source_u(&self) -> Option<&Field<T>> {
        self.source_u.as_ref()
    }

    pub fn source_m(&self) -> Option<&Field<T>> {
        self.source_m.as_ref()
    }

    pub fn is_nonlocal(&self) -> bool {
        matches!(self.coupling, CouplingSpec::Nonlocal { .. })
    }
}

/// A value function and density pair on one grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SolverState<T> {
    pub u: Field<T>,
    pub m: Field<T>,
}

impl<T: Scalar> SolverState<T> {
    pub fn new(u: Field<T>, m: Field<T>) -> Result<Self> {
        if u.grid() != m.grid() {
            return Err(Error::InvalidInput("u and m live on different grids".into()));
        }
        Ok(Self {
            u: u.with_role(FieldRole::ValueFunction),
            m: m.with_role(FieldRole::Density),
        })
    }

    pub fn grid(&self) -> &GridSpec<T> {
        self.u.grid()
    }

    /// `u = 0` and `m = m0` at every time.
    pub fn cold_start(problem: &ProblemSpec<T>) -> Result<Self> {
        let g = *problem.grid();
        let m = Field::from_slices(g, FieldRole::Density, &vec![problem.m0().to_vec(); g.nt() + 1])?;
        Self::new(Field::zeros(g, FieldRole::ValueFunction), m)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonConfig<T> {
    pub max_iter: usize,
    /// Stop once the sup-norm of the discrete residual is at or below this.
    pub residual_tol: T,
    /// Errors at or below this value are excluded from rate fits.
    pub error_floor: T,
    pub linear_method: LinearMethod<T>,
    /// Relaxation of the density update in the fixed-point iteration.
    pub damping: T,
    /// Record wall-clock time per iteration (zero when disabled).
    pub record_timing: bool,
}

impl<T: Scalar> Default for NewtonConfig<T> {
    fn default() -> Self {
        Self {
            max_iter: 20,
            residual_tol: T::lit(1e-9),
            error_floor: T::lit(100.0) * T::direct_tolerance(),
            linear_method: LinearMethod::Direct,
            damping: T::lit(0.5),
            record_timing: true,
        }
    }
}

impl<T: Scalar> NewtonConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.residual_tol > T::zero()) {
            return Err(Error::InvalidInput("residual_tol must be positive".into()));
        }
        if !(self.damping > T::zero() && self.damping <= T::one()) {
            return Err(Error::InvalidInput(format!("damping must lie in (0, 1], got {}", self.damping)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidInput("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}
