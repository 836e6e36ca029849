//! Sparse matrices and solvers for the space-time linear systems.

mod csr;
mod krylov;
mod lu;

pub use csr::{SparseMatrix, TripletBuilder};
pub use krylov::{gmres, GmresResult, Ilu0};
pub use lu::SparseLu;

use crate::error::{Error, Result};
use crate::scalar::{l2_norm, Scalar};

/// GMRES restart length of the iterative path.
pub const GMRES_RESTART: usize = 80;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LinearMethod<T> {
    /// Sparse LU with partial pivoting.
    Direct,
    /// Restarted GMRES with ILU(0) preconditioning.
    Iterative { tol: T, max_iter: usize },
}

impl<T: Scalar> LinearMethod<T> {
    pub fn tolerance(&self) -> T {
        match *self {
            LinearMethod::Direct => T::direct_tolerance(),
            LinearMethod::Iterative { tol, .. } => tol,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LinearMethod::Direct => "direct",
            LinearMethod::Iterative { .. } => "iterative",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveMeta<T> {
    /// `|Ax - b|_2 / max(|b|_2, 1)`.
    pub relative_residual: T,
    pub method: &'static str,
    /// Krylov iterations, or refinement sweeps for the direct path.
    pub iterations: usize,
}

#[derive(Clone, Debug)]
pub struct LinearSystem<T> {
    pub matrix: SparseMatrix<T>,
    pub rhs: Vec<T>,
    pub meta: Option<SolveMeta<T>>,
}

impl<T: Scalar> LinearSystem<T> {
    pub fn new(matrix: SparseMatrix<T>, rhs: Vec<T>) -> Result<Self> {
        if rhs.len() != matrix.n_rows() {
            return Err(Error::InvalidInput(format!(
                "rhs has {} entries, matrix has {} rows",
                rhs.len(),
                matrix.n_rows()
            )));
        }
        Ok(Self {
            matrix,
            rhs,
            meta: None,
        })
    }

    pub fn solve(&mut self, method: &LinearMethod<T>) -> Result<Vec<T>> {
        if self.matrix.n_rows() != self.matrix.n_cols() {
            return Err(Error::InvalidInput("solve needs a square matrix".into()));
        }
        let (x, meta) = match *method {
            LinearMethod::Direct => {
                let lu = SparseLu::factor(&self.matrix)?;
                solve_factored(&self.matrix, &lu, &self.rhs)?
            }
            LinearMethod::Iterative { tol, max_iter } => {
                let ilu = Ilu0::factor(&self.matrix)?;
                let res = gmres(&self.matrix, &self.rhs, &ilu, tol, max_iter, GMRES_RESTART)?;
                (
                    res.x,
                    SolveMeta {
                        relative_residual: res.relative_residual,
                        method: "iterative",
                        iterations: res.iterations,
                    },
                )
            }
        };
        self.meta = Some(meta);
        Ok(x)
    }
}

pub fn relative_residual<T: Scalar>(a: &SparseMatrix<T>, x: &[T], b: &[T]) -> T {
    let ax = a.mul_vec(x);
    let r: Vec<T> = b.iter().zip(&ax).map(|(&bi, &ai)| bi - ai).collect();
    l2_norm(&r) / l2_norm(b).max(T::one())
}

/// Solves with an existing factorisation, refining until the residual meets
/// the direct tolerance (at most three sweeps).
pub fn solve_factored<T: Scalar>(a: &SparseMatrix<T>, lu: &SparseLu<T>, b: &[T]) -> Result<(Vec<T>, SolveMeta<T>)> {
    let tol = T::direct_tolerance();
    let mut x = lu.solve(b);
    let mut res = relative_residual(a, &x, b);
    let mut sweeps = 0;
    while res > tol && sweeps < 3 {
        let ax = a.mul_vec(&x);
        let r: Vec<T> = b.iter().zip(&ax).map(|(&bi, &ai)| bi - ai).collect();
        let dx = lu.solve(&r);
        for (xi, di) in x.iter_mut().zip(dx) {
            *xi += di;
        }
        res = relative_residual(a, &x, b);
        sweeps += 1;
    }
    if !res.is_finite() || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("direct solve".into()));
    }
    if res > tol {
        return Err(Error::InaccurateSolve {
            residual: res.as_f64(),
            tolerance: tol.as_f64(),
        });
    }
    Ok((
        x,
        SolveMeta {
            relative_residual: res,
            method: "direct",
            iterations: sweeps,
        },
    ))
}
