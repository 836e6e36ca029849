use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// A Hamiltonian or coupling was evaluated outside its domain.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("singular matrix: {0}")]
    SingularMatrix(String),

    #[error("iterative solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("direct solve residual {residual:e} above tolerance {tolerance:e}")]
    InaccurateSolve { residual: f64, tolerance: f64 },

    #[error("no convergence within {max_iter} iterations (last residual {residual:e})")]
    MaxIterExceeded { max_iter: usize, residual: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Short stable name of the error variant, used in CSV reports.
    pub fn class(&self) -> &'static str {
        match self {
            Error::InvalidGrid(_) => "InvalidGrid",
            Error::InvalidInput(_) => "InvalidInput",
            Error::NonFinite(_) => "NonFinite",
            Error::Domain(_) => "DomainError",
            Error::SingularMatrix(_) => "SingularMatrix",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::InaccurateSolve { .. } => "InaccurateSolve",
            Error::MaxIterExceeded { .. } => "MaxIterExceeded",
            Error::InsufficientData(_) => "InsufficientData",
            Error::Io(_) => "Io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
