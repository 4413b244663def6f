use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    Asymmetric(f64),
    #[error("matrix is indefinite: pivot {pivot:e} at column {column}")]
    Indefinite { column: usize, pivot: f64 },
    #[error("box bounds violated: lower[{0}] > upper[{0}]")]
    InvalidBounds(usize),
    #[error("operator is not positive semidefinite (Rayleigh quotient {0:e})")]
    NotPsd(f64),
    #[error("search direction is not a descent direction (slope {0:e})")]
    NotDescent(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            got,
        })
    }
}
