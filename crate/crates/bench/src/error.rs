use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("asymmetric quadratic term at ({row}, {col}): {a} vs {b}")]
    AsymmetricQuadratic { row: String, col: String, a: f64, b: f64 },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Solver(#[from] dualpal::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, BenchError>;

pub fn io_err(path: &std::path::Path, source: std::io::Error) -> BenchError {
    BenchError::Io {
        path: path.display().to_string(),
        source,
    }
}
