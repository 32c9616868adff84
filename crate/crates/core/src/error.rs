use thiserror::Error;

/// Errors raised by the numerical routines and loaders in this crate.
#[derive(Debug, Error)]
pub enum LkdlError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("kernel matrix is not positive semi-definite under {kernel}: min eigenvalue {min_eigenvalue:e} below tolerance {tolerance:e}")]
    NotPsd {
        kernel: String,
        min_eigenvalue: f64,
        tolerance: f64,
    },

    #[error("kernel matrix of {rows}x{cols} exceeds the memory budget of {budget} bytes; {advice}")]
    MemoryBudget {
        rows: usize,
        cols: usize,
        budget: usize,
        advice: &'static str,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("class {0} has no samples")]
    EmptyClass(u32),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, LkdlError>;
