use thiserror::Error;

/// Errors produced anywhere in the simulation and optimization stack.
#[derive(Debug, Error)]
pub enum Error {
    /// A function argument was outside its valid domain.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A system configuration is internally inconsistent.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A configuration file could not be parsed.
    #[error("line {line}: {message}")]
    ConfigSyntax { line: usize, message: String },

    /// Cholesky factorization hit a pivot below tolerance.
    #[error("matrix is not Hermitian positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    /// A precoder could not be normalized (zero equivalent gain).
    #[error("normalization failed: {0}")]
    Normalization(String),

    /// Training produced a non-finite loss.
    #[error("training diverged at iteration {iteration}")]
    Divergence { iteration: usize },

    /// Malformed CSV or model file.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
