use thiserror::Error;

/// Errors produced anywhere in the toolkit.
///
/// Variants are grouped so the CLI can map them onto exit codes:
/// domain and degenerate-sample problems are caller errors, numerical
/// and accuracy failures come from the numerics themselves.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("size error: {0}")]
    Size(String),

    #[error("numerical error: factorization failed at leading minor {minor} (jitter {jitter:e})")]
    Factorization { minor: usize, jitter: f64 },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("quadrature did not converge: best value {value:e}, error estimate {est_error:e}")]
    Accuracy { value: f64, est_error: f64 },

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Process exit code for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Parse(_) | Error::Io(_) | Error::Json(_) => 1,
            Error::Domain(_) | Error::Size(_) | Error::DegenerateSample(_) => 2,
            Error::Factorization { .. } | Error::Numerical(_) | Error::Accuracy { .. } => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Fails with a domain error unless `x` is finite and strictly positive.
pub(crate) fn ensure_positive(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be finite and > 0, got {x}")))
    }
}
