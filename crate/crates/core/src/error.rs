use thiserror::Error;

/// Errors raised by the optimization library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("component index {index} out of range for {n_components} components")]
    IndexOutOfRange { index: usize, n_components: usize },

    #[error("non-finite value in {what}")]
    NonFinite { what: &'static str },

    #[error("dimension mismatch: expected {expected}, got {actual} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("sampled index {index} has zero probability")]
    ZeroProbability { index: usize },

    #[error("reference point is not a zero of the residual (merit {merit:e})")]
    NotASolution { merit: f64 },

    #[error("the problem has a non-smooth term; {what} requires a smooth objective")]
    NonSmooth { what: &'static str },

    #[error("degenerate least-squares system in Anderson step")]
    DegenerateSolve,

    #[error("search direction is not a descent direction (slope {slope:e})")]
    NotDescentDirection { slope: f64 },

    #[error("line search exhausted {backtracks} backtracks")]
    LineSearchExhausted { backtracks: usize },

    #[error("solver did not converge in {iterations} iterations (gradient norm {grad_norm:e})")]
    NotConverged { iterations: usize, grad_norm: f64 },

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: String,
        line: usize,
        reason: String,
    },

    #[error("i/o error on {path}: {reason}")]
    Io { path: String, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite<'a, I>(values: I, what: &'static str) -> Result<()>
where
    I: IntoIterator<Item = &'a f64>,
{
    if values.into_iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { what })
    }
}

pub(crate) fn ensure_positive(value: f64, name: &'static str) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: format!("must be positive and finite, got {value}"),
        })
    }
}
