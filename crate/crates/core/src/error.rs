use thiserror::Error;

/// Errors produced by the tuning library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("improper transfer function: numerator degree {num} exceeds denominator degree {den}")]
    ImproperTransferFunction { num: usize, den: usize },

    #[error("invalid transfer function: {0}")]
    InvalidTransferFunction(String),

    #[error("frequency response is singular at omega = {omega} (pole on the imaginary axis)")]
    SingularFrequency { omega: f64 },

    #[error("simulation diverged at t = {t} s")]
    Diverged { t: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("kriging fit failed: {0}")]
    FitFailure(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
