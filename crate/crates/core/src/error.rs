use thiserror::Error;

/// Errors raised by process construction, kernels, and simulation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("state {state} outside the domain of {family}")]
    Domain { family: &'static str, state: u64 },

    #[error("domain error: {0}")]
    DomainMsg(String),

    #[error("time {requested} beyond trajectory horizon {horizon}")]
    Horizon { requested: f64, horizon: f64 },

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn require_positive(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} must be finite and > 0, got {value}"
        )))
    }
}
