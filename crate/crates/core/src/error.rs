use thiserror::Error;

/// Errors raised by samplers, chain models and experiment drivers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("invalid time grid: {0}")]
    Grid(String),

    #[error("unsupported for this chain model: {0}")]
    Unsupported(String),

    #[error("lag-covariance series did not settle by k = {k_max} (last relative change {last_change:.3e})")]
    NotConverged { k_max: usize, last_change: f64 },

    #[error("precision target missed: achieved relative error {achieved:.3e}, requested {requested:.3e}")]
    Precision { achieved: f64, requested: f64 },

    #[error("sampler efficiency below floor: acceptance rate {rate:.3e} < {floor:.3e}")]
    Efficiency { rate: f64, floor: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Error {
    Error::Parameter {
        name,
        reason: reason.into(),
    }
}
