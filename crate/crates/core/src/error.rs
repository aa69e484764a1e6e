use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(
        "required incident field {required:.4e} V/m exceeds the hard cap {cap:.4e} V/m (ratio {ratio:.3})"
    )]
    Infeasible { required: f64, cap: f64, ratio: f64 },

    #[error("phase undefined: first-harmonic power {power:.3e} below threshold")]
    UndefinedPhase { power: f64 },

    #[error("unknown sweep parameter `{name}` (valid: {valid})")]
    UnknownParameter { name: String, valid: String },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
