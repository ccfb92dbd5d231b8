use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("truncation insufficient: need at least {required} terms, got {given}")]
    TruncationInsufficient { required: usize, given: usize },

    #[error("numeric divergence: {0}")]
    Divergence(String),

    #[error("stationary law does not exist: {0}")]
    NonExistentLaw(String),

    #[error("moments undefined: {0}")]
    MomentsUndefined(String),

    #[error(
        "horizon too short: tail estimate {estimate:.3e} exceeds tolerance {tolerance:.3e}; \
         need T >= {required:.1}"
    )]
    HorizonTooShort {
        estimate: f64,
        tolerance: f64,
        required: f64,
    },
}

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter(msg()))
    }
}
