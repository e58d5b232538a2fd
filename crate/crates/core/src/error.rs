use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's precondition (bad shape, bad count, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("instance too large for oracle: n = {n} exceeds the enumeration cap of {cap}")]
    OracleTooLarge { n: usize, cap: usize },

    #[error("pool exhausted: need {needed} rows but the pool holds {available}")]
    PoolExhausted { needed: usize, available: usize },

    /// Malformed persisted data; `field` names the first offending field.
    #[error("format error in `{field}`: {reason}")]
    Format { field: &'static str, reason: String },

    #[error("non-finite loss at step {step}: loss_d = {loss_d}, loss_g = {loss_g}")]
    Diverged { step: usize, loss_d: f64, loss_g: f64 },

    #[error("matrix is not positive semidefinite: eigenvalue {eigenvalue} below tolerance")]
    NotPsd { eigenvalue: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn format(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            field,
            reason: reason.into(),
        }
    }
}
