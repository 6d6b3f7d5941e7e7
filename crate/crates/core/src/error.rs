use thiserror::Error;

use crate::SubsystemId;

/// Errors raised by the reliability model, the monitor loop and the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("time {t} h is outside the curve range [{start}, {end}] h")]
    OutOfRange { t: f64, start: f64, end: f64 },

    #[error("incompatible grids: {0}")]
    IncompatibleGrid(String),

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("{what} = {value} is not a probability in [0, 1]")]
    InvalidProbability { what: &'static str, value: f64 },

    #[error("empty search range for value matching")]
    EmptySearch,

    #[error("no reliability value supplied for leaf {0}")]
    UnresolvedLeaf(SubsystemId),

    #[error("invalid block diagram: {0}")]
    InvalidRbd(String),

    #[error("invalid firing distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid failure-race net: {0}")]
    InvalidNet(String),

    #[error("inconsistent diagnostics events for {subsystem} at t = {t} h: {reason}")]
    EventConsistency {
        subsystem: SubsystemId,
        t: f64,
        reason: String,
    },

    #[error("conditional probability undefined: reliability is zero at t = {0} h")]
    UndefinedConditional(f64),

    #[error("configuration error at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by user-supplied configuration.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
