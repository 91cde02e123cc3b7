use thiserror::Error;

/// Errors raised by the simulation, transformer and design-rule engines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A parameter is outside its physical domain.
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    /// The network admittance system has no unique solution at this frequency.
    #[error("network is singular at {frequency_hz} Hz: {detail}")]
    Singular { frequency_hz: f64, detail: String },

    /// A sweep or range argument is malformed.
    #[error("invalid range: {0}")]
    InvalidRange(String),

    /// Event localization or state evolution failed.
    #[error("integration failed at t = {time:.6e} s in {mode}: {detail}")]
    Integration {
        time: f64,
        mode: String,
        detail: String,
    },

    /// An analysis was requested on data that does not satisfy its precondition.
    #[error("precondition not met: {0}")]
    Precondition(String),

    /// Efficiency is undefined when no power is drawn from the source.
    #[error("efficiency undefined: input power is {0} W")]
    UndefinedEfficiency(f64),

    /// Division by a zero quantity in a closed-form design rule.
    #[error("domain error in {rule}: {detail}")]
    Domain { rule: &'static str, detail: String },

    /// Writing CSV or JSON output failed.
    #[error("output failed: {0}")]
    Output(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Output(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Output(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Output(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        field,
        reason: reason.into(),
    }
}
