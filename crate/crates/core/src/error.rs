use alloc::string::String;

/// Errors raised by the charging model, predictor and planners.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("value {value} outside the domain of {what}")]
    Domain { what: &'static str, value: f64 },

    #[error("invalid session {id}: {reason}")]
    Session { id: String, reason: String },

    #[error("cannot fit model: {0}")]
    ModelFit(String),

    #[error("no {day_type} days in history; configure a default daily arrival count")]
    NoMatchingDays { day_type: &'static str },

    #[error("charge never completes: {0}")]
    NoCompletion(String),

    #[error("scenario {0} needs a session history to fit the predictor")]
    MissingHistory(&'static str),
}

pub type Result<T> = core::result::Result<T, Error>;
