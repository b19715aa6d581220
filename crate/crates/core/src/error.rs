use thiserror::Error;

/// Errors raised by the geometric and analytic routines of this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    /// A point fell outside the region where a map is defined (tube, chart, cube).
    #[error("domain error: {what} (distance estimate {distance:.3e})")]
    Domain { what: String, distance: f64 },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("sampling produced no admissible {0}; increase the sample count")]
    Sampling(String),

    #[error("construction failed at center {center}: {reason}")]
    Construction { center: usize, reason: String },

    #[error("calibration failed in stage `{stage}`: {reason}")]
    Calibration { stage: String, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn domain(what: impl Into<String>, distance: f64) -> Self {
        Error::Domain {
            what: what.into(),
            distance,
        }
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub fn calibration(stage: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Calibration {
            stage: stage.into(),
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
