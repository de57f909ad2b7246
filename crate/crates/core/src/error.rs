use thiserror::Error;

use crate::scenario::ApId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("reflection grid: wall patch of {area_m2} m^2 leaves fewer than 1 patch per wall")]
    PatchTooLarge { area_m2: f64 },

    #[error("unusable reading from AP {ap}: rss {rss_a} A is not positive")]
    UnusableReading { ap: ApId, rss_a: f64 },

    #[error("insufficient anchors: {usable} usable readings, need 3")]
    InsufficientAnchors { usable: usize },

    #[error("no non-collinear triple among usable anchors")]
    NoNonCollinearTriple,

    #[error("singular trilateration system (collinear anchors)")]
    SingularSystem,

    #[error("insufficient history: {have} entries, need {need}")]
    InsufficientHistory { have: usize, need: usize },

    #[error("unknown access point {0}")]
    UnknownAp(ApId),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
