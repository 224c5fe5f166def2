use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("fading profile has no taps")]
    EmptyProfile,

    #[error("tap profile line {line}: {msg}")]
    TapFile { line: usize, msg: String },

    #[error("MCS table line {line}: {msg}")]
    McsTable { line: usize, msg: String },

    #[error("effective SNR of an empty RB set")]
    EmptySnrList,

    #[error("CQI report delivered at {delivered_at} s precedes previous delivery at {previous} s")]
    OutOfOrderReport { delivered_at: f64, previous: f64 },

    #[error("report has {got} subbands, history expects {expected}")]
    SubbandMismatch { got: usize, expected: usize },

    #[error("CQI outdating {delta_t} s outside (0, {max}] s")]
    DeltaOutOfRange { delta_t: f64, max: f64 },

    #[error("no CQI report received yet")]
    NoReport,

    #[error("sweep CSV: {0}")]
    Csv(String),

    #[error("trace output: {0}")]
    Trace(String),

    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
}
