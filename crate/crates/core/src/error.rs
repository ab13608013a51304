use thiserror::Error;

use crate::ebbound::EbBoundResult;

#[derive(Debug, Error)]
pub enum Error {
    #[error("not a physical density matrix: {0}")]
    NonPhysical(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("tomography value <{axis}> = {value} outside [-1 - {slack}, 1 + {slack}]; record is corrupt")]
    CorruptTomography { axis: &'static str, value: f64, slack: f64 },

    #[error("{name} = {value} is out of range ({expected})")]
    OutOfRange {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("invalid channel: {0}")]
    InvalidChannel(String),

    #[error("invalid POVM: {0}")]
    InvalidPovm(String),

    #[error("expected {expected} states, got {got}")]
    WrongLength { expected: usize, got: usize },

    #[error("invalid payoff table: {0}")]
    InvalidTable(String),

    #[error("separable-state optimizer did not converge in {iterations} iterations (best value {})", .best.value)]
    NotConverged {
        iterations: usize,
        best: Box<EbBoundResult>,
    },

    #[error("invalid decoy intensities: {0}")]
    InvalidIntensities(String),

    #[error("missing gain for {0}")]
    MissingGain(String),

    #[error("missing yield bounds for pair {0}")]
    MissingBounds(String),

    #[error("inconsistent statistics for {pair}: lower bound {lower} exceeds upper bound {upper}")]
    InconsistentStatistics { pair: String, lower: f64, upper: f64 },

    #[error("missing {0} basis settings")]
    MissingSettings(&'static str),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
