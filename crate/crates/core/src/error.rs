//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("line {line}: parse error: {msg}")]
    Parse { line: usize, msg: String },

    #[error("line {line}: unknown dialogue act code {code:?}")]
    UnknownCode { line: usize, code: String },

    #[error("line {line}: turn {turn} has {count} codes (at most 2 allowed)")]
    TooManyCodes {
        line: usize,
        turn: usize,
        count: usize,
    },

    #[error("line {line}: turn {turn} repeats code {code}")]
    DuplicateCodeInTurn {
        line: usize,
        turn: usize,
        code: String,
    },

    #[error("line {line}: duplicate session id {session_id:?}")]
    DuplicateSessionId { line: usize, session_id: String },

    #[error("empty annotation list")]
    EmptyAnnotations,

    #[error("degenerate agreement: expected agreement is 1 but observed is {observed}")]
    ImpossibleAgreement { observed: f64 },

    #[error("need at least {required} values, got {got}")]
    TooFewValues { required: usize, got: usize },

    #[error("zero variance in {context}")]
    ZeroVariance { context: String },

    #[error("learner {learner_id:?} is missing timepoint {timepoint}")]
    MissingTimepoint {
        learner_id: String,
        timepoint: String,
    },

    #[error("learner {learner_id:?} has duplicate record for timepoint {timepoint}")]
    DuplicateRecord {
        learner_id: String,
        timepoint: String,
    },

    #[error("session {session_id:?} has no group assignment")]
    UngroupedSession { session_id: String },

    #[error("degenerate table: an expected cell count is zero")]
    DegenerateTable,

    #[error("p-value {value} outside [0, 1]")]
    PValueOutOfRange { value: f64 },

    #[error("invalid mining params: {msg}")]
    InvalidParams { msg: String },

    #[error("oracle input exceeds safety bounds: {msg}")]
    OracleBounds { msg: String },

    #[error("pattern has no per-group supports; mine with a group assignment first")]
    MissingGroupSupport,

    #[error("{combinations} assignments exceed the exact cap of {cap}; use the monte_carlo mode")]
    ExactCapExceeded { combinations: u128, cap: u128 },

    #[error("invalid permutation count {n}: need at least {min}")]
    InvalidPermutationCount { n: usize, min: usize },

    #[error("invalid generator spec: {msg}")]
    InvalidSpec { msg: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("{0}")]
    Other(String),
}

impl Error {
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
