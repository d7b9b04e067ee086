//! Error type shared across the toolkit.

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by calibration, detection, fitting, generation, and IO.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A JSONL line or JSON document failed to parse or validate.
    #[error("line {line}: {message}")]
    ParseLine { line: usize, message: String },

    /// A persisted file failed structural validation.
    #[error("invalid file: {0}")]
    InvalidFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// A raw detector score was NaN or infinite.
    #[error("non-finite raw score{}: {value}", id_suffix(.id))]
    NonFiniteScore { id: Option<String>, value: f64 },

    /// A nonconformity score or threshold fell outside its valid interval.
    #[error("score {value} outside the open interval (0, 1)")]
    ScoreOutOfRange { value: f64 },

    /// Alpha must lie strictly between 0 and 1.
    #[error("alpha must be in (0, 1), got {0}")]
    InvalidAlpha(f64),

    /// Bin width must satisfy 1 <= w <= l_max.
    #[error("bin width {w} invalid for l_max {l_max} (need 1 <= w <= l_max)")]
    InvalidWidth { w: u32, l_max: u32 },

    /// Quantiles cannot be computed from an empty sample.
    #[error("empty calibration set")]
    EmptyCalibration,

    /// An operation that needs at least one element got none.
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    /// A machine-labeled record reached calibration ingestion.
    #[error("calibration record {id} is labeled machine; calibration requires human-written text")]
    CalibrationNotHuman { id: String },

    /// An unlabeled record reached calibration ingestion without the override.
    #[error("calibration record {id} has no label; pass the unlabeled override to accept it")]
    CalibrationUnlabeled { id: String },

    /// Profile and table disagree on the maximum calibrated length.
    #[error("l_max mismatch: profile has {profile}, table has {table}")]
    LMaxMismatch { profile: u32, table: u32 },

    /// Evaluation inputs of unequal length.
    #[error("length mismatch: {left} predictions vs {right} truth records")]
    LengthMismatch { left: usize, right: usize },

    /// An id present on one side of a join is missing or duplicated on the other.
    #[error("id mismatch during join: {id}")]
    IdMismatch { id: String },

    /// An instance needed a label that was absent.
    #[error("instance {id} has no label")]
    MissingLabel { id: String },

    /// Baseline fitting needs both classes present.
    #[error("baseline fit requires both labels; got {n_human} human and {n_machine} machine")]
    SingleClass { n_human: usize, n_machine: usize },

    /// Platt fitting failed to converge; carries the last iterate.
    #[error("platt fit did not converge after {iterations} iterations (last a={a}, b={b})")]
    PlattDiverged { a: f64, b: f64, iterations: usize },

    /// Pearson correlation is undefined when a coordinate has zero variance.
    #[error("correlation undefined: {0} has zero variance")]
    ZeroVariance(&'static str),

    /// A calibrator model was queried for a field its kind does not carry.
    #[error("calibrator model of kind {kind} is missing its fitted parameters")]
    ModelIncomplete { kind: &'static str },

    /// Invalid synthetic-generator configuration.
    #[error("invalid synthetic config: {0}")]
    InvalidConfig(String),

    /// Edit attacks on empty token sequences are undefined for delete/substitute.
    #[error("edit attack `{kind}` requires a non-empty token sequence")]
    EmptyTokens { kind: &'static str },

    /// Insert/substitute attacks need a vocabulary to draw from.
    #[error("edit attack `{kind}` requires a non-empty vocabulary")]
    EmptyVocabulary { kind: &'static str },
}

fn id_suffix(id: &Option<String>) -> String {
    match id {
        Some(id) => format!(" for instance {id}"),
        None => String::new(),
    }
}
