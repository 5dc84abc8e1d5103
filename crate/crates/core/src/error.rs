use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("answer set is empty")]
    EmptyAnswerSet,
    #[error("answer {0:?} is empty after normalization")]
    EmptyAnswer(String),
    #[error("duplicate answer {0:?} (same normalized text as an earlier answer)")]
    DuplicateAnswer(String),
    #[error("prediction {0:?} carries a non-finite score")]
    NonFiniteScore(String),
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed input at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("line {line} (byte {offset}): invalid JSON: {message}")]
    JsonLine { line: usize, offset: usize, message: String },
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("line {line}: unknown taxonomy label {label:?}")]
    UnknownLabel { line: usize, label: String },
    #[error("line {line}: duplicate id {id:?}")]
    DuplicateId { line: usize, id: String },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TaxonomyError {
    #[error("conflicting first-round labels and no adjudication record")]
    NeedsAdjudication,
    #[error("adjudication needs two initial records, got {0}")]
    TooFewRecords(usize),
    #[error("records belong to different instances")]
    MixedInstances,
    #[error("cohen's kappa needs at least one label pair")]
    EmptyPairs,
    #[error("lexicon line {line}: {message}")]
    Lexicon { line: usize, message: String },
}

#[derive(Debug, Error, PartialEq)]
pub enum DecodeError {
    #[error("labeling has {labels} probabilities but the passage has {tokens} tokens")]
    LengthMismatch { labels: usize, tokens: usize },
    #[error("probability {0} outside [0, 1]")]
    BadProbability(f64),
    #[error("candidate span {start}..{end} is invalid for a passage of {len} tokens")]
    BadCandidate { start: usize, end: usize, len: usize },
    #[error("candidate score {0} is not finite")]
    NonFiniteScore(f64),
    #[error("answer count {k} outside 1..={k_max}")]
    BadCount { k: usize, k_max: usize },
    #[error("answer {0:?} cannot be serialized (contains ';' or is blank)")]
    Unrepresentable(String),
    #[error("count serialization needs at least one answer")]
    EmptyCountedAnswers,
    #[error("pipeline prompt needs a predicted answer count")]
    MissingCount,
    #[error("remaining-answer count must be at least 1")]
    ZeroRemaining,
}

/// Failure of one paradigm run on one instance.
#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("request {0} timed out")]
    Timeout(String),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("protocol violation: {message}; payload: {payload}")]
    Protocol { message: String, payload: String },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EnsembleError {
    #[error("voting needs at least two prediction sets, got {0}")]
    TooFewSets(usize),
    #[error("prediction sets disagree on instance id: {0:?} vs {1:?}")]
    MismatchedIds(String, String),
}

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("unknown annotator {0:?}")]
    UnknownAnnotator(String),
    #[error("unknown instance {0:?}")]
    UnknownInstance(String),
    #[error("annotator {annotator:?} has no open task for {instance:?}")]
    NotAssigned { annotator: String, instance: String },
    #[error("annotator {annotator:?} already labeled {instance:?} differently")]
    ConflictingResubmit { annotator: String, instance: String },
    #[error("annotator {0:?} may not adjudicate")]
    NotAdjudicator(String),
    #[error("label is not valid for this task: {0}")]
    InvalidLabel(String),
    #[error("log line {line}: {message}")]
    Log { line: usize, message: String },
    #[error("log i/o: {0}")]
    Io(#[from] std::io::Error),
}
