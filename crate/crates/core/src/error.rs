use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// What was wrong with a structurally valid document.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SchemaProblem {
    #[error("dataset has no videos")]
    EmptyDataset,
    #[error("duplicate id")]
    DuplicateId,
    #[error("label index {index} out of range for {classes} classes")]
    LabelOutOfRange { index: usize, classes: usize },
    #[error("empty string in list payload")]
    EmptyString,
    #[error("video has no frames")]
    EmptyFrames,
    #[error("retrieval test video has no captions")]
    MissingCaptions,
    #[error("entry does not match the manifest task: {0}")]
    TaskMismatch(&'static str),
    #[error("frame index {index} out of range for {frames} frames")]
    FrameOutOfRange { index: usize, frames: usize },
    #[error("payload kind does not match concept `{0}`")]
    PayloadKind(String),
    #[error("id is both retained and removed")]
    Overlap,
    #[error("removal_fraction {stated} does not match {computed}")]
    RemovalFraction { stated: f64, computed: f64 },
    #[error("expected {expected} verdicts, found {found}")]
    VerdictCount { expected: usize, found: usize },
    #[error("split does not partition the test set: {0}")]
    NotAPartition(String),
    #[error("belongs to dataset `{found}`, expected `{expected}`")]
    DatasetMismatch { expected: String, found: String },
    #[error("unknown sample id")]
    UnknownSample,
    #[error("{0}")]
    Other(String),
}

/// Failure talking to an inference endpoint.
#[derive(Debug, Clone, Error)]
pub enum EndpointError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("http status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: Box<EndpointError> },
}

impl EndpointError {
    /// Transport failures, rate limits and server errors are worth another attempt.
    pub fn is_retryable(&self) -> bool {
        match self {
            EndpointError::Transport(_) => true,
            EndpointError::Status { status, .. } => *status == 429 || *status >= 500,
            EndpointError::Malformed(_) | EndpointError::Exhausted { .. } => false,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
    #[error("schema error at `{key}`: {problem}")]
    Schema { key: String, problem: SchemaProblem },
    #[error("unknown video id `{0}`")]
    UnknownVideo(String),
    #[error("missing description entry: {0}")]
    MissingEntry(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("endpoint error: {0}")]
    Endpoint(#[from] EndpointError),
    #[error("image error for {}: {message}", path.display())]
    Image { path: PathBuf, message: String },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("vector has zero norm")]
    ZeroNorm,
    #[error("missing embedding for `{0}`")]
    MissingEmbedding(String),
    #[error("no per-sample results")]
    EmptyResults,
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("training failed: {0}")]
    TrainFailure(String),
    #[error("no prediction for sample `{0}`")]
    MissingSample(String),
    #[error("class index {index} for sample `{id}` is out of range ({classes} classes)")]
    UnknownClass { id: String, index: usize, classes: usize },
    #[error("binary format error in {path}: {message}")]
    Format { path: String, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn schema(key: impl Into<String>, problem: SchemaProblem) -> Self {
        Error::Schema { key: key.into(), problem }
    }

    pub(crate) fn parse(path: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse { path: path.into(), message: message.to_string() }
    }
}
