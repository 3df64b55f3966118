use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input too short: {len} samples, need at least {needed}")]
    InputTooShort { len: usize, needed: usize },

    #[error("shape mismatch in {context}: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        context: &'static str,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("STFT parameter mismatch: {0}")]
    ParamsMismatch(String),

    #[error("sample rate mismatch: expected {expected} Hz, got {actual} Hz")]
    SampleRate { expected: u32, actual: u32 },

    #[error("source {index} at {position:?} lies outside the room {room:?}")]
    SourceOutsideRoom {
        index: usize,
        position: [f64; 3],
        room: [f64; 3],
    },

    #[error("scene sampling gave up after {0} rejected draws")]
    SceneRejected(usize),

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(&'static str),

    #[error("singular matrix at bin {k}, frame {i}")]
    Singular { k: usize, i: usize },

    #[error("reference signal has zero energy")]
    ZeroReference,

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("arrangement error: {0}")]
    Arrangement(String),

    #[error("model/input mismatch: {0}")]
    ModelMismatch(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("pipeline stage `{stage}`: {reason}")]
    Stage { stage: String, reason: String },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("training diverged at epoch {epoch}, step {step}: {detail}")]
    Diverged {
        epoch: usize,
        step: usize,
        detail: String,
        last_good: Option<PathBuf>,
    },

    #[error("external metric failed: {0}")]
    ExternalMetric(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("WAV error on {path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(context: &'static str, expected: &[usize], actual: &[usize]) -> Self {
        Error::ShapeMismatch {
            context,
            expected: expected.to_vec(),
            actual: actual.to_vec(),
        }
    }
}
