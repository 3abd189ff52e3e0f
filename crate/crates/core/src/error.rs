use thiserror::Error;

#[derive(Debug, Error)]
pub enum EsecError {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("temporal window has {got} frames, expected {expected}")]
    WindowTooShort { got: usize, expected: usize },

    #[error("episode has no entity pairs (need at least two entities)")]
    NoPairs,

    #[error("event list is empty")]
    NoEvents,

    #[error("index {index} out of range 1..={len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid primitive library: {0}")]
    Library(String),

    #[error("unresolvable selector `{0}` in postcondition")]
    UnresolvedSelector(String),

    #[error("invalid episode script: {}", .0.join("; "))]
    Script(Vec<String>),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown ablation variant `{0}`")]
    UnknownVariant(String),

    #[error("unknown noise level `{0}`")]
    UnknownLevel(String),

    #[error("episode mismatch: {0}")]
    EpisodeMismatch(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl EsecError {
    /// True for failures caused by reading or writing files rather than by bad content.
    pub fn is_io(&self) -> bool {
        matches!(self, EsecError::Io(_))
    }
}

pub type Result<T> = std::result::Result<T, EsecError>;
