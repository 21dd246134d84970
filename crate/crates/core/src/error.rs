use std::path::PathBuf;

/// Errors produced anywhere in the laboratory.
#[derive(Debug, thiserror::Error)]
pub enum HplError {
    /// A configuration violates one of its invariants.
    #[error("configuration error: {0}")]
    Config(String),
    /// An operation was called outside its contract (bad index, done state, empty input).
    #[error("usage error: {0}")]
    Usage(String),
    /// The requested computation exceeds what exact enumeration supports.
    #[error("capability error: {0}")]
    Capability(String),
    /// A segmenter response broke the partition rules.
    #[error("segmenter response rejected: {reason} (raw response: {raw:?})")]
    Validation { reason: String, raw: String },
    /// The segmenter endpoint could not be reached.
    #[error("segmenter transport error: {0}")]
    Transport(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("TOML error: {0}")]
    Toml(String),
    /// A pipeline stage failed; its partial artifacts are left in place.
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<HplError>,
    },
}

impl HplError {
    pub fn usage(msg: impl Into<String>) -> Self {
        HplError::Usage(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        HplError::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HplError::Io {
            path: path.into(),
            source,
        }
    }
}

impl HplError {
    /// The innermost error, looking through stage wrappers.
    pub fn root(&self) -> &HplError {
        match self {
            HplError::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, HplError>;
