use thiserror::Error;

#[derive(Debug, Error)]
pub enum AutodiffError {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op}: invalid configuration: {reason}")]
    Config { op: &'static str, reason: String },
    #[error("{op}: non-finite value at index {index}")]
    NonFinite { op: &'static str, index: usize },
    #[error("backward needs a scalar loss, got shape {shape:?}")]
    NotScalar { shape: Vec<usize> },
    #[error("target index {target} out of range for {len} logits")]
    TargetOutOfRange { target: usize, len: usize },
    #[error("optimizer state does not match parameter {index}")]
    OptimizerShape { index: usize },
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("bad checkpoint magic")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u32),
    #[error("checkpoint truncated at byte {offset}")]
    Truncated { offset: usize },
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("checkpoint metadata: {0}")]
    Metadata(#[from] serde_json::Error),
    #[error("missing array {0:?}")]
    MissingArray(String),
    #[error("i/o on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
