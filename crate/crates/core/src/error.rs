use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("layer {index} ({kind}): {message}")]
    Layer {
        index: usize,
        kind: &'static str,
        message: String,
    },

    #[error("layer {index} ({kind}) is not supported by {method}")]
    UnsupportedLayer {
        index: usize,
        kind: &'static str,
        method: &'static str,
    },

    #[error("output index {index} out of range for {len} outputs")]
    OutputIndex { index: usize, len: usize },

    #[error("trace does not belong to this model: {0}")]
    TraceMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("too many features for exhaustive enumeration: {count} (limit {limit})")]
    TooManyFeatures { count: usize, limit: usize },

    #[error("model validation failed: {0}")]
    Validation(String),

    #[error("malformed model file at `{path}`: {message}")]
    Format { path: String, message: String },

    #[error("training diverged (loss is not finite) at epoch {epoch}; seed={seed}, config={config}")]
    Divergence {
        epoch: usize,
        seed: u64,
        config: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn layer(index: usize, kind: &'static str, message: impl Into<String>) -> Self {
        Error::Layer {
            index,
            kind,
            message: message.into(),
        }
    }
}
