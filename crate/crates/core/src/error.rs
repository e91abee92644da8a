//! Error types shared across the toolkit.

use crate::model::CompatReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Two tensor shapes that must agree do not.
    #[error("shape mismatch in {context}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        context: String,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    /// A hyperparameter or structural setting is invalid before any computation runs.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Input data violates a documented contract (e.g. a target row is not one-hot).
    #[error("validation failed: {0}")]
    Validation(String),

    /// The API was called in an unsupported order or state.
    #[error("usage error: {0}")]
    Usage(String),

    /// A network spec fails shape propagation or field consistency.
    #[error("network spec error: {0}")]
    Spec(String),

    /// Teacher and student specs violate the feature/class compatibility constraints.
    #[error("incompatible teacher/student pair: {0}")]
    Incompatible(CompatReport),

    /// A checkpoint file is malformed.
    #[error("checkpoint format error: {0}")]
    Format(#[from] FormatError),

    /// A dataset file is malformed.
    #[error("data format error at byte {offset}: {message}")]
    DataFormat { offset: u64, message: String },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn shape_mismatch(context: &str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::ShapeMismatch {
            context: context.to_string(),
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}

/// Checkpoint decoding failures, one variant per detectable defect.
#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("bad magic bytes (not a checkpoint file)")]
    BadMagic,
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("checksum mismatch: stored {stored:#018x}, computed {computed:#018x}")]
    ChecksumMismatch { stored: u64, computed: u64 },
    #[error("truncated checkpoint: {0}")]
    Truncated(String),
    #[error("spec/parameter mismatch: {0}")]
    SpecMismatch(String),
}
