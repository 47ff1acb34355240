use std::path::PathBuf;

use thiserror::Error;

/// Broad error classes, used for CLI exit codes and binding exception types.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    /// Unreadable or malformed input (missing file, bad bytes, unknown schema).
    Input,
    /// Inputs that parse but violate a contract (dimensions, structure, arguments).
    Validation,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("dimension mismatch: expected {expected_width}x{expected_height}, got {width}x{height}")]
    DimensionMismatch {
        expected_width: u32,
        expected_height: u32,
        width: u32,
        height: u32,
    },

    #[error("invalid dimensions {width}x{height}")]
    InvalidDimensions { width: u32, height: u32 },

    #[error("structural integrity violation: {0}")]
    Structural(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("confidence mask kind mismatch: expected {expected}, got {actual}")]
    MaskKind {
        expected: &'static str,
        actual: &'static str,
    },

    #[error("unsupported bit depth in {path}: {detail}")]
    BitDepth { path: PathBuf, detail: String },

    #[error("format error in {path}: {detail}")]
    Format { path: PathBuf, detail: String },

    #[error("unknown schema version {found} in {path} (supported: {supported})")]
    Schema {
        path: PathBuf,
        found: u64,
        supported: u32,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("sample '{sample_id}': {source}")]
    Sample {
        sample_id: String,
        #[source]
        source: Box<EvalError>,
    },
}

impl EvalError {
    pub fn category(&self) -> ErrorCategory {
        match self {
            EvalError::BitDepth { .. }
            | EvalError::Format { .. }
            | EvalError::Schema { .. }
            | EvalError::Io { .. }
            | EvalError::Manifest(_) => ErrorCategory::Input,
            EvalError::DimensionMismatch { .. }
            | EvalError::InvalidDimensions { .. }
            | EvalError::Structural(_)
            | EvalError::InvalidArgument(_)
            | EvalError::MaskKind { .. } => ErrorCategory::Validation,
            EvalError::Sample { source, .. } => source.category(),
        }
    }

    /// Short machine-readable name of the variant.
    pub fn kind_name(&self) -> &'static str {
        match self {
            EvalError::DimensionMismatch { .. } => "dimension_mismatch",
            EvalError::InvalidDimensions { .. } => "invalid_dimensions",
            EvalError::Structural(_) => "structural",
            EvalError::InvalidArgument(_) => "invalid_argument",
            EvalError::MaskKind { .. } => "mask_kind",
            EvalError::BitDepth { .. } => "bit_depth",
            EvalError::Format { .. } => "format",
            EvalError::Schema { .. } => "schema",
            EvalError::Io { .. } => "io",
            EvalError::Manifest(_) => "manifest",
            EvalError::Sample { source, .. } => source.kind_name(),
        }
    }

    pub fn in_sample(self, sample_id: &str) -> EvalError {
        match self {
            e @ EvalError::Sample { .. } => e,
            other => EvalError::Sample {
                sample_id: sample_id.to_string(),
                source: Box::new(other),
            },
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, detail: impl Into<String>) -> EvalError {
        EvalError::Format {
            path: path.into(),
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> EvalError {
        EvalError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, EvalError>;

pub(crate) fn check_dims(expected: (u32, u32), actual: (u32, u32)) -> Result<()> {
    if expected != actual {
        return Err(EvalError::DimensionMismatch {
            expected_width: expected.0,
            expected_height: expected.1,
            width: actual.0,
            height: actual.1,
        });
    }
    Ok(())
}
