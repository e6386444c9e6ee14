use std::path::PathBuf;

/// Errors produced anywhere in the clustering pipeline.
#[derive(Debug, thiserror::Error)]
pub enum CcgcError {
    #[error("dimension mismatch in {op}: {detail}")]
    DimensionMismatch { op: &'static str, detail: String },

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("missing file {}", path.display())]
    MissingFile { path: PathBuf },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{file}:{line}:{column}: {message}")]
    Parse {
        file: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid argument `{name}`: {message}")]
    InvalidArgument { name: &'static str, message: String },

    #[error("stale cluster state: {0}")]
    StaleState(String),

    #[error(
        "training diverged at epoch {epoch} (l_pos={l_pos}, l_neg={l_neg}, high-confidence={high_conf})"
    )]
    Diverged {
        epoch: usize,
        l_pos: f64,
        l_neg: f64,
        high_conf: usize,
    },

    #[error("unknown variant `{0}`")]
    UnknownVariant(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = CcgcError> = std::result::Result<T, E>;

pub(crate) fn invalid_arg(name: &'static str, message: impl Into<String>) -> CcgcError {
    CcgcError::InvalidArgument {
        name,
        message: message.into(),
    }
}

pub(crate) fn dim_mismatch(op: &'static str, detail: impl Into<String>) -> CcgcError {
    CcgcError::DimensionMismatch {
        op,
        detail: detail.into(),
    }
}
