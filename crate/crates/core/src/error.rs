use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = AudError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum AudError {
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed input: {0}")]
    Format(String),

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("input too short: {0}")]
    EmptyInput(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("band constraint admits no alignment path ({len_a} vs {len_b} frames, half-width {band})")]
    InfeasibleBand { len_a: usize, len_b: usize, band: usize },

    #[error("no admissible alignment: {frames} frames for a chain needing at least {min_frames}")]
    InfeasibleAlignment { frames: usize, min_frames: usize },

    #[error("unknown acoustic unit symbol `{0}`")]
    UnknownSymbol(String),

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("missing {0}")]
    Missing(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<AudError>,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl AudError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AudError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        AudError::Parse {
            context: context.into(),
            message: message.into(),
        }
    }

    /// Wraps an error with the name of the pipeline stage that produced it.
    pub fn in_stage(self, stage: &str) -> Self {
        match self {
            already @ AudError::Stage { .. } => already,
            other => AudError::Stage {
                stage: stage.to_string(),
                source: Box::new(other),
            },
        }
    }
}
