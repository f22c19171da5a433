use std::path::PathBuf;

use serde_json::json;

/// Errors of the experiment harness.
#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] hypertrain_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config line {line}: {msg}")]
    Syntax { line: usize, msg: String },

    #[error("config: {0}")]
    Invalid(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        use hypertrain_core::Error as E;
        match self {
            HarnessError::Core(e) => match e {
                E::Shape { .. } => "shape",
                E::Domain(_) => "domain",
                E::NonScalarLoss(_) | E::TapeMismatch => "tape",
                E::NonFinite { .. } => "non_finite",
                E::Divergence { .. } => "divergence",
                E::IllConditioned(_) => "ill_conditioned",
                E::Format { .. } => "format",
                E::Config(_) => "config",
            },
            HarnessError::Io { .. } => "io",
            HarnessError::Syntax { .. } | HarnessError::Invalid(_) => "config",
            HarnessError::Json(_) => "json",
        }
    }

    /// The error as a single JSON object for stderr.
    pub fn to_json(&self) -> serde_json::Value {
        json!({ "error": { "kind": self.kind(), "message": self.to_string() } })
    }
}
