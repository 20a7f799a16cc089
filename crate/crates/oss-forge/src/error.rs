//! Error types shared across the pipeline.

use std::path::PathBuf;

/// Crate-wide result alias.
pub type Result<T, E = ForgeError> = std::result::Result<T, E>;

/// Errors surfaced by pipeline stages and the library API.
#[derive(Debug, thiserror::Error)]
pub enum ForgeError {
    /// Configuration is invalid. Carries one message per offending field.
    #[error("invalid configuration:\n{}", issues.join("\n"))]
    Config { issues: Vec<String> },

    /// A prompt template failed structural validation.
    #[error("invalid prompt template: {0}")]
    InvalidTemplate(String),

    /// I/O failure with the path that caused it.
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A record stream contained an unrecoverable malformed record.
    #[error("{path}:{line}: {message}")]
    MalformedRecord {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// A stage was invoked before the stage that produces its input.
    #[error("stage `{stage}` requires `{path}`; run `{producer}` first")]
    MissingArtifact {
        stage: &'static str,
        path: PathBuf,
        producer: &'static str,
    },

    /// Unrecoverable teacher/embedder backend failure (e.g. authentication).
    #[error("backend error: {0}")]
    Backend(String),

    /// An analysis could not be computed from the given inputs.
    #[error("analysis error: {0}")]
    Analysis(String),

    /// Another pipeline instance owns the output directory.
    #[error("output directory is locked by another run: {path}")]
    Locked { path: PathBuf },
}

impl ForgeError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ForgeError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn config(issues: Vec<String>) -> Self {
        ForgeError::Config { issues }
    }

    /// Exit status the CLI maps this error to. Config problems exit with 2,
    /// everything else with 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            ForgeError::Config { .. } | ForgeError::InvalidTemplate(_) => 2,
            _ => 1,
        }
    }
}
