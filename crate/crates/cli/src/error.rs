use std::path::PathBuf;

use thiserror::Error;

/// Failures surfaced by the command-line front end.
#[derive(Debug, Error)]
pub enum CliError {
    /// Malformed file, unknown key or type mismatch, as reported by the TOML reader.
    #[error("{origin}: {message}")]
    ConfigSyntax { origin: String, message: String },

    /// A well-typed value that breaks an invariant, or a missing mandatory key.
    #[error("{}", describe_value_error(origin, *line, key, message))]
    ConfigValue {
        origin: String,
        line: Option<usize>,
        key: String,
        message: String,
    },

    #[error(transparent)]
    Model(#[from] harvest_sa_core::error::Error),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(String),

    #[error("manifest: {0}")]
    Manifest(String),

    #[error("oracle suite: {0}")]
    Oracle(String),
}

fn describe_value_error(origin: &str, line: Option<usize>, key: &str, message: &str) -> String {
    match line {
        Some(line) => format!("{origin}:{line}: key '{key}': {message}"),
        None => format!("{origin}: key '{key}': {message}"),
    }
}

impl CliError {
    /// Short category tag used in the structured error line.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::ConfigSyntax { .. } | CliError::ConfigValue { .. } => "config",
            CliError::Model(_) => "model",
            CliError::Io { .. } => "io",
            CliError::Csv(_) => "csv",
            CliError::Manifest(_) => "manifest",
            CliError::Oracle(_) => "oracle",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
