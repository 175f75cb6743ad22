use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("no peer available: population has {0} node(s)")]
    NoPeerAvailable(usize),

    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    InvalidConfig(Vec<String>),

    #[error("unknown preset `{name}`; valid presets: {}", .valid.join(", "))]
    UnknownPreset { name: String, valid: Vec<&'static str> },

    #[error("cannot write to {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot read {path}: {source}")]
    Input {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;
