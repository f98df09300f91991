use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, LensError>;

/// Errors surfaced by the toolkit. Every variant carries the module that raised it
/// so callers can print a qualified message.
#[derive(Debug, Error)]
pub enum LensError {
    /// Invalid configuration or argument (bad k, unknown id, unknown config key).
    #[error("{module}: config error: {msg}")]
    Config { module: &'static str, msg: String },

    /// Malformed or structurally inconsistent input data.
    #[error("{module}: format error: {msg}")]
    Format { module: &'static str, msg: String },

    /// A value failed to parse at a known line of an input file.
    #[error("{module}: parse error at line {line}: {msg}")]
    Parse {
        module: &'static str,
        line: usize,
        msg: String,
    },

    /// An internal invariant was violated; indicates a bug.
    #[error("{module}: invariant violated: {msg}")]
    Invariant { module: &'static str, msg: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl LensError {
    pub fn config(module: &'static str, msg: impl Into<String>) -> Self {
        LensError::Config {
            module,
            msg: msg.into(),
        }
    }

    pub fn format(module: &'static str, msg: impl Into<String>) -> Self {
        LensError::Format {
            module,
            msg: msg.into(),
        }
    }

    pub fn parse(module: &'static str, line: usize, msg: impl Into<String>) -> Self {
        LensError::Parse {
            module,
            line,
            msg: msg.into(),
        }
    }

    pub fn invariant(module: &'static str, msg: impl Into<String>) -> Self {
        LensError::Invariant {
            module,
            msg: msg.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LensError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this error: 2 config, 3 data/format, 4 internal invariant.
    pub fn exit_code(&self) -> i32 {
        match self {
            LensError::Config { .. } => 2,
            LensError::Format { .. } | LensError::Parse { .. } | LensError::Io { .. } => 3,
            LensError::Invariant { .. } => 4,
        }
    }
}
