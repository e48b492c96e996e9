use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the identification pipeline and its building blocks.
#[derive(Debug, Error)]
pub enum ModalError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("i/o error on `{path}`: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("window {index} [{start}, {end}) exceeds record length {len}")]
    Bounds {
        index: usize,
        start: usize,
        end: usize,
        len: usize,
    },

    #[error("maneuver detection found {found} separable peaks, {requested} requested (peaks at {peaks:?})")]
    Detection {
        requested: usize,
        found: usize,
        peaks: Vec<usize>,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("gamma calibration failed after {probes} probes (gamma_min={gamma_min:e} card={card_min}, gamma_max={gamma_max:e} card={card_max})")]
    Calibration {
        probes: usize,
        gamma_min: f64,
        card_min: usize,
        gamma_max: f64,
        card_max: usize,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<ModalError>,
    },
}

impl ModalError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ModalError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        ModalError::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Innermost error, skipping stage tags.
    pub fn root(&self) -> &ModalError {
        match self {
            ModalError::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            ModalError::Parse { .. } | ModalError::Config(_) | ModalError::Io { .. } => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, ModalError>;
