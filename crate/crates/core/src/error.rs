use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the library.
///
/// Every variant carries the module that produced it so front ends can render
/// a qualified code (see [`Error::code`]).
#[derive(Debug, Error)]
pub enum Error {
    #[error("[{module}] invalid configuration `{field}`: {reason}")]
    Config {
        module: &'static str,
        field: String,
        reason: String,
    },

    #[error("[{module}] shape mismatch: {reason}")]
    Shape { module: &'static str, reason: String },

    #[error("[{module}] argument out of domain: {reason}")]
    Domain { module: &'static str, reason: String },

    #[error("[lrv] insufficient data: need at least {needed} observations, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("[lrv] degenerate long-run variance for sample {}: {reason}", sample + 1)]
    DegenerateLrv {
        /// Zero-based; messages count from one.
        sample: usize,
        reason: String,
    },

    #[error("[ingest] {}:{line}: {reason}", file.display())]
    Ingest {
        file: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("[io] {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn config(module: &'static str, field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            module,
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn shape(module: &'static str, reason: impl Into<String>) -> Self {
        Error::Shape {
            module,
            reason: reason.into(),
        }
    }

    pub(crate) fn domain(module: &'static str, reason: impl Into<String>) -> Self {
        Error::Domain {
            module,
            reason: reason.into(),
        }
    }

    /// Module-qualified error code, e.g. `lrv::degenerate`.
    pub fn code(&self) -> String {
        match self {
            Error::Config { module, .. } => format!("{module}::config"),
            Error::Shape { module, .. } => format!("{module}::shape"),
            Error::Domain { module, .. } => format!("{module}::domain"),
            Error::InsufficientData { .. } => "lrv::insufficient-data".to_string(),
            Error::DegenerateLrv { .. } => "lrv::degenerate".to_string(),
            Error::Ingest { .. } => "ingest::parse".to_string(),
            Error::Io { .. } => "io::error".to_string(),
        }
    }

    /// True when the error stems from an invalid configuration rather than
    /// from the data or the environment.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. })
    }

    /// Sample index attached to the error, if any.
    pub fn with_sample(self, sample: usize) -> Self {
        match self {
            Error::DegenerateLrv { reason, .. } => Error::DegenerateLrv { sample, reason },
            Error::InsufficientData { needed, got } => Error::Shape {
                module: "lrv",
                reason: format!("sample {}: need at least {needed} observations, got {got}", sample + 1),
            },
            other => other,
        }
    }
}
