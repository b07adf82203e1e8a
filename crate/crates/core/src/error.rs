use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A kernel was called outside its domain (non-positive or non-finite variance, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Shapes or call preconditions do not line up.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A numerical routine failed (quadrature did not converge, NaN appeared, ...).
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Malformed input file. `section` names the part of the format that could not be read.
    #[error("parse error in {section}: {reason}")]
    Parse { section: String, reason: String },

    #[error("unsupported checkpoint version {found} (this build reads version {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn parse(section: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Parse { section: section.into(), reason: reason.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// True for failures caused by the numbers rather than by the caller's input.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Numeric(_) | Error::Domain(_))
    }

    /// Prefix the message with context (layer index, epoch, ...), keeping the variant.
    pub fn context(self, ctx: impl std::fmt::Display) -> Self {
        match self {
            Error::Domain(m) => Error::Domain(format!("{ctx}: {m}")),
            Error::Contract(m) => Error::Contract(format!("{ctx}: {m}")),
            Error::Numeric(m) => Error::Numeric(format!("{ctx}: {m}")),
            Error::Parse { section, reason } => Error::Parse { section, reason: format!("{ctx}: {reason}") },
            other => other,
        }
    }
}
