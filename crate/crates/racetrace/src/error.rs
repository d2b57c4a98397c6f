//! Crate-wide error type.

use thiserror::Error;

/// Errors produced while reading, validating, generating, or analyzing
/// traces.
///
/// `Parse` and `Validation` carry the offending input coordinate so tools
/// can point users at the exact line or event. `Config` covers impossible
/// or inconsistent option combinations. `Internal` marks invariant
/// violations inside the analyses themselves; encountering one is a bug.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("position {pos}: {msg}")]
    Validation { pos: u32, msg: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }

    pub fn validation(pos: u32, msg: impl Into<String>) -> Self {
        Error::Validation {
            pos,
            msg: msg.into(),
        }
    }
}
