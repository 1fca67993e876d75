use std::path::PathBuf;

use thiserror::Error;

/// Error type shared by every module in this crate.
///
/// Variants map one-to-one onto the failure classes the CLI reports
/// (parameter, format, validation, shape), so callers can translate an
/// error into an exit status without string matching.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument or configuration value is out of its documented range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A coordinate lies outside the volume grid.
    #[error("coordinate {coord:?} out of bounds for {extent:?} grid")]
    OutOfBounds {
        coord: [usize; 3],
        extent: [usize; 3],
    },

    /// Containers that must share dimensions do not.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Unrecognized or malformed file container.
    #[error("format error: {0}")]
    Format(String),

    /// Payload length disagrees with what the header declares.
    #[error("payload length mismatch: header declares {expected} bytes, found {found}")]
    Truncation { expected: u64, found: u64 },

    /// A volume violates one of its type invariants.
    #[error("validation error: {0}")]
    Validation(String),

    /// I/O failure, with the offending path attached.
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Attaches path context to an I/O failure.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
