use std::path::PathBuf;

/// Errors produced by the engine, the file readers and the backend client.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("mask dimensions must be non-zero (got {width}x{height})")]
    ZeroDimensions { width: u32, height: u32 },

    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),

    #[error("invalid mask: {0}")]
    InvalidMask(String),

    #[error("segments {first} and {second} of frame {frame} overlap")]
    OverlappingSegments { frame: usize, first: usize, second: usize },

    #[error("no warp chain from frame {from} to frame {to}")]
    MissingWarp { from: usize, to: usize },

    #[error("invalid warp {from}->{to}: {reason}")]
    InvalidWarp { from: usize, to: usize, reason: String },

    #[error("invalid cost matrix: {0}")]
    InvalidCost(String),

    #[error("inconsistent matching: {0}")]
    InvalidMatching(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("aligning frame {from} to reference frame {to}: {source}")]
    Alignment {
        from: usize,
        to: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("window starting at frame {frame}: {source}")]
    Window {
        frame: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("backend protocol error: {message}{}", raw.as_ref().map(|r| format!(" (payload: {r})")).unwrap_or_default())]
    Protocol { message: String, raw: Option<String> },

    #[error("backend timed out after {0} ms")]
    BackendTimeout(u64),

    #[error("backend error: {0}")]
    Backend(String),

    #[error("{}:{line}: {message}", path.display())]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("usage: {0}")]
    Usage(String),

    #[error("image: {0}")]
    Image(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Process exit code for this error: 1 usage, 2 input format, 3 backend, 4 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::InvalidConfig(_) => 1,
            Error::Format { .. }
            | Error::Io { .. }
            | Error::InvalidMask(_)
            | Error::OverlappingSegments { .. }
            | Error::InvalidScenario(_)
            | Error::InvalidWarp { .. }
            | Error::ZeroDimensions { .. }
            | Error::DimensionMismatch(..)
            | Error::Image(_) => 2,
            Error::Protocol { .. } | Error::BackendTimeout(_) | Error::Backend(_) => 3,
            Error::Alignment { source, .. } | Error::Window { source, .. } => source.exit_code(),
            Error::MissingWarp { .. } => 2,
            Error::InvalidCost(_) | Error::InvalidMatching(_) => 4,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn protocol(message: impl Into<String>, raw: Option<&str>) -> Self {
        Error::Protocol {
            message: message.into(),
            raw: raw.map(str::to_owned),
        }
    }
}
