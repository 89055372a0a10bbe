use std::fmt;
use std::io;
use std::path::PathBuf;

/// Errors produced by the stereo pipeline.
#[derive(Debug)]
pub enum Error {
    /// Underlying I/O failure, with the path involved when known.
    Io { path: Option<PathBuf>, source: io::Error },
    /// A Netpbm file could not be decoded. `offset` is the byte position of the problem.
    Format { offset: usize, message: String },
    /// Two inputs that must agree in size do not.
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    /// A parameter or argument is outside its admissible range.
    InvalidParameter(String),
    /// An encoded value does not fit into an 8-bit sample.
    ValueOverflow { value: u64, max: u64 },
    /// A window or neighbor lookup fell outside the image.
    OutOfBounds { x: isize, y: isize },
    /// An exhaustive search was requested on an instance that is too large.
    TooLarge { labelings: f64, limit: f64 },
    /// A labeling contains an invalid label where a valid one is required.
    InvalidLabel { x: usize, y: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: Some(path.into()),
            source,
        }
    }

    pub(crate) fn format(offset: usize, message: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: message.into(),
        }
    }

    pub(crate) fn param(message: impl Into<String>) -> Self {
        Error::InvalidParameter(message.into())
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Io {
                path: Some(path),
                source,
            } => write!(f, "{}: {}", path.display(), source),
            Error::Io { path: None, source } => write!(f, "{source}"),
            Error::Format { offset, message } => {
                write!(f, "malformed image at byte {offset}: {message}")
            }
            Error::DimensionMismatch { expected, found } => write!(
                f,
                "dimension mismatch: {}x{} vs {}x{}",
                expected.0, expected.1, found.0, found.1
            ),
            Error::InvalidParameter(message) => write!(f, "invalid parameter: {message}"),
            Error::ValueOverflow { value, max } => {
                write!(f, "encoded value {value} exceeds maximum {max}")
            }
            Error::OutOfBounds { x, y } => write!(f, "position ({x}, {y}) is outside the image"),
            Error::TooLarge { labelings, limit } => write!(
                f,
                "exhaustive search over {labelings:.0} labelings exceeds limit {limit:.0}"
            ),
            Error::InvalidLabel { x, y } => write!(f, "invalid label at ({x}, {y})"),
        }
    }
}

// Io renders its source in Display, so no `source()` chain is exposed.
impl std::error::Error for Error {}

impl From<io::Error> for Error {
    fn from(source: io::Error) -> Self {
        Error::Io { path: None, source }
    }
}
