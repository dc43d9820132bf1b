//! Error type shared across the crate.

use std::fmt;
use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong in the library, one variant per failure class.
#[derive(Debug)]
pub enum Error {
    /// Tensor construction or operator received incompatible shapes.
    Shape { op: &'static str, detail: String },
    /// An argument was outside its documented domain.
    InvalidArg { op: &'static str, detail: String },
    /// A forward op produced NaN/Inf from finite inputs.
    NonFinite { context: String },
    /// A gradient became NaN/Inf; names the offending parameter.
    NonFiniteGrad { param: String },
    /// A loss value became NaN/Inf at the given epoch/batch.
    NonFiniteLoss { epoch: usize, batch: usize },
    /// backward() requires a single-element loss tensor.
    ScalarLossRequired { shape: Vec<usize> },
    /// backward() was called twice on the same tape.
    TapeConsumed,
    /// backward() on a tape with no nodes.
    EmptyTape,
    /// A named layer does not exist in the model.
    UnknownLayer { name: String },
    /// A named layer exists but is not a convolutional feature/kernel.
    NotConvLayer { name: String },
    /// An operation that requires data got none.
    EmptyInput { what: String },
    /// Configuration (ModelSpec / TrainConfig) violates its invariants.
    Config { detail: String },
    /// Dataset directory layout or manifest contents are invalid.
    Data { detail: String },
    /// A split referenced a subject that is not in the manifest.
    MissingSubject { subject: u32 },
    /// Face detector reported a failure for a frame.
    Detector { frame_index: usize, detail: String },
    /// Filesystem failure, with the path involved.
    Io { path: PathBuf, source: std::io::Error },
    /// PPM/PGM decode failure.
    ImageFormat { path: PathBuf, detail: String },
    /// Archive file does not start with the ASPF magic.
    BadMagic { found: [u8; 4] },
    /// Archive format version is not supported.
    UnsupportedVersion { found: u32 },
    /// Archive header failed to parse.
    HeaderParse { detail: String },
    /// Archive payload is shorter than the tensor table requires.
    TruncatedPayload { expected: u64, found: u64 },
    /// Archive tensor table has overlapping or out-of-range entries.
    ArchiveLayout { detail: String },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape { op, detail } => write!(f, "{op}: shape mismatch: {detail}"),
            Error::InvalidArg { op, detail } => write!(f, "{op}: invalid argument: {detail}"),
            Error::NonFinite { context } => write!(f, "non-finite value produced by {context}"),
            Error::NonFiniteGrad { param } => {
                write!(f, "non-finite gradient for parameter `{param}`")
            }
            Error::NonFiniteLoss { epoch, batch } => {
                write!(f, "non-finite loss at epoch {epoch}, batch {batch}")
            }
            Error::ScalarLossRequired { shape } => {
                write!(f, "backward requires a scalar loss, got shape {shape:?}")
            }
            Error::TapeConsumed => write!(f, "backward called on an already-consumed tape"),
            Error::EmptyTape => write!(f, "backward called on an empty tape"),
            Error::UnknownLayer { name } => write!(f, "unknown layer `{name}`"),
            Error::NotConvLayer { name } => {
                write!(f, "layer `{name}` is not a convolutional layer")
            }
            Error::EmptyInput { what } => write!(f, "empty input: {what}"),
            Error::Config { detail } => write!(f, "invalid configuration: {detail}"),
            Error::Data { detail } => write!(f, "invalid data: {detail}"),
            Error::MissingSubject { subject } => {
                write!(f, "holdout subject {subject} not present in manifest")
            }
            Error::Detector {
                frame_index,
                detail,
            } => write!(f, "detector failed on frame {frame_index}: {detail}"),
            Error::Io { path, source } => write!(f, "io error on {}: {source}", path.display()),
            Error::ImageFormat { path, detail } => {
                write!(f, "bad image {}: {detail}", path.display())
            }
            Error::BadMagic { found } => write!(f, "bad magic {found:?}, expected \"ASPF\""),
            Error::UnsupportedVersion { found } => {
                write!(f, "unsupported archive version {found}")
            }
            Error::HeaderParse { detail } => write!(f, "archive header parse error: {detail}"),
            Error::TruncatedPayload { expected, found } => {
                write!(f, "truncated payload: need {expected} bytes, have {found}")
            }
            Error::ArchiveLayout { detail } => write!(f, "archive layout error: {detail}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
