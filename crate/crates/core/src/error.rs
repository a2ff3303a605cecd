use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("bad magic bytes {found:?}, expected \"MVTF\"")]
    BadMagic { found: [u8; 4] },

    #[error("unsupported tensor file version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("invalid shape: {0}")]
    Shape(String),

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("big-endian PFM (positive scale {0}) is not supported")]
    UnsupportedEndianness(f64),

    #[error("camera file is missing the `{0}` section")]
    MissingSection(&'static str),

    #[error("rotation is not orthonormal (max deviation {deviation:.3e})")]
    NotOrthonormal { deviation: f64 },

    #[error("inverted or non-positive depth range [{d_min}, {d_max}]")]
    InvertedDepthRange { d_min: f64, d_max: f64 },

    #[error("invalid intrinsics: {0}")]
    Intrinsics(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("degenerate depth range: {0}")]
    DegenerateRange(String),

    #[error("stage {0} out of range")]
    StageOutOfRange(usize),

    #[error("channel count {channels} is not divisible into {groups} groups")]
    GroupMismatch { channels: usize, groups: usize },

    #[error("dimensions {height}x{width} are not divisible by {divisor}")]
    NotDivisible {
        height: usize,
        width: usize,
        divisor: usize,
    },

    #[error("at least {required} view(s) required, got {found}")]
    NotEnoughViews { required: usize, found: usize },

    #[error("temperature must be positive, got {0}")]
    InvalidTemperature(f32),

    #[error("no valid pixels to evaluate")]
    NoValidPixels,

    #[error("point cloud is empty")]
    EmptyCloud,

    #[error("sub-batch {sub_batch} does not divide global batch {batch}")]
    SubBatch { sub_batch: usize, batch: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("missing input: {0}")]
    Missing(PathBuf),
}

impl Error {
    pub fn file(path: impl Into<PathBuf>, source: io::Error) -> Self {
        if source.kind() == io::ErrorKind::NotFound {
            return Error::Missing(path.into());
        }
        Error::File {
            path: path.into(),
            source,
        }
    }
}
