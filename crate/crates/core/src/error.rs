use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A raster with zero width or height.
    EmptyImage,
    LengthMismatch { expected: usize, found: usize },
    DimMismatch { expected: (usize, usize), found: (usize, usize) },
    NoValidDepth,
    ImageTooSmall { width: usize, height: usize, min: usize },
    NonSquare { width: usize, height: usize },
    UnknownSuperpixel(usize),
    ShapeMismatch(String),
    BadChannelCount(usize),
    InvalidPartition(String),
    InvalidParameter(String),
    EmptyGroundTruth,
    NoValidImages,
    EmptyTrainSet,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::EmptyImage => write!(f, "image has zero width or height"),
            Error::LengthMismatch { expected, found } => {
                write!(f, "expected {expected} values, found {found}")
            }
            Error::DimMismatch { expected, found } => write!(
                f,
                "dimension mismatch: expected {}x{}, found {}x{}",
                expected.0, expected.1, found.0, found.1
            ),
            Error::NoValidDepth => write!(f, "depth image has no valid pixels"),
            Error::ImageTooSmall { width, height, min } => {
                write!(f, "image {width}x{height} is smaller than {min}x{min}")
            }
            Error::NonSquare { width, height } => {
                write!(f, "rotation needs a square image, got {width}x{height}")
            }
            Error::UnknownSuperpixel(p) => write!(f, "unknown superpixel {p}"),
            Error::ShapeMismatch(msg) => write!(f, "shape mismatch: {msg}"),
            Error::BadChannelCount(c) => {
                write!(f, "unsupported input channel count {c} (expected 4, 10, 11 or 17)")
            }
            Error::InvalidPartition(msg) => write!(f, "invalid partition: {msg}"),
            Error::InvalidParameter(msg) => write!(f, "invalid parameter: {msg}"),
            Error::EmptyGroundTruth => write!(f, "ground truth has no positive pixels"),
            Error::NoValidImages => write!(f, "no image with a non-empty ground truth"),
            Error::EmptyTrainSet => write!(f, "training set is empty"),
        }
    }
}

impl core::error::Error for Error {}
