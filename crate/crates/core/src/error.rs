use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("class ids {0:?} appear in both the base and novel sets")]
    Overlap(Vec<u8>),
    #[error("class ids are not contiguous: expected {expected:?}, found {found:?}")]
    Gap { expected: Vec<u8>, found: Vec<u8> },
    #[error("background id {0} is reused as a base or novel class")]
    Background(u8),
    #[error("taxonomy phase {phase} does not allow {reason}")]
    PhaseMismatch { phase: String, reason: String },

    #[error("tile `{0}` has no paired label")]
    MissingLabel(String),
    #[error("tile `{tile}` has label value {value} outside the taxonomy")]
    BadValue { tile: String, value: u8 },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("no labeled pixels to count")]
    Empty,
    #[error("class {0} has zero frequency")]
    ZeroFrequency(u8),
    #[error("crop {crop:?} exceeds tile size {size:?}")]
    CropTooLarge { crop: (usize, usize), size: (usize, usize) },
    #[error("support label contains the ignore value")]
    IgnoreInSupport,
    #[error("duplicate tile id `{0}`")]
    DuplicateId(String),

    #[error("no class in the subset has a defined IoU")]
    NoDefinedIoU,
    #[error("class subset is empty")]
    EmptySubset,
    #[error("value {0} is outside [0, 100]")]
    Range(f64),
    #[error("class id {id} is not below K = {k}")]
    BadId { id: u8, k: usize },

    #[error("label map contains id {0} that is not allowed here")]
    ForeignId(u8),
    #[error("structuring element size {0} must be odd and at least 1")]
    InvalidKernel(usize),

    #[error("empty input list")]
    EmptyList,
    #[error("invalid prototype bank: {0}")]
    InvalidBank(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("tensor archive: {0}")]
    Archive(String),
    #[error("{0}")]
    Format(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
