use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("pose has no present joints")]
    NoJointsPresent,

    #[error("parse error at {context}: {message}")]
    Parse { context: String, message: String },

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("invalid schema: {0}")]
    InvalidSchema(String),

    #[error("missing confidence score for joint {joint} of person {person} in frame {frame}")]
    MissingScore {
        frame: usize,
        person: usize,
        joint: usize,
    },

    #[error("missing track id for person {person} in frame {frame}")]
    MissingTrackId { frame: usize, person: usize },

    #[error("person height is undefined: no height, head box, or two present joints")]
    HeightUndefined,

    #[error("head segment missing")]
    HeadSegmentMissing,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Coarse error classes, used by the command-line front end to pick an exit
/// code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numeric,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) => ErrorClass::Config,
            Error::Numeric(_) => ErrorClass::Numeric,
            _ => ErrorClass::Data,
        }
    }
}
