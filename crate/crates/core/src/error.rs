use thiserror::Error;

/// Errors raised by the tracking engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix is not symmetric positive definite: {0}")]
    NotPositiveDefinite(&'static str),

    #[error("singular matrix: {0}")]
    Singular(&'static str),

    #[error("empty gallery")]
    EmptyGallery,

    #[error("malformed appearance attachment for tracker {id}: expected 2 embeddings, got {count}")]
    MalformedAttachment { id: String, count: usize },

    #[error("camera {0} sent more than one message in the same cycle")]
    DuplicateSend(usize),

    #[error("camera {0} did not send a message this cycle")]
    MissingSend(usize),

    #[error("camera index {index} out of range for {count} cameras")]
    CameraOutOfRange { index: usize, count: usize },

    #[error("unknown topology `{0}`")]
    UnknownTopology(String),

    #[error("topology variant {variant} out of range ({available} available)")]
    InvalidVariant { variant: usize, available: usize },

    #[error("sequence length mismatch: truth has {truth} frames, hypothesis has {hypothesis}")]
    SequenceLength { truth: usize, hypothesis: usize },

    #[error("frame mismatch at position {index}: truth frame {truth}, hypothesis frame {hypothesis}")]
    FrameMismatch { index: usize, truth: u64, hypothesis: u64 },

    #[error("duplicate identity {identity} in frame {frame}")]
    DuplicateIdentity { frame: u64, identity: u64 },

    #[error("cannot aggregate an empty set of reports")]
    EmptyReports,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("point at infinity in homography projection")]
    PointAtInfinity,
}

pub type Result<T> = std::result::Result<T, Error>;
