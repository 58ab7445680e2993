use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("frame size mismatch: {0}x{1} vs {2}x{3}")]
    FrameSizeMismatch(usize, usize, usize, usize),
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("stride too large: stride {stride} for {width}x{height} frame")]
    StrideTooLarge {
        stride: usize,
        width: usize,
        height: usize,
    },
    #[error("trajectory outside canvas: point ({x}, {y}) on {width}x{height} canvas")]
    TrajectoryOutsideCanvas {
        x: f64,
        y: f64,
        width: usize,
        height: usize,
    },
    #[error("segment count mismatch: expected {expected}, got {got}")]
    SegmentCountMismatch { expected: usize, got: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("video too short: {frames} frames for {segments} segments")]
    VideoTooShort { frames: usize, segments: usize },
    #[error("non-contiguous sequence in {dir}: missing index {missing}")]
    NonContiguousSequence { dir: PathBuf, missing: u64 },
    #[error("mask count {masks} does not match frame count {frames}")]
    MaskCountMismatch { frames: usize, masks: usize },
    #[error("class {class:?} has {available} records, needs more than {required}")]
    TooFewRecords {
        class: String,
        available: usize,
        required: usize,
    },
    #[error("empty test set")]
    EmptyTestSet,
    #[error("bad format: {0}")]
    Format(String),
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("image codec: {0}")]
    Codec(#[from] ::image::ImageError),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps the error with the name of the pipeline stage that produced it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// True for errors caused by bad input data rather than bad usage.
    pub fn is_data_error(&self) -> bool {
        match self {
            Error::InvalidConfig(_) => false,
            Error::Stage { source, .. } => source.is_data_error(),
            _ => true,
        }
    }
}
