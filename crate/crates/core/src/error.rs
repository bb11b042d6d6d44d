use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{}: invalid {what} file: {msg}", path.display())]
    Format {
        path: PathBuf,
        what: &'static str,
        msg: String,
    },

    #[error("observation on line {line} references unknown point uid {uid}")]
    UnknownUid { uid: u64, line: usize },

    #[error("observation on line {line} references unknown context frame {frame}")]
    UnknownFrame { frame: u32, line: usize },

    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),

    #[error("degenerate 6D rotation: {0}")]
    DegenerateRotation6D(&'static str),

    #[error("image size {width}x{height} is not divisible by stride {stride}")]
    StrideMismatch {
        width: usize,
        height: usize,
        stride: usize,
    },

    #[error("sequence length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("resolution mismatch at frame {frame}: {left:?} vs {right:?}")]
    ResolutionMismatch {
        frame: usize,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("frame {frame}: detection {detection} has no keypoints")]
    MissingKeypoints { frame: usize, detection: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite activation after layer `{layer}`")]
    NonFiniteActivation { layer: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{}: {cause}", path.display())]
    Io {
        path: PathBuf,
        cause: std::io::Error,
    },
}

impl Error {
    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    pub fn format(path: impl Into<PathBuf>, what: &'static str, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            what,
            msg: msg.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            cause: source,
        }
    }
}
