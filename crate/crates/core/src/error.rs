use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite input")]
    NonFinite,

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("permutation path requires panoramic FoV")]
    NotPanoramic,

    #[error("missing mask for pose {pose} slice {slice}")]
    MissingMask { pose: usize, slice: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("pose set is not grid-shaped")]
    NotGrid,

    #[error("training diverged at step {0}")]
    Diverged(usize),

    #[error("no reliable overlap (peak correlation {0:.3})")]
    NoReliableOverlap(f64),

    #[error("degenerate pair")]
    DegeneratePair,

    #[error("out of memory at K={k}: estimated {bytes} bytes exceeds limit {limit}")]
    OutOfMemory { k: usize, bytes: u64, limit: u64 },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
