use thiserror::Error;

/// Errors produced by the segmentation toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("grid dimensions must be positive, got {rows}x{cols}")]
    EmptyGrid { rows: usize, cols: usize },

    #[error("buffer of length {len} does not match a {rows}x{cols} grid")]
    BufferLength { rows: usize, cols: usize, len: usize },

    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("kernel of size {kernel:?} does not fit in a {image:?} image")]
    KernelTooLarge {
        kernel: (usize, usize),
        image: (usize, usize),
    },

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error(
        "singular u-update operator: denominator {min_denominator:e} at frequency {frequency:?} \
         (requires ker(A) and ker(grad) to intersect only at zero)"
    )]
    SingularOperator {
        min_denominator: f64,
        frequency: (usize, usize),
    },

    #[error("ADMM diverged: non-finite iterate at iteration {iteration}")]
    Divergence { iteration: usize },

    #[error("expected {expected} channels, found {found}")]
    ChannelCount { expected: usize, found: usize },

    #[error("invalid multichannel image: {0}")]
    InvalidImage(String),

    #[error("K = {k} exceeds the number of distinct pixel vectors ({distinct})")]
    TooFewDistinct { k: usize, distinct: usize },

    #[error("invalid cluster count K = {0}, need K >= 2")]
    InvalidClusterCount(usize),

    #[error("invalid noise specification: {0}")]
    InvalidNoise(String),

    #[error("invalid label map: {0}")]
    InvalidLabels(String),

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("diagnostics were not recorded for this run: {0}")]
    MissingDiagnostics(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;
