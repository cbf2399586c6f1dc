//! Error types shared across the crate.

use thiserror::Error;

/// Errors raised by the tensor engine and autodiff tape.
#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape {shape:?} implies {expected} elements, got {actual}")]
    ShapeDataMismatch {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },
    #[error("shape {0:?} contains a zero extent")]
    ZeroExtent(Vec<usize>),
    #[error("{op}: expected rank {expected}, got shape {shape:?}")]
    RankMismatch {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("conv2d: kernel size {kernel} exceeds padded input extent {padded}")]
    KernelTooLarge { kernel: usize, padded: usize },
    #[error("conv2d: stride must be >= 1")]
    ZeroStride,
    #[error("cosine_similarity: row {row} has squared norm below {floor:e}")]
    NormUnderflow { row: usize, floor: f64 },
    #[error("normalize_batch: train mode requires batch size >= 2, got {0}")]
    BatchTooSmall(usize),
    #[error("pool: window {k} with stride {stride} does not fit input {h}x{w}")]
    PoolTooLarge {
        k: usize,
        stride: usize,
        h: usize,
        w: usize,
    },
    #[error("backward: loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("backward already ran on this tape; record a new forward pass first")]
    TapeConsumed,
    #[error("node {0} does not belong to this tape")]
    UnknownNode(usize),
    #[error("node {0} holds no gradient (not a leaf with requires_grad, or backward not run)")]
    NoGradient(usize),
}

/// Errors raised by the image pipelines (pyramid, LAP, surrogate).
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("image {h}x{w} is too small for {levels} pyramid levels (needs min extent {needed})")]
    ImageTooSmall {
        h: usize,
        w: usize,
        levels: usize,
        needed: usize,
    },
    #[error("style parameter {name} = {value} outside [0, 10]")]
    ParamOutOfRange { name: &'static str, value: f64 },
    #[error("sweep needs at least 2 steps, got {0}")]
    TooFewSteps(usize),
}

/// Errors raised by phantom generation and pair assembly.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("phantom extents must be at least 64x64, got {h}x{w}")]
    PhantomTooSmall { h: usize, w: usize },
    #[error("different_content pairing needs at least 2 contents, got {0}")]
    NotEnoughContents(usize),
    #[error("pair count must be >= 1")]
    EmptyPairRequest,
    #[error("style set is empty")]
    EmptyStyleSet,
    #[error("crop {crop} does not fit inside image extent {extent}")]
    CropTooLarge { crop: usize, extent: usize },
}

/// Errors raised by training and checkpoint handling.
#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("input {got_h}x{got_w} does not match encoder input size {want_h}x{want_w}")]
    InputSizeMismatch {
        got_h: usize,
        got_w: usize,
        want_h: usize,
        want_w: usize,
    },
    #[error("loss became non-finite at epoch {epoch} step {step}; batch manifest dumped to {manifest:?}")]
    NonFiniteLoss {
        epoch: usize,
        step: usize,
        manifest: std::path::PathBuf,
    },
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Errors raised while reading or writing checkpoint containers.
#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("bad magic bytes {0:?}, expected \"STYX\"")]
    BadMagic([u8; 4]),
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u32),
    #[error("truncated checkpoint record ({0})")]
    Truncated(&'static str),
    #[error("checkpoint record {name} declares {expected} elements but the file ends early")]
    ShortData { name: String, expected: usize },
    #[error("checkpoint is missing required entry {0}")]
    MissingEntry(String),
    #[error("checkpoint entry {name} has shape {got:?}, expected {want:?}")]
    EntryShape {
        name: String,
        got: Vec<usize>,
        want: Vec<usize>,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Errors raised by the analysis module (t-SNE and statistics).
#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("t-SNE needs at least 10 points, got {0}")]
    TooFewPoints(usize),
    #[error("perplexity {perplexity} infeasible for {n} points (needs perplexity < (n-1)/3)")]
    PerplexityInfeasible { perplexity: f64, n: usize },
    #[error("t-SNE is exact O(n^2); n = {0} exceeds the cap of 5000 points")]
    TooManyPoints(usize),
    #[error("embeddings have mixed dimensions ({0} vs {1})")]
    MixedDimensions(usize, usize),
    #[error("statistic needs at least 2 groups, got {0}")]
    SingleGroup(usize),
    #[error("silhouette needs at least 2 distinct labels")]
    SingleLabel,
    #[error("pair AUC needs both classes present")]
    OneClassMissing,
    #[error("empty input")]
    Empty,
}
