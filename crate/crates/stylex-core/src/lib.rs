//! Style representations for X-ray-like images.
//!
//! The crate covers the full experiment ladder: a small tensor/autodiff
//! engine, the Laplacian-pyramid style pipeline (plus a seeded surrogate for
//! the closed-source one), synthetic phantom data, Siamese training with a
//! stop-gradient, the style distance metric, and the t-SNE/statistics layer
//! used to evaluate embeddings.

pub mod checkpoint;
pub mod analysis;
pub mod error;
pub mod io;
pub mod metric;
pub mod model;
pub mod pairs;
pub mod lap;
pub mod phantom;
pub mod pyramid;
pub mod style;
pub mod surrogate;
pub mod tensor;
pub mod trainer;
pub mod tsne;

pub use error::{AnalysisError, CheckpointError, DataError, PipelineError, TensorError, TrainError};
pub use lap::{LapAxis, LapConfig};
pub use metric::DistanceMatrix;
pub use model::{EncoderConfig, PredictorConfig, StyleModel};
pub use pairs::{AugmentConfig, PairPolicy, PairSpec};
pub use phantom::{ContentStore, DatasetSplit, RawImage};
pub use style::{StyleId, StyleParams, StyledImage};
pub use tensor::{BatchNormState, BnMode, NodeId, Tape, Tensor};
pub use trainer::{TrainConfig, TrainData, TrainOutcome};
pub use tsne::{EmbeddingAnalysis, TsneConfig, TsneInit};
