//! Declarative experiment configuration (one TOML document).

use serde::{Deserialize, Serialize};
use stylex_core::lap::{corner_styles, even_grid_styles};
use stylex_core::pairs::PairPolicy;
use stylex_core::style::StyleId;
use stylex_core::tsne::{TsneConfig, TsneInit};
use stylex_core::{AugmentConfig, EncoderConfig, LapConfig, PredictorConfig, TrainConfig};

/// Schema identifier written into every run directory.
pub const CONFIG_SCHEMA: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub corpus: CorpusConfig,
    pub pipeline: PipelineConfig,
    pub trainer: TrainerConfig,
    pub augment: AugmentConfig,
    pub analysis: AnalysisConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusConfig {
    pub seed: u64,
    pub count: usize,
    pub train_fraction: f64,
    pub split_seed: u64,
    pub phantom_h: usize,
    pub phantom_w: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            count: 800,
            train_fraction: 0.7,
            split_seed: 2,
            phantom_h: 160,
            phantom_w: 160,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineKind {
    Lap,
    Surrogate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LapStyleSet {
    /// The 8 corner styles (every parameter at 0 or 10).
    Corners,
    /// All even-integer parameter combinations (216 styles).
    EvenGrid,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub kind: PipelineKind,
    pub lap_levels: usize,
    pub lap_style_set: LapStyleSet,
    /// Surrogate: seeds 0..train_seeds train; 0..total_seeds evaluate.
    pub surrogate_train_seeds: u64,
    pub surrogate_total_seeds: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            kind: PipelineKind::Lap,
            lap_levels: 4,
            lap_style_set: LapStyleSet::Corners,
            surrogate_train_seeds: 28,
            surrogate_total_seeds: 32,
        }
    }
}

impl PipelineConfig {
    pub fn lap_config(&self) -> LapConfig {
        LapConfig {
            levels: self.lap_levels,
        }
    }

    /// Styles presented during training.
    pub fn train_styles(&self) -> Vec<StyleId> {
        match self.kind {
            PipelineKind::Lap => match self.lap_style_set {
                LapStyleSet::Corners => {
                    corner_styles().into_iter().map(StyleId::lap).collect()
                }
                LapStyleSet::EvenGrid => {
                    even_grid_styles().into_iter().map(StyleId::lap).collect()
                }
            },
            PipelineKind::Surrogate => (0..self.surrogate_train_seeds)
                .map(|seed| StyleId::Surrogate { seed })
                .collect(),
        }
    }

    /// Axis values seen during training (for interpolation seen-flags).
    pub fn seen_axis_values(&self) -> Vec<f64> {
        match self.lap_style_set {
            LapStyleSet::Corners => vec![0.0, 10.0],
            LapStyleSet::EvenGrid => vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainerConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub base_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub pairs_per_epoch: Option<usize>,
    pub policy: PairPolicy,
    pub encoder: EncoderConfig,
    pub predictor: PredictorConfig,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            batch_size: t.batch_size,
            epochs: t.epochs,
            base_lr: t.base_lr,
            momentum: t.momentum,
            weight_decay: t.weight_decay,
            seed: 11,
            pairs_per_epoch: t.pairs_per_epoch,
            policy: t.policy,
            encoder: EncoderConfig::default(),
            predictor: PredictorConfig::default(),
        }
    }
}

impl TrainerConfig {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            epochs: self.epochs,
            base_lr: self.base_lr,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            seed: self.seed,
            pairs_per_epoch: self.pairs_per_epoch,
            policy: self.policy,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    /// Groups in the rank-correlation sweep.
    pub sweep_steps: usize,
    /// Groups in the interpolation sweep (integer grid when 11).
    pub interp_steps: usize,
    /// Test contents styled per group.
    pub test_contents: usize,
    pub knn_k: usize,
    pub tsne_perplexity: f64,
    pub tsne_iterations: usize,
    pub tsne_learning_rate: f64,
    pub tsne_exaggeration: f64,
    pub tsne_seed: u64,
    pub tsne_init: TsneInit,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            sweep_steps: 10,
            interp_steps: 11,
            test_contents: 24,
            knn_k: 5,
            tsne_perplexity: 30.0,
            tsne_iterations: 1000,
            tsne_learning_rate: 200.0,
            tsne_exaggeration: 4.0,
            tsne_seed: 5,
            tsne_init: TsneInit::Pca,
        }
    }
}

impl AnalysisConfig {
    pub fn tsne_config(&self, out_dims: usize) -> TsneConfig {
        TsneConfig {
            out_dims,
            perplexity: self.tsne_perplexity,
            iterations: self.tsne_iterations,
            early_exaggeration: self.tsne_exaggeration,
            learning_rate: self.tsne_learning_rate,
            seed: self.tsne_seed,
            init: self.tsne_init,
        }
    }
}
