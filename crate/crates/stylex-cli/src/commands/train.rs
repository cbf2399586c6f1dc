//! `stylex train`: train the style encoder on the configured style set.

use stylex_core::model::{StyleModel};
use stylex_core::trainer::{train, TrainData};

use super::{load_corpus, load_manifest, train_dir};
use crate::run::{load_config, stamp_run_dir, CliError};
use crate::CommonArgs;

pub fn run(common: &CommonArgs) -> Result<(), CliError> {
    let config = load_config(common.config.as_deref())?;
    let manifest = load_manifest(&common.out)?;
    let store = load_corpus(&common.out, &manifest)?;

    let dir = train_dir(&common.out);
    stamp_run_dir(&dir, &config, "train", common.seed)?;

    let styles = config.pipeline.train_styles();
    let data = TrainData {
        split: manifest.split.clone(),
        styles,
        phantom_h: manifest.phantom_h,
        phantom_w: manifest.phantom_w,
        augment: config.augment,
        lap: config.pipeline.lap_config(),
    };
    let mut train_cfg = config.trainer.train_config();
    if let Some(seed) = common.seed {
        train_cfg.seed = seed;
    }
    let model = StyleModel::new(
        config.trainer.encoder.clone(),
        config.trainer.predictor.clone(),
        train_cfg.seed,
    );

    let outcome = train(model, &store, &data, &train_cfg, &dir)?;
    match outcome.metrics.last() {
        Some(last) => println!(
            "trained {} epochs ({} steps): final loss {:.4}, collapse_std {:.4}; checkpoint {}",
            train_cfg.epochs,
            outcome.metrics.len(),
            last.loss,
            last.collapse_std,
            outcome.final_checkpoint.display()
        ),
        None => println!(
            "wrote untrained baseline checkpoint {}",
            outcome.final_checkpoint.display()
        ),
    }
    Ok(())
}
