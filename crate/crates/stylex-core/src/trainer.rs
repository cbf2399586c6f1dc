//! Siamese training: shared encoder, predictor head, symmetrized negative
//! cosine loss with a one-sided stop-gradient, SGD with momentum and cosine
//! learning-rate decay.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{TensorError, TrainError};
use crate::lap::LapConfig;
use crate::model::StyleModel;
use crate::pairs::{make_pairs, styled_view, AugmentConfig, PairPolicy, PairSpec};
use crate::phantom::{ContentStore, DatasetSplit};
use crate::style::{StyleId, StyledImage};
use crate::tensor::{BnMode, NodeId, Tape, Tensor};

/// Optimization knobs. The effective learning rate is
/// `base_lr * batch_size / 256`, decayed with a cosine over all steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Positive pairs per optimization step.
    pub batch_size: usize,
    pub epochs: usize,
    pub base_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub seed: u64,
    /// Pairs drawn per epoch; defaults to twice the training contents.
    pub pairs_per_epoch: Option<usize>,
    pub policy: PairPolicy,
    /// Keep the predictor at the base rate instead of decaying it
    /// (stabilizes the one-sided objective).
    pub predictor_const_lr: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            epochs: 30,
            base_lr: 0.8,
            momentum: 0.9,
            weight_decay: 1e-4,
            seed: 0,
            pairs_per_epoch: None,
            policy: PairPolicy::DifferentContent,
            predictor_const_lr: true,
        }
    }
}

/// Everything the data path needs to realize batches.
#[derive(Debug, Clone)]
pub struct TrainData {
    pub split: DatasetSplit,
    pub styles: Vec<StyleId>,
    pub phantom_h: usize,
    pub phantom_w: usize,
    pub augment: AugmentConfig,
    pub lap: LapConfig,
}

/// One metrics-log row. `collapse_std` is refreshed at epoch boundaries.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub epoch: usize,
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
    pub collapse_std: f64,
    pub wall_ms: u64,
}

/// Trained model plus its log and on-disk checkpoint locations.
pub struct TrainOutcome {
    pub model: StyleModel,
    pub metrics: Vec<MetricsRow>,
    pub final_checkpoint: PathBuf,
}

/// Symmetrized SimSiam loss:
/// L = 0.5 * mean(-cos(p1, sg(z2))) + 0.5 * mean(-cos(p2, sg(z1))).
pub fn simsiam_loss(
    tape: &mut Tape,
    z1: NodeId,
    z2: NodeId,
    p1: NodeId,
    p2: NodeId,
) -> Result<NodeId, TensorError> {
    let z2_const = tape.stop_gradient(z2)?;
    let z1_const = tape.stop_gradient(z1)?;
    let cos1 = tape.cosine_similarity(p1, z2_const)?;
    let cos2 = tape.cosine_similarity(p2, z1_const)?;
    let m1 = tape.mean_all(cos1)?;
    let m2 = tape.mean_all(cos2)?;
    let total = tape.add(m1, m2)?;
    tape.scale(total, -0.5)
}

/// Cosine decay from the effective base rate down to zero.
pub fn cosine_lr(base_lr: f64, batch_size: usize, step: usize, total_steps: usize) -> f64 {
    let effective = base_lr * batch_size as f64 / 256.0;
    if total_steps == 0 {
        return effective;
    }
    let t = step as f64 / total_steps as f64;
    effective * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
}

/// SGD with momentum and decoupled-from-nothing classic weight decay
/// (decay folded into the gradient before the momentum update).
pub struct Sgd {
    velocity: Vec<Vec<f32>>,
    momentum: f32,
    weight_decay: f32,
}

impl Sgd {
    pub fn new(params: &[Tensor], momentum: f64, weight_decay: f64) -> Self {
        Self {
            velocity: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            momentum: momentum as f32,
            weight_decay: weight_decay as f32,
        }
    }

    pub fn step(&mut self, params: &mut [Tensor], lrs: &[f64]) {
        for ((param, vel), &lr) in params.iter_mut().zip(&mut self.velocity).zip(lrs) {
            let lr = lr as f32;
            let Some(grad) = param.grad.as_ref() else {
                continue;
            };
            let wd = self.weight_decay;
            let mom = self.momentum;
            // Split borrows: data and grad live on the same struct.
            let (data, grad) = {
                let g = grad.clone();
                (param.data_mut(), g)
            };
            for ((w, v), g) in data.iter_mut().zip(vel.iter_mut()).zip(grad) {
                let g = g + wd * *w;
                *v = mom * *v + g;
                *w -= lr * *v;
            }
        }
    }
}

fn batch_tensor(views: &[StyledImage]) -> Tensor {
    let (h, w) = (views[0].h, views[0].w);
    let mut data = Vec::with_capacity(views.len() * h * w);
    for v in views {
        data.extend_from_slice(&v.pixels);
    }
    Tensor::new(vec![views.len(), 1, h, w], data).expect("uniform view extents")
}

/// Eval-mode embeddings for a batch of styled images (order-preserving).
pub fn embed_batch(
    model: &mut StyleModel,
    images: &[StyledImage],
) -> Result<Vec<Vec<f32>>, TrainError> {
    embed_with_mode(model, images, BnMode::Eval)
}

fn embed_with_mode(
    model: &mut StyleModel,
    images: &[StyledImage],
    mode: BnMode,
) -> Result<Vec<Vec<f32>>, TrainError> {
    if images.is_empty() {
        return Ok(Vec::new());
    }
    let d = model.encoder_cfg.embedding_dim;
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(32) {
        for img in chunk {
            model.check_input(img.h, img.w)?;
        }
        let mut tape = Tape::new();
        let nodes = model.leaves(&mut tape);
        let input = tape.constant(batch_tensor(chunk));
        let z = model.encode_on_tape(&mut tape, &nodes, input, mode)?;
        let data = tape.value(z).data();
        for row in 0..chunk.len() {
            out.push(data[row * d..(row + 1) * d].to_vec());
        }
    }
    Ok(out)
}

/// Embed the whole list in input order, batched, eval mode.
pub fn embed_corpus(
    model: &mut StyleModel,
    images: &[StyledImage],
) -> Result<Vec<Vec<f32>>, TrainError> {
    embed_batch(model, images)
}

/// Single-image embedding, eval mode.
pub fn encode(model: &mut StyleModel, image: &StyledImage) -> Result<Vec<f32>, TrainError> {
    Ok(embed_batch(model, std::slice::from_ref(image))?
        .pop()
        .expect("one input, one output"))
}

/// Mean per-dimension standard deviation of L2-normalized embeddings.
/// Collapse drives this to zero; a healthy spread sits near 1/sqrt(D).
pub fn collapse_statistic(embeddings: &[Vec<f32>]) -> f64 {
    if embeddings.is_empty() {
        return 0.0;
    }
    let d = embeddings[0].len();
    let n = embeddings.len() as f64;
    let normalized: Vec<Vec<f64>> = embeddings
        .iter()
        .map(|e| {
            let norm = e.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
            let norm = if norm > 0.0 { norm } else { 1.0 };
            e.iter().map(|&v| v as f64 / norm).collect()
        })
        .collect();
    let mut total = 0.0;
    for dim in 0..d {
        let mean: f64 = normalized.iter().map(|e| e[dim]).sum::<f64>() / n;
        let var: f64 = normalized
            .iter()
            .map(|e| (e[dim] - mean).powi(2))
            .sum::<f64>()
            / n;
        total += var.sqrt();
    }
    total / d as f64
}

fn epoch_seed(base: u64, epoch: usize) -> u64 {
    base ^ (epoch as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn materialize(
    specs: &[PairSpec],
    store: &ContentStore,
    data: &TrainData,
) -> Result<(Vec<StyledImage>, Vec<StyledImage>), TrainError> {
    let mut views_a = Vec::with_capacity(specs.len());
    let mut views_b = Vec::with_capacity(specs.len());
    for spec in specs {
        let raw_a = store
            .get(spec.content_a)
            .ok_or(crate::error::DataError::NotEnoughContents(0))?;
        let raw_b = store
            .get(spec.content_b)
            .ok_or(crate::error::DataError::NotEnoughContents(0))?;
        views_a.push(styled_view(
            raw_a,
            &spec.style,
            &spec.crop_a,
            &data.augment,
            &data.lap,
        )?);
        views_b.push(styled_view(
            raw_b,
            &spec.style,
            &spec.crop_b,
            &data.augment,
            &data.lap,
        )?);
    }
    Ok((views_a, views_b))
}

/// Deterministic probe set for the collapse statistic: eval views over the
/// first training contents, styles cycled.
fn probe_views(
    store: &ContentStore,
    data: &TrainData,
    count: usize,
) -> Result<Vec<StyledImage>, TrainError> {
    let mut views = Vec::with_capacity(count);
    for (i, &content) in data.split.train_ids.iter().cycle().take(count).enumerate() {
        let style = data.styles[i % data.styles.len()];
        let raw = store
            .get(content)
            .ok_or(crate::error::DataError::NotEnoughContents(0))?;
        views.push(crate::pairs::eval_view(raw, &style, &data.augment, &data.lap)?);
    }
    Ok(views)
}

/// Write the metrics log: one row per step.
pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> std::io::Result<()> {
    use std::io::Write;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "epoch,step,loss,lr,collapse_std,wall_ms")?;
    for r in rows {
        writeln!(
            f,
            "{},{},{},{},{},{}",
            r.epoch, r.step, r.loss, r.lr, r.collapse_std, r.wall_ms
        )?;
    }
    Ok(())
}

/// Run the full training loop, writing per-epoch checkpoints, a final
/// checkpoint, and `metrics.csv` under `out_dir`.
pub fn train(
    mut model: StyleModel,
    store: &ContentStore,
    data: &TrainData,
    cfg: &TrainConfig,
    out_dir: &Path,
) -> Result<TrainOutcome, TrainError> {
    assert!(cfg.batch_size >= 2, "batch normalization needs batch >= 2");
    std::fs::create_dir_all(out_dir)?;
    let start = Instant::now();

    let pairs_per_epoch = cfg
        .pairs_per_epoch
        .unwrap_or_else(|| 2 * data.split.train_ids.len())
        .max(cfg.batch_size);
    let steps_per_epoch = pairs_per_epoch / cfg.batch_size;
    let total_steps = steps_per_epoch * cfg.epochs;

    let probe = probe_views(store, data, 64.min(pairs_per_epoch))?;
    let mut collapse = collapse_statistic(&embed_batch(&mut model, &probe)?);

    let mut sgd = Sgd::new(model.params(), cfg.momentum, cfg.weight_decay);
    let mut metrics = Vec::new();
    let mut global_step = 0usize;

    for epoch in 0..cfg.epochs {
        let specs = make_pairs(
            &data.split,
            &data.styles,
            cfg.policy,
            pairs_per_epoch,
            epoch_seed(cfg.seed, epoch),
            data.phantom_h,
            data.phantom_w,
            &data.augment,
        )?;
        for step in 0..steps_per_epoch {
            let batch = &specs[step * cfg.batch_size..(step + 1) * cfg.batch_size];
            let (views_a, views_b) = materialize(batch, store, data)?;

            let mut tape = Tape::new();
            let nodes = model.leaves(&mut tape);
            let x1 = tape.constant(batch_tensor(&views_a));
            let x2 = tape.constant(batch_tensor(&views_b));
            let z1 = model.encode_on_tape(&mut tape, &nodes, x1, BnMode::Train)?;
            let z2 = model.encode_on_tape(&mut tape, &nodes, x2, BnMode::Train)?;
            let p1 = model.predict_on_tape(&mut tape, &nodes, z1, BnMode::Train)?;
            let p2 = model.predict_on_tape(&mut tape, &nodes, z2, BnMode::Train)?;
            let loss = simsiam_loss(&mut tape, z1, z2, p1, p2)?;
            let loss_val = tape.value(loss).data()[0] as f64;

            if !loss_val.is_finite() {
                let manifest = out_dir.join(format!("abort_epoch{epoch}_step{step}.json"));
                let payload = serde_json::to_string_pretty(batch)
                    .unwrap_or_else(|_| "[]".to_string());
                std::fs::write(&manifest, payload)?;
                return Err(TrainError::NonFiniteLoss {
                    epoch,
                    step,
                    manifest,
                });
            }

            tape.backward(loss)?;
            model.collect_grads(&tape, &nodes)?;
            let lr = cosine_lr(cfg.base_lr, cfg.batch_size, global_step, total_steps);
            let base = cosine_lr(cfg.base_lr, cfg.batch_size, 0, total_steps);
            let lrs: Vec<f64> = model
                .param_names()
                .iter()
                .map(|n| {
                    if cfg.predictor_const_lr && n.starts_with("predictor.") {
                        base
                    } else {
                        lr
                    }
                })
                .collect();
            sgd.step(model.params_mut(), &lrs);
            global_step += 1;

            metrics.push(MetricsRow {
                epoch,
                step,
                loss: loss_val,
                lr,
                collapse_std: collapse,
                wall_ms: start.elapsed().as_millis() as u64,
            });
        }

        collapse = collapse_statistic(&embed_batch(&mut model, &probe)?);
        if let Some(last) = metrics.last_mut() {
            last.collapse_std = collapse;
        }
        model
            .to_container(epoch + 1, cfg.seed)
            .save(&out_dir.join(format!("epoch_{:03}.ckpt", epoch + 1)))?;
    }

    let final_path = out_dir.join("final.ckpt");
    model.to_container(cfg.epochs, cfg.seed).save(&final_path)?;
    write_metrics_csv(&out_dir.join("metrics.csv"), &metrics)?;

    Ok(TrainOutcome {
        model,
        metrics,
        final_checkpoint: final_path,
    })
}
