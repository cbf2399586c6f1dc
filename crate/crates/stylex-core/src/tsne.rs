//! Exact (dense) t-SNE for 1-D and 2-D embedding analysis.
//!
//! Per-point bandwidths come from a binary search matching the target
//! entropy log(perplexity); affinities are symmetrized and the map is
//! optimized with early exaggeration and the two-phase momentum schedule.
//! Everything runs in f64 and is deterministic for a fixed seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::AnalysisError;

/// Iterations that run with exaggerated affinities.
pub const EXAGGERATION_ITERS: usize = 100;
/// Iteration at which momentum switches from 0.5 to 0.8.
pub const MOMENTUM_SWITCH_ITER: usize = 250;
pub const MOMENTUM_EARLY: f64 = 0.5;
pub const MOMENTUM_LATE: f64 = 0.8;
/// Hard cap: the dense solver is O(n^2).
pub const MAX_POINTS: usize = 5000;

/// Map initialization. PCA gives a deterministic, orientation-stable start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TsneInit {
    Random,
    Pca,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsneConfig {
    pub out_dims: usize,
    pub perplexity: f64,
    pub iterations: usize,
    pub early_exaggeration: f64,
    pub learning_rate: f64,
    pub seed: u64,
    pub init: TsneInit,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            out_dims: 2,
            perplexity: 30.0,
            iterations: 1000,
            early_exaggeration: 4.0,
            learning_rate: 200.0,
            seed: 0,
            init: TsneInit::Random,
        }
    }
}

/// Low-dimensional map plus the optimization trace.
#[derive(Debug, Clone)]
pub struct EmbeddingAnalysis {
    /// Row-major n x out_dims coordinates.
    pub points: Vec<Vec<f64>>,
    /// KL divergence (against the un-exaggerated affinities) per iteration.
    pub kl_trace: Vec<f64>,
    /// Largest |attained entropy - log(perplexity)| across points.
    pub max_entropy_error: f64,
}

fn pairwise_sq_distances(data: &[Vec<f64>]) -> Vec<f64> {
    let n = data.len();
    let mut d = vec![0.0f64; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let mut acc = 0.0;
            for (a, b) in data[i].iter().zip(&data[j]) {
                let diff = a - b;
                acc += diff * diff;
            }
            d[i * n + j] = acc;
            d[j * n + i] = acc;
        }
    }
    d
}

/// Binary-search beta_i = 1/(2 sigma_i^2) so the conditional distribution's
/// entropy matches log(perplexity); returns (P(j|i) rows, max entropy error).
fn conditional_affinities(
    dist_sq: &[f64],
    n: usize,
    perplexity: f64,
) -> (Vec<f64>, f64) {
    let target = perplexity.ln();
    let mut p = vec![0.0f64; n * n];
    let mut max_err = 0.0f64;
    let mut row = vec![0.0f64; n];
    for i in 0..n {
        let mut beta = 1.0f64;
        let mut beta_min = f64::NEG_INFINITY;
        let mut beta_max = f64::INFINITY;
        let mut entropy = 0.0;
        for _ in 0..200 {
            let mut sum = 0.0;
            for j in 0..n {
                row[j] = if i == j {
                    0.0
                } else {
                    (-beta * dist_sq[i * n + j]).exp()
                };
                sum += row[j];
            }
            // H = ln(sum) + beta * E[d]
            let mut weighted = 0.0;
            for j in 0..n {
                weighted += row[j] * dist_sq[i * n + j];
            }
            entropy = if sum > 0.0 {
                sum.ln() + beta * weighted / sum
            } else {
                0.0
            };
            let diff = entropy - target;
            if diff.abs() < 1e-5 {
                break;
            }
            if diff > 0.0 {
                beta_min = beta;
                beta = if beta_max.is_infinite() {
                    beta * 2.0
                } else {
                    (beta + beta_max) / 2.0
                };
            } else {
                beta_max = beta;
                beta = if beta_min.is_infinite() {
                    beta / 2.0
                } else {
                    (beta + beta_min) / 2.0
                };
            }
        }
        max_err = max_err.max((entropy - target).abs());
        let sum: f64 = row.iter().sum();
        if sum > 0.0 {
            for j in 0..n {
                p[i * n + j] = row[j] / sum;
            }
        }
    }
    (p, max_err)
}

/// Symmetrized joint affinities p_ij = (p_{j|i} + p_{i|j}) / 2n.
pub fn joint_affinities(conditional: &[f64], n: usize) -> Vec<f64> {
    let mut p = vec![0.0f64; n * n];
    let norm = 2.0 * n as f64;
    for i in 0..n {
        for j in 0..n {
            p[i * n + j] = (conditional[i * n + j] + conditional[j * n + i]) / norm;
        }
    }
    p
}

fn pca_init(data: &[Vec<f64>], out_dims: usize) -> Vec<Vec<f64>> {
    let n = data.len();
    let d = data[0].len();
    let mut mean = vec![0.0f64; d];
    for row in data {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    // Power iteration with deflation; plenty for 1-2 leading components.
    let centered: Vec<Vec<f64>> = data
        .iter()
        .map(|row| row.iter().zip(&mean).map(|(&v, &m)| v - m).collect())
        .collect();
    let mut components: Vec<Vec<f64>> = Vec::new();
    for c in 0..out_dims {
        let mut v: Vec<f64> = (0..d)
            .map(|i| if i == c % d { 1.0 } else { 1e-3 })
            .collect();
        for _ in 0..100 {
            // w = X^T X v with deflation against found components.
            let mut w = vec![0.0f64; d];
            for row in &centered {
                let dot: f64 = row.iter().zip(&v).map(|(&a, &b)| a * b).sum();
                for (wi, &ri) in w.iter_mut().zip(row) {
                    *wi += dot * ri;
                }
            }
            for comp in &components {
                let dot: f64 = w.iter().zip(comp).map(|(&a, &b)| a * b).sum();
                for (wi, &ci) in w.iter_mut().zip(comp) {
                    *wi -= dot * ci;
                }
            }
            let norm: f64 = w.iter().map(|&x| x * x).sum::<f64>().sqrt();
            if norm < 1e-12 {
                break;
            }
            for (vi, &wi) in v.iter_mut().zip(&w) {
                *vi = wi / norm;
            }
        }
        components.push(v);
    }
    let mut out = vec![vec![0.0f64; out_dims]; n];
    for (oi, row) in out.iter_mut().zip(&centered) {
        for (c, comp) in components.iter().enumerate() {
            oi[c] = row.iter().zip(comp).map(|(&a, &b)| a * b).sum::<f64>() * 1e-2;
        }
    }
    out
}

/// Exact t-SNE. Deterministic in `config.seed`.
pub fn tsne(embeddings: &[Vec<f32>], config: &TsneConfig) -> Result<EmbeddingAnalysis, AnalysisError> {
    let n = embeddings.len();
    if n < 10 {
        return Err(AnalysisError::TooFewPoints(n));
    }
    if n > MAX_POINTS {
        return Err(AnalysisError::TooManyPoints(n));
    }
    if config.perplexity >= (n - 1) as f64 / 3.0 {
        return Err(AnalysisError::PerplexityInfeasible {
            perplexity: config.perplexity,
            n,
        });
    }
    let d0 = embeddings[0].len();
    for e in embeddings {
        if e.len() != d0 {
            return Err(AnalysisError::MixedDimensions(d0, e.len()));
        }
    }

    let data: Vec<Vec<f64>> = embeddings
        .iter()
        .map(|e| e.iter().map(|&v| v as f64).collect())
        .collect();
    let dist_sq = pairwise_sq_distances(&data);
    let (conditional, max_entropy_error) =
        conditional_affinities(&dist_sq, n, config.perplexity);
    let p = joint_affinities(&conditional, n);

    let dims = config.out_dims;
    let mut y: Vec<f64> = match config.init {
        TsneInit::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            (0..n * dims)
                .map(|_| {
                    // Small Gaussian init via Box-Muller.
                    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                    let u2: f64 = rng.gen_range(0.0..1.0);
                    1e-4 * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
                })
                .collect()
        }
        TsneInit::Pca => pca_init(&data, dims).into_iter().flatten().collect(),
    };

    let mut velocity = vec![0.0f64; n * dims];
    let mut grad = vec![0.0f64; n * dims];
    let mut q_unnorm = vec![0.0f64; n * n];
    let mut kl_trace = Vec::with_capacity(config.iterations);

    for iter in 0..config.iterations {
        let exaggeration = if iter < EXAGGERATION_ITERS {
            config.early_exaggeration
        } else {
            1.0
        };

        // Student-t kernel and its normalizer.
        let mut q_sum = 0.0f64;
        for i in 0..n {
            q_unnorm[i * n + i] = 0.0;
            for j in (i + 1)..n {
                let mut dsq = 0.0;
                for k in 0..dims {
                    let diff = y[i * dims + k] - y[j * dims + k];
                    dsq += diff * diff;
                }
                let w = 1.0 / (1.0 + dsq);
                q_unnorm[i * n + j] = w;
                q_unnorm[j * n + i] = w;
                q_sum += 2.0 * w;
            }
        }

        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut kl = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let pij = p[i * n + j];
                let w = q_unnorm[i * n + j];
                let qij = (w / q_sum).max(1e-12);
                if pij > 1e-12 {
                    kl += pij * (pij / qij).ln();
                }
                let coeff = 4.0 * (exaggeration * pij - qij) * w;
                for k in 0..dims {
                    grad[i * dims + k] += coeff * (y[i * dims + k] - y[j * dims + k]);
                }
            }
        }
        kl_trace.push(kl);

        let momentum = if iter < MOMENTUM_SWITCH_ITER {
            MOMENTUM_EARLY
        } else {
            MOMENTUM_LATE
        };
        for idx in 0..n * dims {
            velocity[idx] = momentum * velocity[idx] - config.learning_rate * grad[idx];
            y[idx] += velocity[idx];
        }
        // Re-center to keep the map translation-free.
        for k in 0..dims {
            let mean: f64 = (0..n).map(|i| y[i * dims + k]).sum::<f64>() / n as f64;
            for i in 0..n {
                y[i * dims + k] -= mean;
            }
        }
    }

    let points: Vec<Vec<f64>> = (0..n)
        .map(|i| y[i * dims..(i + 1) * dims].to_vec())
        .collect();
    Ok(EmbeddingAnalysis {
        points,
        kl_trace,
        max_entropy_error,
    })
}
