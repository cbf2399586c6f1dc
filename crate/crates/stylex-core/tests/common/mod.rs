//! Shared test oracles.
//!
//! Everything here is intentionally independent of the engine under test:
//! f64 reference kernels written as plain nested loops, a central-difference
//! gradient harness that evaluates the reference (not the engine), and small
//! statistics helpers used to judge clustering output.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stylex_core::{NodeId, Tape, Tensor};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_vec(rng: &mut ChaCha8Rng, n: usize, lo: f32, hi: f32) -> Vec<f32> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

// ---- f64 reference kernels (naive loops) ----

pub mod refk {
    /// Direct 6-loop convolution, zero padding.
    #[allow(clippy::too_many_arguments)]
    pub fn conv2d(
        x: &[f64],
        w: &[f64],
        b: usize,
        c: usize,
        h: usize,
        wd: usize,
        f: usize,
        k: usize,
        stride: usize,
        padding: usize,
    ) -> (Vec<f64>, usize, usize) {
        let h_out = (h + 2 * padding - k) / stride + 1;
        let w_out = (wd + 2 * padding - k) / stride + 1;
        let mut out = vec![0.0; b * f * h_out * w_out];
        for bi in 0..b {
            for fi in 0..f {
                for oi in 0..h_out {
                    for oj in 0..w_out {
                        let mut acc = 0.0;
                        for ci in 0..c {
                            for u in 0..k {
                                for v in 0..k {
                                    let ii = (oi * stride + u) as isize - padding as isize;
                                    let jj = (oj * stride + v) as isize - padding as isize;
                                    if ii < 0 || jj < 0 || ii >= h as isize || jj >= wd as isize {
                                        continue;
                                    }
                                    let xv = x[((bi * c + ci) * h + ii as usize) * wd
                                        + jj as usize];
                                    let wv = w[((fi * c + ci) * k + u) * k + v];
                                    acc += xv * wv;
                                }
                            }
                        }
                        out[((bi * f + fi) * h_out + oi) * w_out + oj] = acc;
                    }
                }
            }
        }
        (out, h_out, w_out)
    }

    pub fn linear(x: &[f64], w: &[f64], bias: &[f64], b: usize, n: usize, m: usize) -> Vec<f64> {
        let mut out = vec![0.0; b * m];
        for bi in 0..b {
            for mi in 0..m {
                let mut acc = bias[mi];
                for ni in 0..n {
                    acc += x[bi * n + ni] * w[mi * n + ni];
                }
                out[bi * m + mi] = acc;
            }
        }
        out
    }

    pub fn bn_train(
        x: &[f64],
        gamma: &[f64],
        beta: &[f64],
        b: usize,
        c: usize,
        spatial: usize,
        eps: f64,
    ) -> Vec<f64> {
        let n = (b * spatial) as f64;
        let mut out = vec![0.0; x.len()];
        for ci in 0..c {
            let mut mean = 0.0;
            for bi in 0..b {
                let off = (bi * c + ci) * spatial;
                for s in 0..spatial {
                    mean += x[off + s];
                }
            }
            mean /= n;
            let mut var = 0.0;
            for bi in 0..b {
                let off = (bi * c + ci) * spatial;
                for s in 0..spatial {
                    let d = x[off + s] - mean;
                    var += d * d;
                }
            }
            var /= n;
            let inv = 1.0 / (var + eps).sqrt();
            for bi in 0..b {
                let off = (bi * c + ci) * spatial;
                for s in 0..spatial {
                    out[off + s] = (x[off + s] - mean) * inv * gamma[ci] + beta[ci];
                }
            }
        }
        out
    }

    pub fn bn_eval(
        x: &[f64],
        gamma: &[f64],
        beta: &[f64],
        rm: &[f64],
        rv: &[f64],
        b: usize,
        c: usize,
        spatial: usize,
        eps: f64,
    ) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        for bi in 0..b {
            for ci in 0..c {
                let inv = 1.0 / (rv[ci] + eps).sqrt();
                let off = (bi * c + ci) * spatial;
                for s in 0..spatial {
                    out[off + s] = (x[off + s] - rm[ci]) * inv * gamma[ci] + beta[ci];
                }
            }
        }
        out
    }

    pub fn relu(x: &[f64]) -> Vec<f64> {
        x.iter().map(|&v| v.max(0.0)).collect()
    }

    pub fn avg_pool(
        x: &[f64],
        b: usize,
        c: usize,
        h: usize,
        w: usize,
        k: usize,
        stride: usize,
    ) -> (Vec<f64>, usize, usize) {
        let h_out = (h - k) / stride + 1;
        let w_out = (w - k) / stride + 1;
        let mut out = vec![0.0; b * c * h_out * w_out];
        for bc in 0..b * c {
            for oi in 0..h_out {
                for oj in 0..w_out {
                    let mut acc = 0.0;
                    for u in 0..k {
                        for v in 0..k {
                            acc += x[bc * h * w + (oi * stride + u) * w + oj * stride + v];
                        }
                    }
                    out[bc * h_out * w_out + oi * w_out + oj] = acc / (k * k) as f64;
                }
            }
        }
        (out, h_out, w_out)
    }

    pub fn max_pool(
        x: &[f64],
        b: usize,
        c: usize,
        h: usize,
        w: usize,
        k: usize,
        stride: usize,
    ) -> (Vec<f64>, usize, usize) {
        let h_out = (h - k) / stride + 1;
        let w_out = (w - k) / stride + 1;
        let mut out = vec![0.0; b * c * h_out * w_out];
        for bc in 0..b * c {
            for oi in 0..h_out {
                for oj in 0..w_out {
                    let mut best = f64::NEG_INFINITY;
                    for u in 0..k {
                        for v in 0..k {
                            best =
                                best.max(x[bc * h * w + (oi * stride + u) * w + oj * stride + v]);
                        }
                    }
                    out[bc * h_out * w_out + oi * w_out + oj] = best;
                }
            }
        }
        (out, h_out, w_out)
    }

    pub fn global_avg_pool(x: &[f64], b: usize, c: usize, spatial: usize) -> Vec<f64> {
        let mut out = vec![0.0; b * c];
        for bc in 0..b * c {
            out[bc] = x[bc * spatial..(bc + 1) * spatial].iter().sum::<f64>() / spatial as f64;
        }
        out
    }

    pub fn cosine_rows(a: &[f64], b: &[f64], rows: usize, d: usize) -> Vec<f64> {
        let mut out = vec![0.0; rows];
        for r in 0..rows {
            let ar = &a[r * d..(r + 1) * d];
            let br = &b[r * d..(r + 1) * d];
            let dot: f64 = ar.iter().zip(br).map(|(&x, &y)| x * y).sum();
            let na: f64 = ar.iter().map(|&x| x * x).sum::<f64>().sqrt();
            let nb: f64 = br.iter().map(|&y| y * y).sum::<f64>().sqrt();
            out[r] = dot / (na * nb);
        }
        out
    }
}

// ---- finite-difference harness ----

pub const FD_STEP: f64 = 1e-3;
pub const FD_REL_TOL: f64 = 1e-4;

pub struct FdOutcome {
    pub max_rel_err: f64,
    pub checked: usize,
    pub forward_rel_err: f64,
}

/// Central-difference gradient check.
///
/// `build` records the graph on a fresh tape and returns the scalar loss;
/// `reference` evaluates the same function in f64 from raw input buffers.
/// The engine's analytic gradients are compared against
/// (reference(x+h) - reference(x-h)) / 2h element by element.
pub fn finite_diff_check(
    inputs: &[Tensor],
    build: impl Fn(&mut Tape, &[NodeId]) -> NodeId,
    reference: impl Fn(&[Vec<f64>]) -> f64,
) -> FdOutcome {
    let mut tape = Tape::new();
    let ids: Vec<NodeId> = inputs
        .iter()
        .map(|t| tape.leaf(t.clone().with_grad()))
        .collect();
    let loss = build(&mut tape, &ids);
    let engine_loss = tape.value(loss).data()[0] as f64;

    let base: Vec<Vec<f64>> = inputs
        .iter()
        .map(|t| t.data().iter().map(|&v| v as f64).collect())
        .collect();
    let ref_loss = reference(&base);
    let forward_rel_err =
        (engine_loss - ref_loss).abs() / ref_loss.abs().max(engine_loss.abs()).max(1.0);

    tape.backward(loss).expect("backward");

    let mut max_rel_err = 0.0f64;
    let mut checked = 0;
    for (ti, tensor) in inputs.iter().enumerate() {
        let analytic = tape.grad(ids[ti]).expect("leaf gradient");
        for ei in 0..tensor.numel() {
            let mut plus = base.clone();
            plus[ti][ei] += FD_STEP;
            let mut minus = base.clone();
            minus[ti][ei] -= FD_STEP;
            let fd = (reference(&plus) - reference(&minus)) / (2.0 * FD_STEP);
            let a = analytic[ei] as f64;
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1.0);
            if rel > max_rel_err {
                max_rel_err = rel;
            }
            checked += 1;
        }
    }
    FdOutcome {
        max_rel_err,
        checked,
        forward_rel_err,
    }
}

// ---- randomized graph families ----

/// One randomized differentiable graph: engine builder + f64 reference,
/// plus a kink margin so the sampler can avoid finite-difference steps that
/// would cross a relu/max-pool non-smoothness.
pub struct GraphCase {
    pub name: String,
    pub inputs: Vec<Tensor>,
    pub kink_margin: f64,
    pub build: Box<dyn Fn(&mut Tape, &[NodeId]) -> NodeId>,
    pub reference: Box<dyn Fn(&[Vec<f64>]) -> f64>,
}

fn sum64(v: &[f64]) -> f64 {
    v.iter().sum()
}

/// Smallest |pre-activation| across a buffer (relu kink distance).
fn min_abs(v: &[f32]) -> f64 {
    v.iter().fold(f64::INFINITY, |m, &x| m.min((x as f64).abs()))
}

/// Smallest gap between best and second-best inside max-pool windows.
fn min_pool_gap(x: &[f32], b: usize, c: usize, h: usize, w: usize, k: usize, stride: usize) -> f64 {
    let h_out = (h - k) / stride + 1;
    let w_out = (w - k) / stride + 1;
    let mut min_gap = f64::INFINITY;
    for bc in 0..b * c {
        for oi in 0..h_out {
            for oj in 0..w_out {
                let mut best = f64::NEG_INFINITY;
                let mut second = f64::NEG_INFINITY;
                for u in 0..k {
                    for v in 0..k {
                        let val = x[bc * h * w + (oi * stride + u) * w + oj * stride + v] as f64;
                        if val > best {
                            second = best;
                            best = val;
                        } else if val > second {
                            second = val;
                        }
                    }
                }
                if second.is_finite() {
                    min_gap = min_gap.min(best - second);
                }
            }
        }
    }
    min_gap
}

pub fn make_graph_case(seed: u64) -> GraphCase {
    let mut r = rng(seed);
    match r.gen_range(0..7u32) {
        0 => conv_chain_case(&mut r),
        1 => conv_bn_relu_linear_case(&mut r),
        2 => pool_case(&mut r, false),
        3 => pool_case(&mut r, true),
        4 => cosine_case(&mut r),
        5 => elementwise_case(&mut r),
        _ => bn_eval_case(&mut r),
    }
}

fn conv_chain_case(r: &mut ChaCha8Rng) -> GraphCase {
    let (b, c, h, w) = (r.gen_range(1..3usize), r.gen_range(1..3usize), 6, 7);
    let f = r.gen_range(1..4usize);
    let k = if r.gen_bool(0.5) { 3 } else { 1 };
    let stride = r.gen_range(1..3usize);
    let padding = r.gen_range(0..2usize);
    let x = Tensor::new(vec![b, c, h, w], uniform_vec(r, b * c * h * w, -1.0, 1.0)).unwrap();
    let kw = Tensor::new(vec![f, c, k, k], uniform_vec(r, f * c * k * k, -1.0, 1.0)).unwrap();
    GraphCase {
        name: format!("conv b{b} c{c} f{f} k{k} s{stride} p{padding}"),
        inputs: vec![x, kw],
        kink_margin: f64::INFINITY,
        build: Box::new(move |tape, ids| {
            let y = tape.conv2d(ids[0], ids[1], stride, padding).unwrap();
            tape.sum(y).unwrap()
        }),
        reference: Box::new(move |inp| {
            let (y, _, _) = refk::conv2d(&inp[0], &inp[1], b, c, h, w, f, k, stride, padding);
            sum64(&y)
        }),
    }
}

fn conv_bn_relu_linear_case(r: &mut ChaCha8Rng) -> GraphCase {
    // The composite graph named in the op contract: conv -> norm -> relu -> linear.
    let (b, c, h, w) = (2, r.gen_range(1..3usize), 5, 5);
    let f = r.gen_range(2..4usize);
    let (k, stride, padding) = (3, 1, 1);
    let h_out = h;
    let w_out = w;
    let feat = f * h_out * w_out;
    let m = r.gen_range(1..4usize);

    let x = Tensor::new(vec![b, c, h, w], uniform_vec(r, b * c * h * w, -1.0, 1.0)).unwrap();
    let kw = Tensor::new(vec![f, c, k, k], uniform_vec(r, f * c * k * k, -1.0, 1.0)).unwrap();
    let gamma = Tensor::new(vec![f], uniform_vec(r, f, 0.5, 1.5)).unwrap();
    let beta = Tensor::new(vec![f], uniform_vec(r, f, -0.3, 0.3)).unwrap();
    let lw = Tensor::new(vec![m, feat], uniform_vec(r, m * feat, -0.5, 0.5)).unwrap();
    let lb = Tensor::new(vec![m], uniform_vec(r, m, -0.5, 0.5)).unwrap();

    // Kink margin: distance of the bn output to the relu kink at the base point.
    let base_x: Vec<f64> = x.data().iter().map(|&v| v as f64).collect();
    let base_w: Vec<f64> = kw.data().iter().map(|&v| v as f64).collect();
    let (conv, _, _) = refk::conv2d(&base_x, &base_w, b, c, h, w, f, k, stride, padding);
    let bn = refk::bn_train(
        &conv,
        &gamma.data().iter().map(|&v| v as f64).collect::<Vec<_>>(),
        &beta.data().iter().map(|&v| v as f64).collect::<Vec<_>>(),
        b,
        f,
        h_out * w_out,
        1e-5,
    );
    let margin = bn.iter().fold(f64::INFINITY, |mm, &v| mm.min(v.abs()));

    GraphCase {
        name: format!("conv-bn-relu-linear c{c} f{f} m{m}"),
        inputs: vec![x, kw, gamma, beta, lw, lb],
        kink_margin: margin,
        build: Box::new(move |tape, ids| {
            let conv = tape.conv2d(ids[0], ids[1], stride, padding).unwrap();
            let mut state = stylex_core::BatchNormState::new(f, 0.1);
            let bn = tape
                .batch_norm(conv, ids[2], ids[3], &mut state, stylex_core::BnMode::Train)
                .unwrap();
            let act = tape.relu(bn).unwrap();
            let flat = tape.reshape(act, vec![b, feat]).unwrap();
            let lin = tape.linear(flat, ids[4], ids[5]).unwrap();
            tape.sum(lin).unwrap()
        }),
        reference: Box::new(move |inp| {
            let (conv, _, _) = refk::conv2d(&inp[0], &inp[1], b, c, h, w, f, k, stride, padding);
            let bn = refk::bn_train(&conv, &inp[2], &inp[3], b, f, h_out * w_out, 1e-5);
            let act = refk::relu(&bn);
            let lin = refk::linear(&act, &inp[4], &inp[5], b, feat, m);
            sum64(&lin)
        }),
    }
}

fn pool_case(r: &mut ChaCha8Rng, use_max: bool) -> GraphCase {
    let (b, c, h, w) = (r.gen_range(1..3usize), r.gen_range(1..3usize), 6, 6);
    let k = 2;
    let stride = 2;
    let x = Tensor::new(vec![b, c, h, w], uniform_vec(r, b * c * h * w, -1.0, 1.0)).unwrap();
    let margin = if use_max {
        min_pool_gap(x.data(), b, c, h, w, k, stride)
    } else {
        f64::INFINITY
    };
    GraphCase {
        name: format!("{}pool b{b} c{c}", if use_max { "max" } else { "avg" }),
        inputs: vec![x],
        kink_margin: margin,
        build: Box::new(move |tape, ids| {
            let p = if use_max {
                tape.max_pool(ids[0], k, stride).unwrap()
            } else {
                tape.avg_pool(ids[0], k, stride).unwrap()
            };
            let g = tape.global_avg_pool(p).unwrap();
            let s = tape.sum(g).unwrap();
            tape.scale(s, 1.5).unwrap()
        }),
        reference: Box::new(move |inp| {
            let (p, ho, wo) = if use_max {
                refk::max_pool(&inp[0], b, c, h, w, k, stride)
            } else {
                refk::avg_pool(&inp[0], b, c, h, w, k, stride)
            };
            let g = refk::global_avg_pool(&p, b, c, ho * wo);
            sum64(&g) * 1.5
        }),
    }
}

fn cosine_case(r: &mut ChaCha8Rng) -> GraphCase {
    let (rows, d) = (r.gen_range(1..4usize), r.gen_range(4..9usize));
    let a = Tensor::new(vec![rows, d], uniform_vec(r, rows * d, 0.2, 1.0)).unwrap();
    let b = Tensor::new(vec![rows, d], uniform_vec(r, rows * d, -1.0, -0.2)).unwrap();
    GraphCase {
        name: format!("cosine rows{rows} d{d}"),
        inputs: vec![a, b],
        kink_margin: f64::INFINITY,
        build: Box::new(move |tape, ids| {
            let s = tape.cosine_similarity(ids[0], ids[1]).unwrap();
            tape.sum(s).unwrap()
        }),
        reference: Box::new(move |inp| sum64(&refk::cosine_rows(&inp[0], &inp[1], rows, d))),
    }
}

fn elementwise_case(r: &mut ChaCha8Rng) -> GraphCase {
    let n = r.gen_range(4..12usize);
    let a = Tensor::new(vec![n], uniform_vec(r, n, -1.0, 1.0)).unwrap();
    let b = Tensor::new(vec![n], uniform_vec(r, n, -1.0, 1.0)).unwrap();
    let factor = r.gen_range(-2.0f32..2.0);
    GraphCase {
        name: format!("elementwise n{n}"),
        inputs: vec![a, b],
        kink_margin: f64::INFINITY,
        build: Box::new(move |tape, ids| {
            let prod = tape.mul(ids[0], ids[1]).unwrap();
            let scaled = tape.scale(prod, factor).unwrap();
            let s = tape.add(scaled, ids[0]).unwrap();
            let shaped = tape.reshape(s, vec![1, n]).unwrap();
            tape.sum(shaped).unwrap()
        }),
        reference: Box::new(move |inp| {
            let mixed: Vec<f64> = inp[0]
                .iter()
                .zip(&inp[1])
                .map(|(&x, &y)| x * y * factor as f64 + x)
                .collect();
            sum64(&mixed)
        }),
    }
}

fn bn_eval_case(r: &mut ChaCha8Rng) -> GraphCase {
    let (b, c, spatial) = (r.gen_range(1..3usize), r.gen_range(1..4usize), 4);
    let x = Tensor::new(
        vec![b, c, 2, 2],
        uniform_vec(r, b * c * spatial, -1.0, 1.0),
    )
    .unwrap();
    let gamma = Tensor::new(vec![c], uniform_vec(r, c, 0.5, 1.5)).unwrap();
    let beta = Tensor::new(vec![c], uniform_vec(r, c, -0.5, 0.5)).unwrap();
    let rm = uniform_vec(r, c, -0.5, 0.5);
    let rv = uniform_vec(r, c, 0.5, 2.0);
    let rm64: Vec<f64> = rm.iter().map(|&v| v as f64).collect();
    let rv64: Vec<f64> = rv.iter().map(|&v| v as f64).collect();
    GraphCase {
        name: format!("bn-eval b{b} c{c}"),
        inputs: vec![x, gamma, beta],
        kink_margin: f64::INFINITY,
        build: Box::new(move |tape, ids| {
            let mut state = stylex_core::BatchNormState::new(c, 0.1);
            state.running_mean.copy_from_slice(&rm);
            state.running_var.copy_from_slice(&rv);
            let y = tape
                .batch_norm(ids[0], ids[1], ids[2], &mut state, stylex_core::BnMode::Eval)
                .unwrap();
            tape.sum(y).unwrap()
        }),
        reference: Box::new(move |inp| {
            sum64(&refk::bn_eval(
                &inp[0], &inp[1], &inp[2], &rm64, &rv64, b, c, spatial, 1e-5,
            ))
        }),
    }
}

/// Draw a graph whose finite-difference step cannot cross a kink.
pub fn sample_smooth_graph(seed: u64) -> GraphCase {
    let mut s = seed;
    loop {
        let case = make_graph_case(s);
        if case.kink_margin > 20.0 * FD_STEP {
            return case;
        }
        s = s.wrapping_add(0x9E37_79B9_7F4A_7C15);
    }
}

// ---- clustering oracles ----

/// Single-linkage agglomerative clustering down to `k` clusters; returns
/// cluster assignments.
pub fn single_linkage(points: &[Vec<f64>], k: usize) -> Vec<usize> {
    let n = points.len();
    let mut assign: Vec<usize> = (0..n).collect();
    let mut active: Vec<usize> = (0..n).collect();
    let mut dist = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d: f64 = points[i]
                .iter()
                .zip(&points[j])
                .map(|(&a, &b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }
    while active.len() > k {
        let mut best = (0usize, 1usize, f64::INFINITY);
        for (ai, &ca) in active.iter().enumerate() {
            for &cb in active.iter().skip(ai + 1) {
                let mut dmin = f64::INFINITY;
                for i in 0..n {
                    if assign[i] != ca {
                        continue;
                    }
                    for j in 0..n {
                        if assign[j] == cb {
                            dmin = dmin.min(dist[i][j]);
                        }
                    }
                }
                if dmin < best.2 {
                    best = (ca, cb, dmin);
                }
            }
        }
        let (keep, merge, _) = best;
        for a in assign.iter_mut() {
            if *a == merge {
                *a = keep;
            }
        }
        active.retain(|&c| c != merge);
    }
    // Renumber to 0..k.
    let mut map = std::collections::BTreeMap::new();
    assign
        .iter()
        .map(|&a| {
            let next = map.len();
            *map.entry(a).or_insert(next)
        })
        .collect()
}

/// Fraction of points whose cluster's majority label matches their own.
pub fn cluster_purity(assign: &[usize], labels: &[usize]) -> f64 {
    let k = assign.iter().max().map_or(0, |&m| m + 1);
    let l = labels.iter().max().map_or(0, |&m| m + 1);
    let mut counts = vec![vec![0usize; l]; k];
    for (&a, &lab) in assign.iter().zip(labels) {
        counts[a][lab] += 1;
    }
    let correct: usize = counts
        .iter()
        .map(|row| row.iter().copied().max().unwrap_or(0))
        .sum();
    correct as f64 / assign.len() as f64
}
