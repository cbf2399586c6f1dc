//! The computation tape: define-by-run op recording and reverse-mode backward.
//!
//! A tape is rebuilt for every forward pass. Backward walks the recorded ops
//! in reverse creation order exactly once and accumulates gradients onto the
//! leaves; running it a second time on the same tape is an error.

use super::kernels::{
    channel_moments, col2im_t_acc, conv_out_extent, im2col_t, matmul_acc, sum_f64,
};
use super::Tensor;
use crate::error::TensorError;

/// Norm floor below which cosine similarity rejects a row.
pub const NORM_EPS: f64 = 1e-12;
/// Variance floor added inside batch normalization.
pub const BN_EPS: f64 = 1e-5;

/// Handle to a node on a specific tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(pub usize);

/// Train/eval switch for batch normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    Train,
    Eval,
}

/// Running statistics owned by a normalization layer, updated during train
/// forward passes and read during eval.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormState {
    pub running_mean: Vec<f32>,
    pub running_var: Vec<f32>,
    pub momentum: f32,
}

impl BatchNormState {
    pub fn new(channels: usize, momentum: f32) -> Self {
        Self {
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            momentum,
        }
    }

    pub fn channels(&self) -> usize {
        self.running_mean.len()
    }
}

enum Op {
    Leaf,
    Conv2d {
        input: NodeId,
        kernel: NodeId,
        stride: usize,
        padding: usize,
    },
    Linear {
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
    },
    BatchNorm {
        input: NodeId,
        gamma: NodeId,
        beta: NodeId,
        spatial: usize,
        mode: BnMode,
        mean: Vec<f32>,
        invstd: Vec<f32>,
    },
    Relu {
        input: NodeId,
    },
    AvgPool {
        input: NodeId,
        k: usize,
        stride: usize,
    },
    MaxPool {
        input: NodeId,
        argmax: Vec<u32>,
    },
    GlobalAvgPool {
        input: NodeId,
    },
    Add {
        lhs: NodeId,
        rhs: NodeId,
    },
    Mul {
        lhs: NodeId,
        rhs: NodeId,
    },
    Scale {
        input: NodeId,
        factor: f32,
    },
    Reshape {
        input: NodeId,
    },
    StopGrad,
    CosineSim {
        lhs: NodeId,
        rhs: NodeId,
        norms: Vec<(f64, f64)>,
    },
    Sum {
        input: NodeId,
    },
    Spent,
}

struct Node {
    value: Tensor,
    grad: Option<Vec<f32>>,
    requires_grad: bool,
    op: Op,
}

/// Append-only record of one forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Record a leaf. Gradients accumulate here when `tensor.requires_grad`.
    pub fn leaf(&mut self, tensor: Tensor) -> NodeId {
        let requires = tensor.requires_grad;
        self.push(tensor, requires, Op::Leaf)
    }

    /// Record a non-differentiable input.
    pub fn constant(&mut self, tensor: Tensor) -> NodeId {
        self.push(tensor, false, Op::Leaf)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Gradient of a node after `backward`. Leaves with `requires_grad` that
    /// received no flow report exact zeros.
    pub fn grad(&self, id: NodeId) -> Result<&[f32], TensorError> {
        let node = self.nodes.get(id.0).ok_or(TensorError::UnknownNode(id.0))?;
        node.grad
            .as_deref()
            .ok_or(TensorError::NoGradient(id.0))
    }

    fn push(&mut self, value: Tensor, requires_grad: bool, op: Op) -> NodeId {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn check(&self, id: NodeId) -> Result<(), TensorError> {
        if id.0 >= self.nodes.len() {
            return Err(TensorError::UnknownNode(id.0));
        }
        Ok(())
    }

    fn requires(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    // ---- forward ops ----

    /// 2-D convolution, no bias: input [B,C,H,W] * kernel [F,C,k,k].
    pub fn conv2d(
        &mut self,
        input: NodeId,
        kernel: NodeId,
        stride: usize,
        padding: usize,
    ) -> Result<NodeId, TensorError> {
        self.check(input)?;
        self.check(kernel)?;
        if stride == 0 {
            return Err(TensorError::ZeroStride);
        }
        let [b, c, h, w] = self.nodes[input.0].value.dims4("conv2d")?;
        let [f, kc, kh, kw] = self.nodes[kernel.0].value.dims4("conv2d")?;
        if kc != c || kh != kw {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d",
                lhs: self.nodes[input.0].value.shape().to_vec(),
                rhs: self.nodes[kernel.0].value.shape().to_vec(),
            });
        }
        let k = kh;
        if k > h + 2 * padding || k > w + 2 * padding {
            return Err(TensorError::KernelTooLarge {
                kernel: k,
                padded: (h + 2 * padding).min(w + 2 * padding),
            });
        }
        let h_out = conv_out_extent(h, k, stride, padding);
        let w_out = conv_out_extent(w, k, stride, padding);
        let positions = h_out * w_out;
        let ckk = c * k * k;

        let w_data = self.nodes[kernel.0].value.data();
        let mut wt = vec![0.0f32; ckk * f];
        for fi in 0..f {
            for p in 0..ckk {
                wt[p * f + fi] = w_data[fi * ckk + p];
            }
        }

        let x = self.nodes[input.0].value.data();
        let mut out = vec![0.0f32; b * f * positions];
        let mut col = vec![0.0f32; positions * ckk];
        let mut yt = vec![0.0f32; positions * f];
        for bi in 0..b {
            im2col_t(
                &mut col,
                &x[bi * c * h * w..(bi + 1) * c * h * w],
                c,
                h,
                w,
                k,
                stride,
                padding,
                h_out,
                w_out,
            );
            yt.iter_mut().for_each(|v| *v = 0.0);
            matmul_acc(&mut yt, &col, &wt, positions, ckk, f);
            let dst = &mut out[bi * f * positions..(bi + 1) * f * positions];
            for pos in 0..positions {
                for fi in 0..f {
                    dst[fi * positions + pos] = yt[pos * f + fi];
                }
            }
        }
        let value = Tensor::new(vec![b, f, h_out, w_out], out)?;
        let requires = self.requires(input) || self.requires(kernel);
        Ok(self.push(
            value,
            requires,
            Op::Conv2d {
                input,
                kernel,
                stride,
                padding,
            },
        ))
    }

    /// Affine map per batch row: input [B,N] * weight [M,N]^T + bias [M].
    pub fn linear(
        &mut self,
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
    ) -> Result<NodeId, TensorError> {
        self.check(input)?;
        self.check(weight)?;
        self.check(bias)?;
        let [b, n] = self.nodes[input.0].value.dims2("linear")?;
        let [m, wn] = self.nodes[weight.0].value.dims2("linear")?;
        if wn != n || self.nodes[bias.0].value.shape() != [m] {
            return Err(TensorError::ShapeMismatch {
                op: "linear",
                lhs: self.nodes[input.0].value.shape().to_vec(),
                rhs: self.nodes[weight.0].value.shape().to_vec(),
            });
        }
        let w = self.nodes[weight.0].value.data();
        let mut wt = vec![0.0f32; n * m];
        for mi in 0..m {
            for ni in 0..n {
                wt[ni * m + mi] = w[mi * n + ni];
            }
        }
        let x = self.nodes[input.0].value.data();
        let bias_v = self.nodes[bias.0].value.data();
        let mut out = vec![0.0f32; b * m];
        matmul_acc(&mut out, x, &wt, b, n, m);
        for row in out.chunks_mut(m) {
            for (o, &bv) in row.iter_mut().zip(bias_v) {
                *o += bv;
            }
        }
        let value = Tensor::new(vec![b, m], out)?;
        let requires =
            self.requires(input) || self.requires(weight) || self.requires(bias);
        Ok(self.push(
            value,
            requires,
            Op::Linear {
                input,
                weight,
                bias,
            },
        ))
    }

    /// Batch normalization over [B,C,H,W] or [B,C]; gamma/beta are [C].
    ///
    /// Train mode normalizes with batch statistics and updates `state`;
    /// eval mode normalizes with the running statistics.
    pub fn batch_norm(
        &mut self,
        input: NodeId,
        gamma: NodeId,
        beta: NodeId,
        state: &mut BatchNormState,
        mode: BnMode,
    ) -> Result<NodeId, TensorError> {
        self.check(input)?;
        self.check(gamma)?;
        self.check(beta)?;
        let shape = self.nodes[input.0].value.shape().to_vec();
        let (b, c, spatial) = match shape.len() {
            4 => (shape[0], shape[1], shape[2] * shape[3]),
            2 => (shape[0], shape[1], 1),
            _ => {
                return Err(TensorError::RankMismatch {
                    op: "normalize_batch",
                    expected: 4,
                    shape,
                })
            }
        };
        if self.nodes[gamma.0].value.shape() != [c]
            || self.nodes[beta.0].value.shape() != [c]
            || state.channels() != c
        {
            return Err(TensorError::ShapeMismatch {
                op: "normalize_batch",
                lhs: shape,
                rhs: self.nodes[gamma.0].value.shape().to_vec(),
            });
        }
        if mode == BnMode::Train && b < 2 {
            return Err(TensorError::BatchTooSmall(b));
        }

        let (mean, invstd): (Vec<f32>, Vec<f32>) = match mode {
            BnMode::Train => {
                let x = self.nodes[input.0].value.data();
                let (mu, var) = channel_moments(x, b, c, spatial);
                let mom = state.momentum as f64;
                for ci in 0..c {
                    state.running_mean[ci] =
                        ((1.0 - mom) * state.running_mean[ci] as f64 + mom * mu[ci]) as f32;
                    state.running_var[ci] =
                        ((1.0 - mom) * state.running_var[ci] as f64 + mom * var[ci]) as f32;
                }
                (
                    mu.iter().map(|&v| v as f32).collect(),
                    var.iter().map(|&v| (1.0 / (v + BN_EPS).sqrt()) as f32).collect(),
                )
            }
            BnMode::Eval => (
                state.running_mean.clone(),
                state
                    .running_var
                    .iter()
                    .map(|&v| (1.0 / (v as f64 + BN_EPS).sqrt()) as f32)
                    .collect(),
            ),
        };

        let x = self.nodes[input.0].value.data();
        let g = self.nodes[gamma.0].value.data();
        let bt = self.nodes[beta.0].value.data();
        let mut out = vec![0.0f32; x.len()];
        for bi in 0..b {
            for ci in 0..c {
                let off = (bi * c + ci) * spatial;
                let (mu, inv, gc, bc) = (mean[ci], invstd[ci], g[ci], bt[ci]);
                for s in 0..spatial {
                    out[off + s] = (x[off + s] - mu) * inv * gc + bc;
                }
            }
        }
        let value = Tensor::new(self.nodes[input.0].value.shape().to_vec(), out)?;
        let requires =
            self.requires(input) || self.requires(gamma) || self.requires(beta);
        Ok(self.push(
            value,
            requires,
            Op::BatchNorm {
                input,
                gamma,
                beta,
                spatial,
                mode,
                mean,
                invstd,
            },
        ))
    }

    pub fn relu(&mut self, input: NodeId) -> Result<NodeId, TensorError> {
        self.check(input)?;
        let src = &self.nodes[input.0].value;
        let out: Vec<f32> = src.data().iter().map(|&v| v.max(0.0)).collect();
        let value = Tensor::new(src.shape().to_vec(), out)?;
        let requires = self.requires(input);
        Ok(self.push(value, requires, Op::Relu { input }))
    }

    pub fn avg_pool(
        &mut self,
        input: NodeId,
        k: usize,
        stride: usize,
    ) -> Result<NodeId, TensorError> {
        self.check(input)?;
        if stride == 0 {
            return Err(TensorError::ZeroStride);
        }
        let [b, c, h, w] = self.nodes[input.0].value.dims4("avg_pool")?;
        if k > h || k > w {
            return Err(TensorError::PoolTooLarge { k, stride, h, w });
        }
        let h_out = (h - k) / stride + 1;
        let w_out = (w - k) / stride + 1;
        let x = self.nodes[input.0].value.data();
        let inv = 1.0 / (k * k) as f32;
        let mut out = vec![0.0f32; b * c * h_out * w_out];
        for bc in 0..b * c {
            let plane = &x[bc * h * w..(bc + 1) * h * w];
            let dst = &mut out[bc * h_out * w_out..(bc + 1) * h_out * w_out];
            for oi in 0..h_out {
                for oj in 0..w_out {
                    let mut acc = 0.0f32;
                    for u in 0..k {
                        let row = &plane[(oi * stride + u) * w + oj * stride..];
                        for &v in &row[..k] {
                            acc += v;
                        }
                    }
                    dst[oi * w_out + oj] = acc * inv;
                }
            }
        }
        let value = Tensor::new(vec![b, c, h_out, w_out], out)?;
        let requires = self.requires(input);
        Ok(self.push(value, requires, Op::AvgPool { input, k, stride }))
    }

    pub fn max_pool(
        &mut self,
        input: NodeId,
        k: usize,
        stride: usize,
    ) -> Result<NodeId, TensorError> {
        self.check(input)?;
        if stride == 0 {
            return Err(TensorError::ZeroStride);
        }
        let [b, c, h, w] = self.nodes[input.0].value.dims4("max_pool")?;
        if k > h || k > w {
            return Err(TensorError::PoolTooLarge { k, stride, h, w });
        }
        let h_out = (h - k) / stride + 1;
        let w_out = (w - k) / stride + 1;
        let x = self.nodes[input.0].value.data();
        let mut out = vec![0.0f32; b * c * h_out * w_out];
        let mut argmax = vec![0u32; out.len()];
        for bc in 0..b * c {
            let plane = &x[bc * h * w..(bc + 1) * h * w];
            let base = bc * h_out * w_out;
            for oi in 0..h_out {
                for oj in 0..w_out {
                    let mut best = f32::NEG_INFINITY;
                    let mut best_idx = 0u32;
                    for u in 0..k {
                        for v in 0..k {
                            let idx = (oi * stride + u) * w + oj * stride + v;
                            if plane[idx] > best {
                                best = plane[idx];
                                best_idx = idx as u32;
                            }
                        }
                    }
                    out[base + oi * w_out + oj] = best;
                    argmax[base + oi * w_out + oj] = best_idx;
                }
            }
        }
        let value = Tensor::new(vec![b, c, h_out, w_out], out)?;
        let requires = self.requires(input);
        Ok(self.push(value, requires, Op::MaxPool { input, argmax }))
    }

    /// Collapse spatial extents: [B,C,H,W] -> [B,C].
    pub fn global_avg_pool(&mut self, input: NodeId) -> Result<NodeId, TensorError> {
        self.check(input)?;
        let [b, c, h, w] = self.nodes[input.0].value.dims4("global_average_pool")?;
        let spatial = h * w;
        let x = self.nodes[input.0].value.data();
        let mut out = vec![0.0f32; b * c];
        for bc in 0..b * c {
            out[bc] = (sum_f64(&x[bc * spatial..(bc + 1) * spatial]) / spatial as f64) as f32;
        }
        let value = Tensor::new(vec![b, c], out)?;
        let requires = self.requires(input);
        Ok(self.push(value, requires, Op::GlobalAvgPool { input }))
    }

    pub fn add(&mut self, lhs: NodeId, rhs: NodeId) -> Result<NodeId, TensorError> {
        self.binary_elementwise(lhs, rhs, "add")
    }

    pub fn mul(&mut self, lhs: NodeId, rhs: NodeId) -> Result<NodeId, TensorError> {
        self.binary_elementwise(lhs, rhs, "mul")
    }

    fn binary_elementwise(
        &mut self,
        lhs: NodeId,
        rhs: NodeId,
        op: &'static str,
    ) -> Result<NodeId, TensorError> {
        self.check(lhs)?;
        self.check(rhs)?;
        let (a, b) = (&self.nodes[lhs.0].value, &self.nodes[rhs.0].value);
        if a.shape() != b.shape() {
            return Err(TensorError::ShapeMismatch {
                op,
                lhs: a.shape().to_vec(),
                rhs: b.shape().to_vec(),
            });
        }
        let out: Vec<f32> = match op {
            "add" => a.data().iter().zip(b.data()).map(|(&x, &y)| x + y).collect(),
            _ => a.data().iter().zip(b.data()).map(|(&x, &y)| x * y).collect(),
        };
        let value = Tensor::new(a.shape().to_vec(), out)?;
        let requires = self.requires(lhs) || self.requires(rhs);
        let recorded = if op == "add" {
            Op::Add { lhs, rhs }
        } else {
            Op::Mul { lhs, rhs }
        };
        Ok(self.push(value, requires, recorded))
    }

    pub fn scale(&mut self, input: NodeId, factor: f32) -> Result<NodeId, TensorError> {
        self.check(input)?;
        let src = &self.nodes[input.0].value;
        let out: Vec<f32> = src.data().iter().map(|&v| v * factor).collect();
        let value = Tensor::new(src.shape().to_vec(), out)?;
        let requires = self.requires(input);
        Ok(self.push(value, requires, Op::Scale { input, factor }))
    }

    pub fn sub(&mut self, lhs: NodeId, rhs: NodeId) -> Result<NodeId, TensorError> {
        let neg = self.scale(rhs, -1.0)?;
        self.add(lhs, neg)
    }

    pub fn reshape(&mut self, input: NodeId, shape: Vec<usize>) -> Result<NodeId, TensorError> {
        self.check(input)?;
        let src = &self.nodes[input.0].value;
        let n: usize = shape.iter().product();
        if n != src.numel() || shape.iter().any(|&e| e == 0) {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                lhs: src.shape().to_vec(),
                rhs: shape,
            });
        }
        let value = Tensor::new(shape, src.data().to_vec())?;
        let requires = self.requires(input);
        Ok(self.push(value, requires, Op::Reshape { input }))
    }

    /// Forward identity that blocks all backward flow.
    pub fn stop_gradient(&mut self, input: NodeId) -> Result<NodeId, TensorError> {
        self.check(input)?;
        let value = self.nodes[input.0].value.clone();
        Ok(self.push(value, false, Op::StopGrad))
    }

    /// Row-wise cosine similarity of two [B,D] batches -> [B].
    pub fn cosine_similarity(&mut self, lhs: NodeId, rhs: NodeId) -> Result<NodeId, TensorError> {
        self.check(lhs)?;
        self.check(rhs)?;
        let [b, d] = self.nodes[lhs.0].value.dims2("cosine_similarity")?;
        if self.nodes[rhs.0].value.shape() != [b, d] {
            return Err(TensorError::ShapeMismatch {
                op: "cosine_similarity",
                lhs: self.nodes[lhs.0].value.shape().to_vec(),
                rhs: self.nodes[rhs.0].value.shape().to_vec(),
            });
        }
        let a = self.nodes[lhs.0].value.data();
        let bv = self.nodes[rhs.0].value.data();
        let mut out = vec![0.0f32; b];
        let mut norms = Vec::with_capacity(b);
        for row in 0..b {
            let ar = &a[row * d..(row + 1) * d];
            let br = &bv[row * d..(row + 1) * d];
            let mut dot = 0.0f64;
            let mut na2 = 0.0f64;
            let mut nb2 = 0.0f64;
            for (&x, &y) in ar.iter().zip(br) {
                dot += x as f64 * y as f64;
                na2 += x as f64 * x as f64;
                nb2 += y as f64 * y as f64;
            }
            let na = na2.sqrt();
            let nb = nb2.sqrt();
            if na < NORM_EPS || nb < NORM_EPS {
                return Err(TensorError::NormUnderflow {
                    row,
                    floor: NORM_EPS,
                });
            }
            out[row] = (dot / (na * nb)) as f32;
            norms.push((na, nb));
        }
        let value = Tensor::new(vec![b], out)?;
        let requires = self.requires(lhs) || self.requires(rhs);
        Ok(self.push(value, requires, Op::CosineSim { lhs, rhs, norms }))
    }

    /// Sum of all elements, as a scalar node.
    pub fn sum(&mut self, input: NodeId) -> Result<NodeId, TensorError> {
        self.check(input)?;
        let total = sum_f64(self.nodes[input.0].value.data()) as f32;
        let requires = self.requires(input);
        Ok(self.push(Tensor::scalar(total), requires, Op::Sum { input }))
    }

    /// Mean of all elements, as a scalar node.
    pub fn mean_all(&mut self, input: NodeId) -> Result<NodeId, TensorError> {
        let n = self.nodes[input.0].value.numel();
        let s = self.sum(input)?;
        self.scale(s, 1.0 / n as f32)
    }

    // ---- backward ----

    /// Reverse sweep from a scalar loss. Populates gradients on every leaf
    /// recorded with `requires_grad`, leaving exact zeros where no gradient
    /// flowed.
    pub fn backward(&mut self, loss: NodeId) -> Result<(), TensorError> {
        self.check(loss)?;
        if self.consumed {
            return Err(TensorError::TapeConsumed);
        }
        if self.nodes[loss.0].value.numel() != 1 {
            return Err(TensorError::NonScalarLoss(
                self.nodes[loss.0].value.shape().to_vec(),
            ));
        }
        self.consumed = true;

        for node in &mut self.nodes {
            if matches!(node.op, Op::Leaf) && node.requires_grad {
                node.grad = Some(vec![0.0; node.value.numel()]);
            }
        }
        self.accumulate(loss, vec![1.0]);

        for i in (0..=loss.0).rev() {
            if matches!(self.nodes[i].op, Op::Leaf) || self.nodes[i].grad.is_none() {
                continue;
            }
            let gout = self.nodes[i].grad.take().expect("checked above");
            let op = std::mem::replace(&mut self.nodes[i].op, Op::Spent);
            self.propagate(i, op, &gout);
        }
        Ok(())
    }

    fn accumulate(&mut self, id: NodeId, contribution: Vec<f32>) {
        let node = &mut self.nodes[id.0];
        if !node.requires_grad {
            return;
        }
        debug_assert_eq!(contribution.len(), node.value.numel());
        match &mut node.grad {
            Some(g) => {
                for (gv, cv) in g.iter_mut().zip(&contribution) {
                    *gv += cv;
                }
            }
            None => node.grad = Some(contribution),
        }
    }

    fn propagate(&mut self, node_idx: usize, op: Op, gout: &[f32]) {
        match op {
            Op::Leaf | Op::StopGrad | Op::Spent => {}
            Op::Conv2d {
                input,
                kernel,
                stride,
                padding,
            } => self.backward_conv2d(input, kernel, stride, padding, node_idx, gout),
            Op::Linear {
                input,
                weight,
                bias,
            } => self.backward_linear(input, weight, bias, gout),
            Op::BatchNorm {
                input,
                gamma,
                beta,
                spatial,
                mode,
                mean,
                invstd,
            } => self.backward_batch_norm(input, gamma, beta, spatial, mode, &mean, &invstd, gout),
            Op::Relu { input } => {
                if self.requires(input) {
                    let contrib: Vec<f32> = self.nodes[input.0]
                        .value
                        .data()
                        .iter()
                        .zip(gout)
                        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
                        .collect();
                    self.accumulate(input, contrib);
                }
            }
            Op::AvgPool { input, k, stride } => {
                if self.requires(input) {
                    let [b, c, h, w] = self.nodes[input.0].value.dims4("avg_pool").unwrap();
                    let h_out = (h - k) / stride + 1;
                    let w_out = (w - k) / stride + 1;
                    let inv = 1.0 / (k * k) as f32;
                    let mut dx = vec![0.0f32; b * c * h * w];
                    for bc in 0..b * c {
                        let src = &gout[bc * h_out * w_out..(bc + 1) * h_out * w_out];
                        let dst = &mut dx[bc * h * w..(bc + 1) * h * w];
                        for oi in 0..h_out {
                            for oj in 0..w_out {
                                let g = src[oi * w_out + oj] * inv;
                                for u in 0..k {
                                    let row = (oi * stride + u) * w + oj * stride;
                                    for v in 0..k {
                                        dst[row + v] += g;
                                    }
                                }
                            }
                        }
                    }
                    self.accumulate(input, dx);
                }
            }
            Op::MaxPool { input, argmax } => {
                if self.requires(input) {
                    let [b, c, h, w] = self.nodes[input.0].value.dims4("max_pool").unwrap();
                    let plane = h * w;
                    let out_plane = argmax.len() / (b * c);
                    let mut dx = vec![0.0f32; b * c * plane];
                    for bc in 0..b * c {
                        for o in 0..out_plane {
                            let idx = argmax[bc * out_plane + o] as usize;
                            dx[bc * plane + idx] += gout[bc * out_plane + o];
                        }
                    }
                    self.accumulate(input, dx);
                }
            }
            Op::GlobalAvgPool { input } => {
                if self.requires(input) {
                    let [b, c, h, w] = self.nodes[input.0]
                        .value
                        .dims4("global_average_pool")
                        .unwrap();
                    let spatial = h * w;
                    let inv = 1.0 / spatial as f32;
                    let mut dx = vec![0.0f32; b * c * spatial];
                    for bc in 0..b * c {
                        let g = gout[bc] * inv;
                        dx[bc * spatial..(bc + 1) * spatial]
                            .iter_mut()
                            .for_each(|v| *v = g);
                    }
                    self.accumulate(input, dx);
                }
            }
            Op::Add { lhs, rhs } => {
                if self.requires(lhs) {
                    self.accumulate(lhs, gout.to_vec());
                }
                if self.requires(rhs) {
                    self.accumulate(rhs, gout.to_vec());
                }
            }
            Op::Mul { lhs, rhs } => {
                if self.requires(lhs) {
                    let contrib: Vec<f32> = self.nodes[rhs.0]
                        .value
                        .data()
                        .iter()
                        .zip(gout)
                        .map(|(&y, &g)| y * g)
                        .collect();
                    self.accumulate(lhs, contrib);
                }
                if self.requires(rhs) {
                    let contrib: Vec<f32> = self.nodes[lhs.0]
                        .value
                        .data()
                        .iter()
                        .zip(gout)
                        .map(|(&x, &g)| x * g)
                        .collect();
                    self.accumulate(rhs, contrib);
                }
            }
            Op::Scale { input, factor } => {
                if self.requires(input) {
                    self.accumulate(input, gout.iter().map(|&g| g * factor).collect());
                }
            }
            Op::Reshape { input } => {
                if self.requires(input) {
                    self.accumulate(input, gout.to_vec());
                }
            }
            Op::CosineSim { lhs, rhs, norms } => {
                self.backward_cosine(lhs, rhs, &norms, node_idx, gout);
            }
            Op::Sum { input } => {
                if self.requires(input) {
                    let n = self.nodes[input.0].value.numel();
                    self.accumulate(input, vec![gout[0]; n]);
                }
            }
        }
    }

    fn backward_conv2d(
        &mut self,
        input: NodeId,
        kernel: NodeId,
        stride: usize,
        padding: usize,
        node_idx: usize,
        gout: &[f32],
    ) {
        let [b, c, h, w] = self.nodes[input.0].value.dims4("conv2d").unwrap();
        let [f, _, k, _] = self.nodes[kernel.0].value.dims4("conv2d").unwrap();
        let out_shape = self.nodes[node_idx].value.shape();
        let (h_out, w_out) = (out_shape[2], out_shape[3]);
        let positions = h_out * w_out;
        let ckk = c * k * k;
        let need_dx = self.requires(input);
        let need_dw = self.requires(kernel);

        let mut dx = if need_dx {
            Some(vec![0.0f32; b * c * h * w])
        } else {
            None
        };
        let mut dw = if need_dw {
            Some(vec![0.0f32; f * ckk])
        } else {
            None
        };
        let mut col = vec![0.0f32; positions * ckk];
        let mut dyt = vec![0.0f32; positions * f];
        let mut dcol = vec![0.0f32; positions * ckk];
        {
            let x = self.nodes[input.0].value.data();
            let w_data = self.nodes[kernel.0].value.data();
            for bi in 0..b {
                let dyb = &gout[bi * f * positions..(bi + 1) * f * positions];
                if need_dw {
                    im2col_t(
                        &mut col,
                        &x[bi * c * h * w..(bi + 1) * c * h * w],
                        c,
                        h,
                        w,
                        k,
                        stride,
                        padding,
                        h_out,
                        w_out,
                    );
                    matmul_acc(dw.as_mut().unwrap(), dyb, &col, f, positions, ckk);
                }
                if need_dx {
                    for fi in 0..f {
                        for pos in 0..positions {
                            dyt[pos * f + fi] = dyb[fi * positions + pos];
                        }
                    }
                    dcol.iter_mut().for_each(|v| *v = 0.0);
                    matmul_acc(&mut dcol, &dyt, w_data, positions, f, ckk);
                    col2im_t_acc(
                        &mut dx.as_mut().unwrap()[bi * c * h * w..(bi + 1) * c * h * w],
                        &dcol,
                        c,
                        h,
                        w,
                        k,
                        stride,
                        padding,
                        h_out,
                        w_out,
                    );
                }
            }
        }
        if let Some(dx) = dx {
            self.accumulate(input, dx);
        }
        if let Some(dw) = dw {
            self.accumulate(kernel, dw);
        }
    }

    fn backward_linear(&mut self, input: NodeId, weight: NodeId, bias: NodeId, gout: &[f32]) {
        let [b, n] = self.nodes[input.0].value.dims2("linear").unwrap();
        let [m, _] = self.nodes[weight.0].value.dims2("linear").unwrap();
        if self.requires(input) {
            let w = self.nodes[weight.0].value.data();
            let mut dx = vec![0.0f32; b * n];
            matmul_acc(&mut dx, gout, w, b, m, n);
            self.accumulate(input, dx);
        }
        if self.requires(weight) {
            let x = self.nodes[input.0].value.data();
            let mut dyt = vec![0.0f32; m * b];
            for bi in 0..b {
                for mi in 0..m {
                    dyt[mi * b + bi] = gout[bi * m + mi];
                }
            }
            let mut dw = vec![0.0f32; m * n];
            matmul_acc(&mut dw, &dyt, x, m, b, n);
            self.accumulate(weight, dw);
        }
        if self.requires(bias) {
            let mut db = vec![0.0f32; m];
            for bi in 0..b {
                for mi in 0..m {
                    db[mi] += gout[bi * m + mi];
                }
            }
            self.accumulate(bias, db);
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn backward_batch_norm(
        &mut self,
        input: NodeId,
        gamma: NodeId,
        beta: NodeId,
        spatial: usize,
        mode: BnMode,
        mean: &[f32],
        invstd: &[f32],
        gout: &[f32],
    ) {
        let shape = self.nodes[input.0].value.shape();
        let (b, c) = (shape[0], shape[1]);
        let n = (b * spatial) as f64;
        let x = self.nodes[input.0].value.data();
        let g = self.nodes[gamma.0].value.data();

        // Per-channel sums of dy and dy*xhat, f64 accumulation.
        let mut sum_dy = vec![0.0f64; c];
        let mut sum_dy_xhat = vec![0.0f64; c];
        for bi in 0..b {
            for ci in 0..c {
                let off = (bi * c + ci) * spatial;
                let (mu, inv) = (mean[ci] as f64, invstd[ci] as f64);
                let mut s1 = 0.0f64;
                let mut s2 = 0.0f64;
                for s in 0..spatial {
                    let dy = gout[off + s] as f64;
                    let xhat = (x[off + s] as f64 - mu) * inv;
                    s1 += dy;
                    s2 += dy * xhat;
                }
                sum_dy[ci] += s1;
                sum_dy_xhat[ci] += s2;
            }
        }

        if self.requires(input) {
            let mut dx = vec![0.0f32; x.len()];
            for bi in 0..b {
                for ci in 0..c {
                    let off = (bi * c + ci) * spatial;
                    let (mu, inv, gc) = (mean[ci] as f64, invstd[ci] as f64, g[ci] as f64);
                    match mode {
                        BnMode::Train => {
                            let k1 = sum_dy[ci] / n;
                            let k2 = sum_dy_xhat[ci] / n;
                            for s in 0..spatial {
                                let dy = gout[off + s] as f64;
                                let xhat = (x[off + s] as f64 - mu) * inv;
                                dx[off + s] = (gc * inv * (dy - k1 - xhat * k2)) as f32;
                            }
                        }
                        BnMode::Eval => {
                            for s in 0..spatial {
                                dx[off + s] = (gout[off + s] as f64 * gc * inv) as f32;
                            }
                        }
                    }
                }
            }
            self.accumulate(input, dx);
        }
        if self.requires(gamma) {
            self.accumulate(gamma, sum_dy_xhat.iter().map(|&v| v as f32).collect());
        }
        if self.requires(beta) {
            self.accumulate(beta, sum_dy.iter().map(|&v| v as f32).collect());
        }
    }

    fn backward_cosine(
        &mut self,
        lhs: NodeId,
        rhs: NodeId,
        norms: &[(f64, f64)],
        node_idx: usize,
        gout: &[f32],
    ) {
        let [b, d] = self.nodes[lhs.0].value.dims2("cosine_similarity").unwrap();
        let a = self.nodes[lhs.0].value.data();
        let bv = self.nodes[rhs.0].value.data();
        let s = self.nodes[node_idx].value.data();
        let need_a = self.requires(lhs);
        let need_b = self.requires(rhs);
        let mut da = if need_a { vec![0.0f32; b * d] } else { vec![] };
        let mut db = if need_b { vec![0.0f32; b * d] } else { vec![] };
        for row in 0..b {
            let (na, nb) = norms[row];
            let inv_ab = 1.0 / (na * nb);
            let sim = s[row] as f64;
            let g = gout[row] as f64;
            for j in 0..d {
                let av = a[row * d + j] as f64;
                let bvj = bv[row * d + j] as f64;
                if need_a {
                    da[row * d + j] = (g * (bvj * inv_ab - sim * av / (na * na))) as f32;
                }
                if need_b {
                    db[row * d + j] = (g * (av * inv_ab - sim * bvj / (nb * nb))) as f32;
                }
            }
        }
        if need_a {
            self.accumulate(lhs, da);
        }
        if need_b {
            self.accumulate(rhs, db);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(tape: &mut Tape, shape: &[usize], data: Vec<f32>) -> NodeId {
        tape.leaf(Tensor::new(shape.to_vec(), data).unwrap().with_grad())
    }

    #[test]
    fn conv_all_ones_sums_window() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[1, 1, 3, 3], vec![1.0; 9]);
        let w = leaf(&mut tape, &[1, 1, 3, 3], vec![1.0; 9]);
        let y = tape.conv2d(x, w, 1, 0).unwrap();
        assert_eq!(tape.value(y).shape(), &[1, 1, 1, 1]);
        assert_eq!(tape.value(y).data(), &[9.0]);
    }

    #[test]
    fn conv_identity_kernel_preserves_input() {
        let mut tape = Tape::new();
        let data: Vec<f32> = (0..16).map(|v| v as f32 * 0.25 - 2.0).collect();
        let x = leaf(&mut tape, &[1, 1, 4, 4], data.clone());
        let mut kdata = vec![0.0f32; 9];
        kdata[4] = 1.0;
        let w = leaf(&mut tape, &[1, 1, 3, 3], kdata);
        let y = tape.conv2d(x, w, 1, 1).unwrap();
        assert_eq!(tape.value(y).shape(), &[1, 1, 4, 4]);
        assert_eq!(tape.value(y).data(), data.as_slice());
    }

    #[test]
    fn conv_rejects_channel_mismatch() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[1, 2, 4, 4], vec![0.0; 32]);
        let w = leaf(&mut tape, &[1, 3, 3, 3], vec![0.0; 27]);
        let err = tape.conv2d(x, w, 1, 0).unwrap_err();
        assert!(matches!(err, TensorError::ShapeMismatch { op: "conv2d", .. }));
    }

    #[test]
    fn linear_identity_and_hand_sum() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[1, 2], vec![1.0, 2.0]);
        let w_id = leaf(&mut tape, &[2, 2], vec![1.0, 0.0, 0.0, 1.0]);
        let b0 = leaf(&mut tape, &[2], vec![0.0, 0.0]);
        let y = tape.linear(x, w_id, b0).unwrap();
        assert_eq!(tape.value(y).data(), &[1.0, 2.0]);

        let w = leaf(&mut tape, &[1, 2], vec![1.0, 1.0]);
        let b = leaf(&mut tape, &[1], vec![3.0]);
        let y = tape.linear(x, w, b).unwrap();
        assert_eq!(tape.value(y).data(), &[6.0]);
    }

    #[test]
    fn batch_norm_constant_input_zeros_out() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[2, 3, 2, 2], vec![5.0; 24]);
        let gamma = leaf(&mut tape, &[3], vec![1.0; 3]);
        let beta = leaf(&mut tape, &[3], vec![0.0; 3]);
        let mut state = BatchNormState::new(3, 0.1);
        let y = tape
            .batch_norm(x, gamma, beta, &mut state, BnMode::Train)
            .unwrap();
        assert!(tape.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn batch_norm_two_sample_already_normalized() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[2, 1], vec![-1.0, 1.0]);
        let gamma = leaf(&mut tape, &[1], vec![1.0]);
        let beta = leaf(&mut tape, &[1], vec![0.0]);
        let mut state = BatchNormState::new(1, 0.1);
        let y = tape
            .batch_norm(x, gamma, beta, &mut state, BnMode::Train)
            .unwrap();
        let out = tape.value(y).data();
        assert!((out[0] + 1.0).abs() < 1e-4, "got {out:?}");
        assert!((out[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn batch_norm_rejects_singleton_batch_in_train() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[1, 2], vec![0.5, 0.5]);
        let gamma = leaf(&mut tape, &[2], vec![1.0; 2]);
        let beta = leaf(&mut tape, &[2], vec![0.0; 2]);
        let mut state = BatchNormState::new(2, 0.1);
        let err = tape
            .batch_norm(x, gamma, beta, &mut state, BnMode::Train)
            .unwrap_err();
        assert!(matches!(err, TensorError::BatchTooSmall(1)));
    }

    #[test]
    fn cosine_hand_values() {
        let mut tape = Tape::new();
        let a = leaf(&mut tape, &[3, 2], vec![3.0, 4.0, 1.0, 0.0, 1.0, 1.0]);
        let b = leaf(&mut tape, &[3, 2], vec![3.0, 4.0, 0.0, 1.0, 1.0, 0.0]);
        let s = tape.cosine_similarity(a, b).unwrap();
        let out = tape.value(s).data();
        assert!((out[0] - 1.0).abs() < 1e-6);
        assert!(out[1].abs() < 1e-6);
        assert!((out[2] - 0.70710678).abs() < 1e-6);
    }

    #[test]
    fn cosine_rejects_zero_norm() {
        let mut tape = Tape::new();
        let a = leaf(&mut tape, &[1, 2], vec![0.0, 0.0]);
        let b = leaf(&mut tape, &[1, 2], vec![1.0, 0.0]);
        let err = tape.cosine_similarity(a, b).unwrap_err();
        assert!(matches!(err, TensorError::NormUnderflow { row: 0, .. }));
    }

    #[test]
    fn backward_sum_gives_ones() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[2, 3], vec![0.5; 6]);
        let loss = tape.sum(x).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[1.0; 6]);
    }

    #[test]
    fn backward_square_matches_analytic() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[3], vec![1.0, 2.0, 3.0]);
        let sq = tape.mul(x, x).unwrap();
        let loss = tape.sum(sq).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[2], vec![1.0, 2.0]);
        let err = tape.backward(x).unwrap_err();
        assert!(matches!(err, TensorError::NonScalarLoss(_)));
    }

    #[test]
    fn backward_twice_is_rejected() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[1], vec![2.0]);
        let loss = tape.sum(x).unwrap();
        tape.backward(loss).unwrap();
        assert!(matches!(
            tape.backward(loss).unwrap_err(),
            TensorError::TapeConsumed
        ));
    }

    #[test]
    fn stop_gradient_forward_identity_backward_zero() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[3], vec![1.5, -2.0, 0.25]);
        let sg = tape.stop_gradient(x).unwrap();
        assert_eq!(tape.value(sg).data(), tape.value(x).data());
        let loss = tape.sum(sg).unwrap();
        tape.backward(loss).unwrap();
        // Bitwise zero, not approximately zero.
        assert_eq!(tape.grad(x).unwrap(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn stop_gradient_one_sided_product() {
        // loss = sum(stop_gradient(x) * x) => d/dx = value of x, not 2x.
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[3], vec![1.0, -2.0, 3.0]);
        let sg = tape.stop_gradient(x).unwrap();
        let prod = tape.mul(sg, x).unwrap();
        let loss = tape.sum(prod).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[1.0, -2.0, 3.0]);
    }

    #[test]
    fn relu_and_pool_shapes() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[1, 1, 4, 4], (0..16).map(|v| v as f32 - 8.0).collect());
        let r = tape.relu(x).unwrap();
        assert!(tape.value(r).data().iter().all(|&v| v >= 0.0));
        let p = tape.avg_pool(r, 2, 2).unwrap();
        assert_eq!(tape.value(p).shape(), &[1, 1, 2, 2]);
        let m = tape.max_pool(r, 2, 2).unwrap();
        assert_eq!(tape.value(m).shape(), &[1, 1, 2, 2]);
        let g = tape.global_avg_pool(r).unwrap();
        assert_eq!(tape.value(g).shape(), &[1, 1]);
    }

    #[test]
    fn max_pool_backward_routes_to_argmax() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[1, 1, 2, 2], vec![1.0, 5.0, 3.0, 2.0]);
        let m = tape.max_pool(x, 2, 2).unwrap();
        let loss = tape.sum(m).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn grad_on_untracked_node_errors() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::full(&[2], 1.0));
        let loss = tape.sum(x).unwrap();
        tape.backward(loss).unwrap();
        assert!(matches!(
            tape.grad(x).unwrap_err(),
            TensorError::NoGradient(_)
        ));
    }
}
