//! The style encoder (residual backbone + projection head) and the
//! bottleneck predictor, with named parameters and checkpoint round-trips.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Container;
use crate::error::{CheckpointError, TensorError, TrainError};
use crate::tensor::{BatchNormState, BnMode, NodeId, Tape, Tensor};

/// Backbone and projection-head shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    /// Residual stages as (channels, blocks); the first stage keeps the stem
    /// resolution, later stages halve it.
    pub stages: Vec<(usize, usize)>,
    /// Output embedding dimension D (projection head width).
    pub embedding_dim: usize,
    pub input_h: usize,
    pub input_w: usize,
    /// Average-pool factor applied right after the stem conv (1, 2 or 4).
    pub stem_pool: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            stages: vec![(16, 2), (32, 2), (64, 2), (128, 2)],
            embedding_dim: 128,
            input_h: 64,
            input_w: 64,
            stem_pool: 4,
        }
    }
}

/// Bottleneck predictor shape; output dimension always equals D.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorConfig {
    pub hidden_dim: usize,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self { hidden_dim: 64 }
    }
}

/// Momentum used by every normalization layer's running statistics.
pub const BN_MOMENTUM: f32 = 0.1;

#[derive(Debug, Clone, Copy)]
struct ConvLayer {
    weight: usize,
    stride: usize,
    padding: usize,
}

#[derive(Debug, Clone, Copy)]
struct BnLayer {
    gamma: usize,
    beta: usize,
    state: usize,
}

#[derive(Debug, Clone, Copy)]
struct LinearLayer {
    weight: usize,
    bias: usize,
}

#[derive(Debug, Clone)]
struct Block {
    conv1: ConvLayer,
    bn1: BnLayer,
    conv2: ConvLayer,
    bn2: BnLayer,
    shortcut: Option<(ConvLayer, BnLayer)>,
}

#[derive(Debug, Clone)]
struct ProjStage {
    linear: LinearLayer,
    bn: BnLayer,
    relu: bool,
}

/// Encoder + predictor parameters plus normalization state.
#[derive(Debug, Clone)]
pub struct StyleModel {
    pub encoder_cfg: EncoderConfig,
    pub predictor_cfg: PredictorConfig,
    names: Vec<String>,
    params: Vec<Tensor>,
    bn_states: Vec<BatchNormState>,
    bn_names: Vec<String>,
    stem_conv: ConvLayer,
    stem_bn: BnLayer,
    blocks: Vec<Block>,
    projector: Vec<ProjStage>,
    pred_lin1: LinearLayer,
    pred_bn1: BnLayer,
    pred_lin2: LinearLayer,
}

struct Builder {
    names: Vec<String>,
    params: Vec<Tensor>,
    bn_states: Vec<BatchNormState>,
    bn_names: Vec<String>,
    rng: ChaCha8Rng,
}

impl Builder {
    fn gauss(&mut self) -> f64 {
        let u1: f64 = self.rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = self.rng.gen_range(0.0..1.0);
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    fn param(&mut self, name: String, shape: Vec<usize>, std: f64) -> usize {
        let n: usize = shape.iter().product();
        let data: Vec<f32> = (0..n).map(|_| (self.gauss() * std) as f32).collect();
        self.names.push(name);
        self.params
            .push(Tensor::new(shape, data).expect("shape/data agree").with_grad());
        self.params.len() - 1
    }

    fn const_param(&mut self, name: String, shape: Vec<usize>, value: f32) -> usize {
        let n: usize = shape.iter().product();
        self.names.push(name);
        self.params.push(
            Tensor::new(shape, vec![value; n])
                .expect("shape/data agree")
                .with_grad(),
        );
        self.params.len() - 1
    }

    fn conv(&mut self, name: &str, c_out: usize, c_in: usize, k: usize, stride: usize) -> ConvLayer {
        // He initialization over the fan-in.
        let std = (2.0 / (c_in * k * k) as f64).sqrt();
        let weight = self.param(format!("{name}.weight"), vec![c_out, c_in, k, k], std);
        ConvLayer {
            weight,
            stride,
            padding: k / 2,
        }
    }

    fn bn(&mut self, name: &str, channels: usize) -> BnLayer {
        let gamma = self.const_param(format!("{name}.gamma"), vec![channels], 1.0);
        let beta = self.const_param(format!("{name}.beta"), vec![channels], 0.0);
        self.bn_states.push(BatchNormState::new(channels, BN_MOMENTUM));
        self.bn_names.push(name.to_string());
        BnLayer {
            gamma,
            beta,
            state: self.bn_states.len() - 1,
        }
    }

    fn linear(&mut self, name: &str, out_dim: usize, in_dim: usize) -> LinearLayer {
        let std = (2.0 / in_dim as f64).sqrt();
        let weight = self.param(format!("{name}.weight"), vec![out_dim, in_dim], std);
        let bias = self.const_param(format!("{name}.bias"), vec![out_dim], 0.0);
        LinearLayer { weight, bias }
    }
}

impl StyleModel {
    /// Fresh model with He-initialized weights, deterministic in `seed`.
    pub fn new(encoder_cfg: EncoderConfig, predictor_cfg: PredictorConfig, seed: u64) -> Self {
        assert!(encoder_cfg.embedding_dim >= 8, "embedding dim must be >= 8");
        assert!(
            !encoder_cfg.stages.is_empty(),
            "encoder needs at least one stage"
        );
        assert!(
            predictor_cfg.hidden_dim < encoder_cfg.embedding_dim,
            "predictor must be a bottleneck"
        );
        let mut b = Builder {
            names: Vec::new(),
            params: Vec::new(),
            bn_states: Vec::new(),
            bn_names: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        };

        let c0 = encoder_cfg.stages[0].0;
        let stem_conv = b.conv("encoder.stem.conv", c0, 1, 3, 1);
        let stem_bn = b.bn("encoder.stem.bn", c0);

        let mut blocks = Vec::new();
        let mut c_in = c0;
        for (si, &(channels, count)) in encoder_cfg.stages.iter().enumerate() {
            for bi in 0..count {
                let stride = if si > 0 && bi == 0 { 2 } else { 1 };
                let prefix = format!("encoder.stage{si}.block{bi}");
                let conv1 = b.conv(&format!("{prefix}.conv1"), channels, c_in, 3, stride);
                let bn1 = b.bn(&format!("{prefix}.bn1"), channels);
                let conv2 = b.conv(&format!("{prefix}.conv2"), channels, channels, 3, 1);
                let bn2 = b.bn(&format!("{prefix}.bn2"), channels);
                let shortcut = if stride != 1 || c_in != channels {
                    let sc = b.conv(&format!("{prefix}.shortcut.conv"), channels, c_in, 1, stride);
                    let sbn = b.bn(&format!("{prefix}.shortcut.bn"), channels);
                    Some((sc, sbn))
                } else {
                    None
                };
                blocks.push(Block {
                    conv1,
                    bn1,
                    conv2,
                    bn2,
                    shortcut,
                });
                c_in = channels;
            }
        }

        let d = encoder_cfg.embedding_dim;
        let mut projector = Vec::new();
        let dims = [c_in, d, d, d];
        for li in 0..3 {
            let linear = b.linear(&format!("encoder.proj{li}.linear"), dims[li + 1], dims[li]);
            let bn = b.bn(&format!("encoder.proj{li}.bn"), dims[li + 1]);
            projector.push(ProjStage {
                linear,
                bn,
                relu: li < 2,
            });
        }

        let hidden = predictor_cfg.hidden_dim;
        let pred_lin1 = b.linear("predictor.lin1", hidden, d);
        let pred_bn1 = b.bn("predictor.bn1", hidden);
        let pred_lin2 = b.linear("predictor.lin2", d, hidden);

        Self {
            encoder_cfg,
            predictor_cfg,
            names: b.names,
            params: b.params,
            bn_states: b.bn_states,
            bn_names: b.bn_names,
            stem_conv,
            stem_bn,
            blocks,
            projector,
            pred_lin1,
            pred_bn1,
            pred_lin2,
        }
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.numel()).sum()
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn param_names(&self) -> &[String] {
        &self.names
    }

    /// Register every parameter as a tape leaf, in registry order.
    pub fn leaves(&self, tape: &mut Tape) -> Vec<NodeId> {
        self.params.iter().map(|p| tape.leaf(p.clone())).collect()
    }

    fn apply_conv(
        &self,
        tape: &mut Tape,
        nodes: &[NodeId],
        layer: ConvLayer,
        x: NodeId,
    ) -> Result<NodeId, TensorError> {
        tape.conv2d(x, nodes[layer.weight], layer.stride, layer.padding)
    }

    fn apply_bn(
        &mut self,
        tape: &mut Tape,
        nodes: &[NodeId],
        layer: BnLayer,
        x: NodeId,
        mode: BnMode,
    ) -> Result<NodeId, TensorError> {
        let state = &mut self.bn_states[layer.state];
        tape.batch_norm(x, nodes[layer.gamma], nodes[layer.beta], state, mode)
    }

    fn apply_linear(
        &self,
        tape: &mut Tape,
        nodes: &[NodeId],
        layer: LinearLayer,
        x: NodeId,
    ) -> Result<NodeId, TensorError> {
        tape.linear(x, nodes[layer.weight], nodes[layer.bias])
    }

    /// Backbone forward up to the pooled features: [B,1,H,W] -> [B,C_last].
    pub fn backbone_on_tape(
        &mut self,
        tape: &mut Tape,
        nodes: &[NodeId],
        input: NodeId,
        mode: BnMode,
    ) -> Result<NodeId, TensorError> {
        let mut x = self.apply_conv(tape, nodes, self.stem_conv, input)?;
        x = self.apply_bn(tape, nodes, self.stem_bn, x, mode)?;
        x = tape.relu(x)?;
        let pool = self.encoder_cfg.stem_pool;
        if pool > 1 {
            x = tape.avg_pool(x, pool, pool)?;
        }

        for block in self.blocks.clone() {
            let identity = x;
            let mut y = self.apply_conv(tape, nodes, block.conv1, x)?;
            y = self.apply_bn(tape, nodes, block.bn1, y, mode)?;
            y = tape.relu(y)?;
            y = self.apply_conv(tape, nodes, block.conv2, y)?;
            y = self.apply_bn(tape, nodes, block.bn2, y, mode)?;
            let skip = match block.shortcut {
                Some((sc, sbn)) => {
                    let s = self.apply_conv(tape, nodes, sc, identity)?;
                    self.apply_bn(tape, nodes, sbn, s, mode)?
                }
                None => identity,
            };
            y = tape.add(y, skip)?;
            x = tape.relu(y)?;
        }
        tape.global_avg_pool(x)
    }

    /// Projection head: pooled features [B,C_last] -> embedding [B,D].
    pub fn project_on_tape(
        &mut self,
        tape: &mut Tape,
        nodes: &[NodeId],
        features: NodeId,
        mode: BnMode,
    ) -> Result<NodeId, TensorError> {
        let mut z = features;
        for stage in self.projector.clone() {
            z = self.apply_linear(tape, nodes, stage.linear, z)?;
            z = self.apply_bn(tape, nodes, stage.bn, z, mode)?;
            if stage.relu {
                z = tape.relu(z)?;
            }
        }
        Ok(z)
    }

    /// Encoder forward: [B,1,H,W] -> embedding [B,D].
    pub fn encode_on_tape(
        &mut self,
        tape: &mut Tape,
        nodes: &[NodeId],
        input: NodeId,
        mode: BnMode,
    ) -> Result<NodeId, TensorError> {
        let features = self.backbone_on_tape(tape, nodes, input, mode)?;
        self.project_on_tape(tape, nodes, features, mode)
    }

    /// Predictor forward: [B,D] -> [B,D].
    pub fn predict_on_tape(
        &mut self,
        tape: &mut Tape,
        nodes: &[NodeId],
        z: NodeId,
        mode: BnMode,
    ) -> Result<NodeId, TensorError> {
        let mut p = self.apply_linear(tape, nodes, self.pred_lin1, z)?;
        p = self.apply_bn(tape, nodes, self.pred_bn1, p, mode)?;
        p = tape.relu(p)?;
        self.apply_linear(tape, nodes, self.pred_lin2, p)
    }

    /// Copy gradients from tape leaves back onto the parameter tensors.
    pub fn collect_grads(
        &mut self,
        tape: &Tape,
        nodes: &[NodeId],
    ) -> Result<(), TensorError> {
        for (param, &node) in self.params.iter_mut().zip(nodes) {
            let g = tape.grad(node)?;
            param.grad = Some(g.to_vec());
        }
        Ok(())
    }

    /// Validate an input batch's spatial extents against the config.
    pub fn check_input(&self, h: usize, w: usize) -> Result<(), TrainError> {
        if h != self.encoder_cfg.input_h || w != self.encoder_cfg.input_w {
            return Err(TrainError::InputSizeMismatch {
                got_h: h,
                got_w: w,
                want_h: self.encoder_cfg.input_h,
                want_w: self.encoder_cfg.input_w,
            });
        }
        Ok(())
    }

    // ---- checkpoint round-trip ----

    /// Serialize weights, running statistics, and shape metadata.
    pub fn to_container(&self, epoch: usize, seed: u64) -> Container {
        let mut c = Container::new();
        let cfg = &self.encoder_cfg;
        let meta = |v: f32| Tensor::scalar(v);
        c.insert("meta.schema", meta(1.0));
        c.insert("meta.input_h", meta(cfg.input_h as f32));
        c.insert("meta.input_w", meta(cfg.input_w as f32));
        c.insert("meta.stem_pool", meta(cfg.stem_pool as f32));
        c.insert("meta.embedding_dim", meta(cfg.embedding_dim as f32));
        c.insert(
            "meta.predictor_hidden",
            meta(self.predictor_cfg.hidden_dim as f32),
        );
        c.insert("meta.epoch", meta(epoch as f32));
        c.insert("meta.seed", meta(seed as f32));
        let stage_desc: Vec<f32> = cfg
            .stages
            .iter()
            .flat_map(|&(ch, bl)| [ch as f32, bl as f32])
            .collect();
        c.insert(
            "meta.stages",
            Tensor::new(vec![stage_desc.len()], stage_desc).expect("stage metadata"),
        );
        for (name, param) in self.names.iter().zip(&self.params) {
            let mut stored = param.clone();
            stored.requires_grad = false;
            stored.grad = None;
            c.insert(name.clone(), stored);
        }
        for (name, state) in self.bn_names.iter().zip(&self.bn_states) {
            c.insert(
                format!("{name}.running_mean"),
                Tensor::new(vec![state.channels()], state.running_mean.clone())
                    .expect("running mean"),
            );
            c.insert(
                format!("{name}.running_var"),
                Tensor::new(vec![state.channels()], state.running_var.clone())
                    .expect("running var"),
            );
        }
        c
    }

    /// Rebuild a model from a checkpoint container.
    pub fn from_container(c: &Container) -> Result<Self, CheckpointError> {
        let stages_raw = c.require("meta.stages")?;
        if stages_raw.numel() % 2 != 0 {
            return Err(CheckpointError::EntryShape {
                name: "meta.stages".into(),
                got: stages_raw.shape().to_vec(),
                want: vec![stages_raw.numel() / 2 * 2],
            });
        }
        let stages: Vec<(usize, usize)> = stages_raw
            .data()
            .chunks(2)
            .map(|p| (p[0] as usize, p[1] as usize))
            .collect();
        let encoder_cfg = EncoderConfig {
            stages,
            embedding_dim: c.require_scalar("meta.embedding_dim")? as usize,
            input_h: c.require_scalar("meta.input_h")? as usize,
            input_w: c.require_scalar("meta.input_w")? as usize,
            stem_pool: c.require_scalar("meta.stem_pool")? as usize,
        };
        let predictor_cfg = PredictorConfig {
            hidden_dim: c.require_scalar("meta.predictor_hidden")? as usize,
        };
        let mut model = Self::new(encoder_cfg, predictor_cfg, 0);
        for (name, param) in model.names.iter().zip(model.params.iter_mut()) {
            let stored = c.require(name)?;
            if stored.shape() != param.shape() {
                return Err(CheckpointError::EntryShape {
                    name: name.clone(),
                    got: stored.shape().to_vec(),
                    want: param.shape().to_vec(),
                });
            }
            param.data_mut().copy_from_slice(stored.data());
        }
        for (name, state) in model.bn_names.iter().zip(model.bn_states.iter_mut()) {
            let rm = c.require(&format!("{name}.running_mean"))?;
            let rv = c.require(&format!("{name}.running_var"))?;
            if rm.numel() != state.channels() || rv.numel() != state.channels() {
                return Err(CheckpointError::EntryShape {
                    name: format!("{name}.running_mean"),
                    got: rm.shape().to_vec(),
                    want: vec![state.channels()],
                });
            }
            state.running_mean.copy_from_slice(rm.data());
            state.running_var.copy_from_slice(rv.data());
        }
        Ok(model)
    }

    /// Epoch recorded in a checkpoint container.
    pub fn container_epoch(c: &Container) -> Result<usize, CheckpointError> {
        Ok(c.require_scalar("meta.epoch")? as usize)
    }
}
