//! Video classifiers: the MiniC3D stand-in used as teacher and default
//! student, plus two frame-wise 2-D students for cross-architecture checks.
//!
//! Parameters are plain vectors owned by [`Model`]; each forward pass binds
//! them to fresh autodiff leaves through [`Bound`], so a model can be shared
//! read-only while any number of independent graphs are built against it.

mod alt;
pub mod checkpoint;
mod minic3d;

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use minic3d::MiniC3DConfig;
pub use alt::AltConfig;

pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;

/// Shape contract shared by every architecture: inputs are
/// `[batch, frames, channels, height, width]`, outputs `[batch, classes]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputSpec {
    pub frames: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub classes: usize,
}

impl InputSpec {
    pub fn video_shape(&self) -> [usize; 4] {
        [self.frames, self.channels, self.height, self.width]
    }

    pub fn video_len(&self) -> usize {
        self.video_shape().iter().product()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics; running statistics are updated on commit.
    Train,
    /// Running statistics.
    Eval,
    /// Batch statistics recorded per BN layer; running statistics untouched.
    Capture,
}

/// Architecture kinds accepted on the command line and in reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchKind {
    #[serde(rename = "minic3d")]
    MiniC3D,
    Conv2dTemporalPool,
    Conv2dGru,
}

impl ArchKind {
    pub const ALL: [ArchKind; 3] = [ArchKind::MiniC3D, ArchKind::Conv2dTemporalPool, ArchKind::Conv2dGru];

    pub fn name(&self) -> &'static str {
        match self {
            ArchKind::MiniC3D => "minic3d",
            ArchKind::Conv2dTemporalPool => "conv2d_temporal_pool",
            ArchKind::Conv2dGru => "conv2d_gru",
        }
    }
}

impl std::str::FromStr for ArchKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ArchKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown architecture kind {s:?} (expected minic3d, conv2d_temporal_pool or conv2d_gru)")))
    }
}

impl std::fmt::Display for ArchKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Architecture {
    #[serde(rename = "minic3d")]
    MiniC3D(MiniC3DConfig),
    Conv2dTemporalPool(AltConfig),
    Conv2dGru(AltConfig),
}

impl Architecture {
    pub fn kind(&self) -> ArchKind {
        match self {
            Architecture::MiniC3D(_) => ArchKind::MiniC3D,
            Architecture::Conv2dTemporalPool(_) => ArchKind::Conv2dTemporalPool,
            Architecture::Conv2dGru(_) => ArchKind::Conv2dGru,
        }
    }

    pub fn input(&self) -> InputSpec {
        match self {
            Architecture::MiniC3D(c) => c.input,
            Architecture::Conv2dTemporalPool(c) | Architecture::Conv2dGru(c) => c.input,
        }
    }

    /// Architecture of the given kind with stage widths `widths`. The
    /// frame-wise variants use the first two widths for their 2D stages and
    /// the last as the pooled or recurrent feature size.
    pub fn with_widths(kind: ArchKind, input: InputSpec, widths: &[usize]) -> Result<Architecture> {
        if widths.is_empty() || widths.contains(&0) {
            return Err(Error::Config(format!("invalid stage widths {widths:?}")));
        }
        let alt = || AltConfig { input, widths: widths[..widths.len().min(2)].to_vec(), hidden: widths[widths.len() - 1] };
        Ok(match kind {
            ArchKind::MiniC3D => Architecture::MiniC3D(MiniC3DConfig::with_widths(input, widths.to_vec())),
            ArchKind::Conv2dTemporalPool => Architecture::Conv2dTemporalPool(alt()),
            ArchKind::Conv2dGru => Architecture::Conv2dGru(alt()),
        })
    }

    /// Default-sized architecture of the given kind for `input`.
    pub fn standard(kind: ArchKind, input: InputSpec) -> Architecture {
        match kind {
            ArchKind::MiniC3D => Architecture::MiniC3D(MiniC3DConfig::standard(input)),
            ArchKind::Conv2dTemporalPool => Architecture::Conv2dTemporalPool(AltConfig::standard(input)),
            ArchKind::Conv2dGru => Architecture::Conv2dGru(AltConfig::standard(input)),
        }
    }
}

/// A named learnable array.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
}

/// Running statistics of one batch-norm layer. The learnable scale and shift
/// are the `<name>.gamma` / `<name>.beta` entries of the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct BnState {
    pub name: String,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
}

impl BnState {
    fn new(name: &str, channels: usize) -> Self {
        BnState {
            name: name.to_string(),
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            momentum: BN_MOMENTUM,
            eps: BN_EPS,
        }
    }

    pub fn channels(&self) -> usize {
        self.running_mean.len()
    }

    /// `R <- (1 - m) R + m * batch` for both statistics.
    pub fn update(&mut self, mean: &[f64], var: &[f64]) {
        let m = self.momentum;
        for (r, b) in self.running_mean.iter_mut().zip(mean) {
            *r = (1.0 - m) * *r + m * b;
        }
        for (r, b) in self.running_var.iter_mut().zip(var) {
            *r = (1.0 - m) * *r + m * b;
        }
    }
}

/// Batch mean and biased variance of one BN layer's input, as graph values.
#[derive(Debug, Clone)]
pub struct LayerStats {
    pub mean: Tensor,
    pub var: Tensor,
}

pub struct Forward {
    pub logits: Tensor,
    /// One entry per BN layer, in layer order; empty in eval mode.
    pub stats: Vec<LayerStats>,
}

/// Model parameters bound to autodiff leaves for one graph.
pub struct Bound {
    tensors: Vec<Tensor>,
}

impl Bound {
    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    /// Gradients in parameter order; zeros where backward did not reach.
    pub fn grads(&self) -> Vec<Vec<f64>> {
        self.tensors.iter().map(|t| t.grad().unwrap_or_else(|| vec![0.0; t.len()])).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    arch: Architecture,
    params: Vec<Param>,
    bn: Vec<BnState>,
    index: HashMap<String, usize>,
}

/// Collects parameters and BN layers during construction.
pub(crate) struct Builder {
    rng: ChaCha8Rng,
    params: Vec<Param>,
    bn: Vec<BnState>,
}

impl Builder {
    fn new(seed: u64) -> Self {
        Builder { rng: ChaCha8Rng::seed_from_u64(seed), params: Vec::new(), bn: Vec::new() }
    }

    /// He-normal initialization with the given fan-in.
    pub(crate) fn kaiming(&mut self, name: &str, shape: Vec<usize>, fan_in: usize) {
        let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
        let n = shape.iter().product();
        let value = (0..n).map(|_| normal.sample(&mut self.rng)).collect();
        self.params.push(Param { name: name.to_string(), shape, value });
    }

    pub(crate) fn constant(&mut self, name: &str, shape: Vec<usize>, v: f64) {
        let n = shape.iter().product();
        self.params.push(Param { name: name.to_string(), shape, value: vec![v; n] });
    }

    pub(crate) fn linear(&mut self, name: &str, inputs: usize, outputs: usize) {
        self.kaiming(&format!("{name}.weight"), vec![outputs, inputs], inputs);
        self.constant(&format!("{name}.bias"), vec![outputs], 0.0);
    }

    pub(crate) fn batch_norm(&mut self, name: &str, channels: usize) {
        self.constant(&format!("{name}.gamma"), vec![channels], 1.0);
        self.constant(&format!("{name}.beta"), vec![channels], 0.0);
        self.bn.push(BnState::new(name, channels));
    }
}

/// Per-forward state: bound parameters and recorded BN statistics.
pub(crate) struct Ctx<'a> {
    model: &'a Model,
    bound: &'a Bound,
    mode: Mode,
    bn_cursor: usize,
    stats: Vec<LayerStats>,
}

impl Ctx<'_> {
    pub(crate) fn p(&self, name: &str) -> &Tensor {
        let i = self.model.index[name];
        &self.bound.tensors[i]
    }

    pub(crate) fn linear(&self, name: &str, x: &Tensor) -> Result<Tensor> {
        x.linear(self.p(&format!("{name}.weight")), self.p(&format!("{name}.bias")))
    }

    /// Batch normalization over every axis but the channel axis 1.
    pub(crate) fn batch_norm(&mut self, name: &str, x: &Tensor) -> Result<Tensor> {
        let state = &self.model.bn[self.bn_cursor];
        debug_assert_eq!(state.name, name);
        self.bn_cursor += 1;
        let (gamma, beta) = (self.p(&format!("{name}.gamma")), self.p(&format!("{name}.beta")));
        match self.mode {
            Mode::Eval => {
                let mean = Tensor::new(vec![state.channels()], state.running_mean.clone())?;
                let var = Tensor::new(vec![state.channels()], state.running_var.clone())?;
                x.channel_norm(&mean, &var, gamma, beta, state.eps)
            }
            Mode::Train | Mode::Capture => {
                let mean = x.channel_mean()?;
                let var = x.channel_var()?;
                let y = x.channel_norm(&mean, &var, gamma, beta, state.eps)?;
                self.stats.push(LayerStats { mean, var });
                Ok(y)
            }
        }
    }
}

impl Model {
    /// Freshly initialized model: He-normal weights, zero biases, unit BN
    /// scale, and running statistics RM = 0, RV = 1.
    pub fn new(arch: Architecture, seed: u64) -> Result<Model> {
        let mut b = Builder::new(seed);
        match &arch {
            Architecture::MiniC3D(c) => c.build(&mut b)?,
            Architecture::Conv2dTemporalPool(c) => c.build(&mut b, false)?,
            Architecture::Conv2dGru(c) => c.build(&mut b, true)?,
        }
        Ok(Model::from_parts(arch, b.params, b.bn))
    }

    /// Student-only frame-wise architectures.
    pub fn build_alt_architecture(kind: ArchKind, input: InputSpec, seed: u64) -> Result<Model> {
        match kind {
            ArchKind::MiniC3D => Err(Error::Config("minic3d is not an alternative architecture".into())),
            k => Model::new(Architecture::standard(k, input), seed),
        }
    }

    pub(crate) fn from_parts(arch: Architecture, params: Vec<Param>, bn: Vec<BnState>) -> Model {
        let index = params.iter().enumerate().map(|(i, p)| (p.name.clone(), i)).collect();
        Model { arch, params, bn, index }
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn input(&self) -> InputSpec {
        self.arch.input()
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Param> {
        self.index.get(name).map(|&i| &self.params[i])
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.index.get(name).map(|&i| &mut self.params[i])
    }

    pub fn bn_layers(&self) -> &[BnState] {
        &self.bn
    }

    pub fn bn_layers_mut(&mut self) -> &mut [BnState] {
        &mut self.bn
    }

    pub fn bind(&self, requires_grad: bool) -> Bound {
        let tensors = self
            .params
            .iter()
            .map(|p| {
                if requires_grad {
                    Tensor::param(p.shape.clone(), p.value.clone())
                } else {
                    Tensor::new(p.shape.clone(), p.value.clone())
                }
                .expect("parameter shape is consistent")
            })
            .collect();
        Bound { tensors }
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let spec = self.input();
        let s = x.shape();
        let temporal = matches!(self.arch, Architecture::MiniC3D(_));
        let ok = s.len() == 5
            && (!temporal || s[1] == spec.frames)
            && s[1] >= 1
            && s[2] == spec.channels
            && s[3] == spec.height
            && s[4] == spec.width;
        if !ok {
            let frames = if temporal { spec.frames.to_string() } else { "T".to_string() };
            return Err(Error::shape(
                "forward",
                format!(
                    "input {s:?} does not match [B, {frames}, {}, {}, {}] for {}",
                    spec.channels,
                    spec.height,
                    spec.width,
                    self.arch.kind()
                ),
            ));
        }
        Ok(())
    }

    /// Builds the forward graph for `x: [B, T, C, H, W]`. Train mode does not
    /// touch running statistics by itself; see [`Model::commit_running_stats`]
    /// or [`Model::forward_train`].
    pub fn forward(&self, bound: &Bound, x: &Tensor, mode: Mode) -> Result<Forward> {
        self.check_input(x)?;
        if x.shape()[0] == 0 && mode != Mode::Eval {
            return Err(Error::shape("forward", "batch statistics need a non-empty batch"));
        }
        let mut ctx = Ctx { model: self, bound, mode, bn_cursor: 0, stats: Vec::new() };
        let logits = match &self.arch {
            Architecture::MiniC3D(c) => c.forward(&mut ctx, x)?,
            Architecture::Conv2dTemporalPool(c) => c.forward(&mut ctx, x, false)?,
            Architecture::Conv2dGru(c) => c.forward(&mut ctx, x, true)?,
        };
        debug_assert!(mode == Mode::Eval || ctx.stats.len() == self.bn.len());
        Ok(Forward { logits, stats: ctx.stats })
    }

    pub fn commit_running_stats(&mut self, fwd: &Forward) {
        for (state, s) in self.bn.iter_mut().zip(&fwd.stats) {
            state.update(s.mean.data(), s.var.data());
        }
    }

    /// Train-mode forward that also folds the batch statistics into the
    /// running statistics.
    pub fn forward_train(&mut self, bound: &Bound, x: &Tensor) -> Result<Forward> {
        let fwd = self.forward(bound, x, Mode::Train)?;
        self.commit_running_stats(&fwd);
        Ok(fwd)
    }

    /// Eval-mode logits for a batch, without recording a graph.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        let bound = self.bind(false);
        Ok(self.forward(&bound, x, Mode::Eval)?.logits)
    }

    pub fn num_params(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }
}
