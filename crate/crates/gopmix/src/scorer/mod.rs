//! Word pronunciation scorer: per-stream input transforms with phone
//! embeddings feeding 1-D conv towers (conv → batch-norm → ReLU → dropout,
//! with one max-pool stage), mean-over-time pooling, and a two-affine
//! sigmoid head. Gradients are exact reverse-mode, written from scratch;
//! training is Adam on MSE.
//!
//! The model is generic over [`Scalar`]: `f32` is the working precision,
//! `f64` exists for gradient checking.

mod adam;
mod backward;
mod forward;
pub mod gradcheck;
mod train;

pub use adam::Adam;
pub use backward::backward;
pub use forward::{
    apply_running_update, forward_eval, forward_train, phonetic_features, predict, BatchMasks,
    BatchTrace, PreparedSample,
};
pub use train::{mse_loss, train, TargetKind, TrainReport};

use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use rand::Rng;

use crate::error::{Error, Result};

/// Numeric type of model parameters and activations.
pub trait Scalar:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + std::iter::Sum
    + std::fmt::Debug
    + std::fmt::Display
    + Default
    + Send
    + Sync
    + 'static
{
    fn from_f64c(v: f64) -> Self {
        num_traits::FromPrimitive::from_f64(v).expect("f64 literal representable")
    }

    fn from_f32c(v: f32) -> Self {
        num_traits::FromPrimitive::from_f32(v).expect("f32 literal representable")
    }

    fn to_f64c(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).expect("scalar converts to f64")
    }

    fn to_f32c(self) -> f32 {
        self.to_f64c() as f32
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Which feature streams the scorer consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    Mfcc,
    Deep,
    /// Both streams, one tower each, concatenated before the head.
    #[default]
    Multi,
}

impl FeatureSet {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "mfcc" => Ok(FeatureSet::Mfcc),
            "deep" => Ok(FeatureSet::Deep),
            "multi" => Ok(FeatureSet::Multi),
            other => Err(Error::Config(format!(
                "unknown feature set `{other}` (expected mfcc, deep, or multi)"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureSet::Mfcc => "mfcc",
            FeatureSet::Deep => "deep",
            FeatureSet::Multi => "multi",
        }
    }

    /// Streams in model order. The deep stream always precedes MFCC so the
    /// head's concatenated input is `[h_deep; h_mfcc]`.
    pub fn streams(self) -> &'static [Stream] {
        match self {
            FeatureSet::Mfcc => &[Stream::Mfcc],
            FeatureSet::Deep => &[Stream::Deep],
            FeatureSet::Multi => &[Stream::Deep, Stream::Mfcc],
        }
    }
}

/// One input stream of the scorer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Deep,
    Mfcc,
}

impl Stream {
    pub fn name(self) -> &'static str {
        match self {
            Stream::Deep => "deep",
            Stream::Mfcc => "mfcc",
        }
    }
}

/// Architecture and training hyperparameters.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScorerConfig {
    pub feature_set: FeatureSet,
    /// MFCC stream width.
    pub d_mfcc: usize,
    /// Deep-feature stream width.
    pub d_deep: usize,
    /// Width of the per-frame transform output, the phone embeddings, and
    /// the head's intermediate layer.
    pub d_hidden: usize,
    /// Phone inventory size; must be set from the data (no usable default).
    pub n_phones: usize,
    /// Conv kernel sizes of the three tower blocks.
    pub kernels: [usize; 3],
    /// Zero-padding of the three tower blocks.
    pub paddings: [usize; 3],
    /// Conv channel count throughout the tower.
    pub filters: usize,
    pub dropout_p: f64,
    pub pool_kernel: usize,
    pub pool_stride: usize,
    /// Share one conv tower across streams (default: separate towers).
    pub share_towers: bool,
    /// Share one phone embedding table across streams (default: shared).
    pub share_embedding: bool,
    pub bn_momentum: f64,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Fraction of the training set held out for best-epoch selection.
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        ScorerConfig {
            feature_set: FeatureSet::Multi,
            d_mfcc: 39,
            d_deep: 512,
            d_hidden: 32,
            n_phones: 0,
            kernels: [3, 3, 1],
            paddings: [1, 1, 0],
            filters: 32,
            dropout_p: 0.1,
            pool_kernel: 2,
            pool_stride: 2,
            share_towers: false,
            share_embedding: true,
            bn_momentum: 0.1,
            learning_rate: 0.002,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            batch_size: 64,
            epochs: 20,
            holdout_fraction: 0.1,
            seed: 0,
        }
    }
}

/// Output length of a strided window op: `(L + 2·padding − kernel)/stride + 1`
/// with integer floor, or `None` when the padded input is shorter than the
/// kernel.
pub fn conv_len(l_in: usize, kernel: usize, padding: usize, stride: usize) -> Option<usize> {
    let padded = l_in + 2 * padding;
    if padded < kernel || stride == 0 {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

/// Per-block output lengths for a word of `t` frames: conv blocks use
/// stride 1; the middle block is followed by the max-pool.
pub fn layer_lengths(config: &ScorerConfig, t: usize) -> Result<[usize; 3]> {
    let mut l = t;
    let mut out = [0usize; 3];
    for (i, (&k, &p)) in config.kernels.iter().zip(&config.paddings).enumerate() {
        l = conv_len(l, k, p, 1).filter(|&v| v > 0).ok_or_else(|| {
            Error::InvalidInput(format!(
                "word of {t} frames is too short for conv block {i} (kernel {k}, padding {p})"
            ))
        })?;
        if i == 1 {
            l = conv_len(l, config.pool_kernel, 0, config.pool_stride)
                .filter(|&v| v > 0)
                .ok_or_else(|| {
                    Error::InvalidInput(format!(
                        "word of {t} frames is too short for the max-pool (input length {l})"
                    ))
                })?;
        }
        out[i] = l;
    }
    Ok(out)
}

impl ScorerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive: [(&str, usize); 7] = [
            ("d_mfcc", self.d_mfcc),
            ("d_deep", self.d_deep),
            ("d_hidden", self.d_hidden),
            ("n_phones", self.n_phones),
            ("filters", self.filters),
            ("batch_size", self.batch_size),
            ("pool_kernel", self.pool_kernel),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.pool_stride == 0 {
            return Err(Error::Config("pool_stride must be positive".into()));
        }
        if self.kernels.contains(&0) {
            return Err(Error::Config("conv kernels must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Config(format!(
                "dropout_p {} outside [0, 1)",
                self.dropout_p
            )));
        }
        // NaN fails every guard below, so NaN hyperparameters are rejected.
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.bn_momentum.is_nan() || self.bn_momentum <= 0.0 || self.bn_momentum > 1.0 {
            return Err(Error::Config(format!(
                "bn_momentum {} outside (0, 1]",
                self.bn_momentum
            )));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::Config(format!(
                "holdout_fraction {} outside [0, 1)",
                self.holdout_fraction
            )));
        }
        let bad_beta = |b: f64| b.is_nan() || b <= 0.0 || b >= 1.0;
        if bad_beta(self.adam_beta1)
            || bad_beta(self.adam_beta2)
            || self.adam_epsilon.is_nan()
            || self.adam_epsilon <= 0.0
        {
            return Err(Error::Config("invalid Adam hyperparameters".into()));
        }
        self.min_frames()?;
        Ok(())
    }

    /// Smallest word length (in frames) the tower geometry accepts.
    pub fn min_frames(&self) -> Result<usize> {
        for t in 1..=64 {
            if layer_lengths(self, t).is_ok() {
                return Ok(t);
            }
        }
        Err(Error::Config(
            "tower geometry accepts no word shorter than 64 frames".into(),
        ))
    }

    pub fn streams(&self) -> &'static [Stream] {
        self.feature_set.streams()
    }

    pub fn n_streams(&self) -> usize {
        self.streams().len()
    }

    pub fn stream_dim(&self, stream: Stream) -> usize {
        match stream {
            Stream::Deep => self.d_deep,
            Stream::Mfcc => self.d_mfcc,
        }
    }

    /// Width of the head's concatenated input.
    pub fn head_in(&self) -> usize {
        self.n_streams() * self.filters
    }

    pub(crate) fn n_embeddings(&self) -> usize {
        if self.share_embedding {
            1
        } else {
            self.n_streams()
        }
    }

    pub(crate) fn n_towers(&self) -> usize {
        if self.share_towers {
            1
        } else {
            self.n_streams()
        }
    }

    /// Embedding table index used by stream `j`.
    pub(crate) fn embedding_of(&self, stream_idx: usize) -> usize {
        if self.share_embedding {
            0
        } else {
            stream_idx
        }
    }

    /// Tower index used by stream `j`.
    pub(crate) fn tower_of(&self, stream_idx: usize) -> usize {
        if self.share_towers {
            0
        } else {
            stream_idx
        }
    }
}

/// Dense affine layer; `w` is `[d_in][d_out]` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine<F> {
    pub d_in: usize,
    pub d_out: usize,
    pub w: Vec<F>,
    pub b: Vec<F>,
}

/// One tower block: 1-D conv (`w` is `[kernel][c_in][c_out]` row-major)
/// with batch-norm parameters and running stats, optionally followed by the
/// max-pool.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvBlock<F> {
    pub kernel: usize,
    pub padding: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub pool: bool,
    pub w: Vec<F>,
    pub b: Vec<F>,
    pub gamma: Vec<F>,
    pub beta: Vec<F>,
    pub running_mean: Vec<F>,
    pub running_var: Vec<F>,
}

/// The full scorer. `embeddings` and `towers` hold one entry when shared,
/// or one per stream otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorerModel<F> {
    pub config: ScorerConfig,
    pub embeddings: Vec<Vec<F>>,
    pub fronts: Vec<Affine<F>>,
    pub towers: Vec<Vec<ConvBlock<F>>>,
    pub head1: Affine<F>,
    pub head2: Affine<F>,
}

fn uniform_fan_in<F: Scalar, R: Rng + ?Sized>(rng: &mut R, fan_in: usize, n: usize) -> Vec<F> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    (0..n)
        .map(|_| F::from_f64c(rng.random_range(-bound..bound)))
        .collect()
}

fn init_affine<F: Scalar, R: Rng + ?Sized>(rng: &mut R, d_in: usize, d_out: usize) -> Affine<F> {
    Affine {
        d_in,
        d_out,
        w: uniform_fan_in(rng, d_in, d_in * d_out),
        b: uniform_fan_in(rng, d_in, d_out),
    }
}

fn init_block<F: Scalar, R: Rng + ?Sized>(
    rng: &mut R,
    kernel: usize,
    padding: usize,
    c_in: usize,
    c_out: usize,
    pool: bool,
) -> ConvBlock<F> {
    let fan_in = kernel * c_in;
    ConvBlock {
        kernel,
        padding,
        c_in,
        c_out,
        pool,
        w: uniform_fan_in(rng, fan_in, kernel * c_in * c_out),
        b: uniform_fan_in(rng, fan_in, c_out),
        gamma: vec![F::one(); c_out],
        beta: vec![F::zero(); c_out],
        running_mean: vec![F::zero(); c_out],
        running_var: vec![F::one(); c_out],
    }
}

/// Initializes a model with scaled-uniform fan-in weights, batch-norm
/// scale 1 / shift 0, running mean 0 / variance 1. Deterministic given the
/// rng state; the draw order is the canonical parameter order.
pub fn init_model<F: Scalar, R: Rng + ?Sized>(
    config: &ScorerConfig,
    rng: &mut R,
) -> Result<ScorerModel<F>> {
    config.validate()?;
    let h = config.d_hidden;
    let embeddings = (0..config.n_embeddings())
        .map(|_| uniform_fan_in(rng, h, config.n_phones * h))
        .collect();
    let fronts = config
        .streams()
        .iter()
        .map(|&s| init_affine(rng, config.stream_dim(s), h))
        .collect();
    let towers = (0..config.n_towers())
        .map(|_| {
            (0..3)
                .map(|i| {
                    let c_in = if i == 0 { h } else { config.filters };
                    init_block(
                        rng,
                        config.kernels[i],
                        config.paddings[i],
                        c_in,
                        config.filters,
                        i == 1,
                    )
                })
                .collect()
        })
        .collect();
    let head1 = init_affine(rng, config.head_in(), h);
    let head2 = init_affine(rng, h, 1);
    Ok(ScorerModel {
        config: config.clone(),
        embeddings,
        fronts,
        towers,
        head1,
        head2,
    })
}

/// Checkpoint currency: one named f32 tensor with its shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

fn load_tensor<F: Scalar>(
    tensor: &Tensor,
    name: &str,
    dims: &[usize],
    dst: &mut Vec<F>,
) -> Result<()> {
    if tensor.dims != dims {
        return Err(Error::InvalidInput(format!(
            "checkpoint tensor `{}` has shape {:?}, model expects {:?} for `{name}`",
            tensor.name, tensor.dims, dims
        )));
    }
    let expect: usize = dims.iter().product();
    if tensor.data.len() != expect {
        return Err(Error::InvalidInput(format!(
            "checkpoint tensor `{}` has {} values, shape {:?} needs {expect}",
            tensor.name,
            tensor.data.len(),
            tensor.dims
        )));
    }
    dst.clear();
    dst.extend(tensor.data.iter().map(|&v| F::from_f32c(v)));
    Ok(())
}

impl<F: Scalar> ScorerModel<F> {
    /// Trainable parameter tensors in canonical order: embedding tables;
    /// per-stream front weight and bias; per-tower per-block conv weight,
    /// conv bias, batch-norm scale, batch-norm shift; head affines.
    pub fn param_slices(&self) -> Vec<&[F]> {
        let mut out: Vec<&[F]> = Vec::new();
        for e in &self.embeddings {
            out.push(e);
        }
        for f in &self.fronts {
            out.push(&f.w);
            out.push(&f.b);
        }
        for tower in &self.towers {
            for b in tower {
                out.push(&b.w);
                out.push(&b.b);
                out.push(&b.gamma);
                out.push(&b.beta);
            }
        }
        out.push(&self.head1.w);
        out.push(&self.head1.b);
        out.push(&self.head2.w);
        out.push(&self.head2.b);
        out
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut Vec<F>> {
        let mut out: Vec<&mut Vec<F>> = Vec::new();
        for e in &mut self.embeddings {
            out.push(e);
        }
        for f in &mut self.fronts {
            out.push(&mut f.w);
            out.push(&mut f.b);
        }
        for tower in &mut self.towers {
            for b in tower {
                out.push(&mut b.w);
                out.push(&mut b.b);
                out.push(&mut b.gamma);
                out.push(&mut b.beta);
            }
        }
        out.push(&mut self.head1.w);
        out.push(&mut self.head1.b);
        out.push(&mut self.head2.w);
        out.push(&mut self.head2.b);
        out
    }

    /// Non-trainable state tensors (batch-norm running stats), in canonical
    /// order after the parameters: per tower per block mean then variance.
    pub fn state_slices(&self) -> Vec<&[F]> {
        let mut out: Vec<&[F]> = Vec::new();
        for tower in &self.towers {
            for b in tower {
                out.push(&b.running_mean);
                out.push(&b.running_var);
            }
        }
        out
    }

    pub fn state_slices_mut(&mut self) -> Vec<&mut Vec<F>> {
        let mut out: Vec<&mut Vec<F>> = Vec::new();
        for tower in &mut self.towers {
            for b in tower {
                out.push(&mut b.running_mean);
                out.push(&mut b.running_var);
            }
        }
        out
    }

    /// Names and shapes of `param_slices` followed by `state_slices`.
    pub fn tensor_specs(&self) -> Vec<(String, Vec<usize>)> {
        let c = &self.config;
        let h = c.d_hidden;
        let mut out = Vec::new();
        for i in 0..c.n_embeddings() {
            out.push((format!("embedding.{i}"), vec![c.n_phones, h]));
        }
        for (i, &s) in c.streams().iter().enumerate() {
            out.push((format!("front.{i}.w"), vec![c.stream_dim(s), h]));
            out.push((format!("front.{i}.b"), vec![h]));
        }
        for ti in 0..c.n_towers() {
            for (bi, block) in self.towers[ti].iter().enumerate() {
                out.push((
                    format!("tower.{ti}.block.{bi}.w"),
                    vec![block.kernel, block.c_in, block.c_out],
                ));
                out.push((format!("tower.{ti}.block.{bi}.b"), vec![block.c_out]));
                out.push((format!("tower.{ti}.block.{bi}.gamma"), vec![block.c_out]));
                out.push((format!("tower.{ti}.block.{bi}.beta"), vec![block.c_out]));
            }
        }
        out.push(("head1.w".into(), vec![c.head_in(), h]));
        out.push(("head1.b".into(), vec![h]));
        out.push(("head2.w".into(), vec![h, 1]));
        out.push(("head2.b".into(), vec![1]));
        for ti in 0..c.n_towers() {
            for (bi, block) in self.towers[ti].iter().enumerate() {
                out.push((
                    format!("tower.{ti}.block.{bi}.running_mean"),
                    vec![block.c_out],
                ));
                out.push((
                    format!("tower.{ti}.block.{bi}.running_var"),
                    vec![block.c_out],
                ));
            }
        }
        out
    }

    /// All tensors (parameters then running stats) as f32, in canonical
    /// order, for checkpointing.
    pub fn to_tensors(&self) -> Vec<Tensor> {
        let specs = self.tensor_specs();
        let mut slices = self.param_slices();
        slices.extend(self.state_slices());
        specs
            .into_iter()
            .zip(slices)
            .map(|((name, dims), data)| Tensor {
                name,
                dims,
                data: data.iter().map(|&v| v.to_f32c()).collect(),
            })
            .collect()
    }

    /// Rebuilds a model from checkpoint tensors; shapes must match the
    /// config exactly.
    pub fn from_tensors(config: &ScorerConfig, tensors: &[Tensor]) -> Result<Self> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut model: ScorerModel<F> = init_model(config, &mut rng)?;
        let specs = model.tensor_specs();
        if tensors.len() != specs.len() {
            return Err(Error::InvalidInput(format!(
                "checkpoint has {} tensors, model expects {}",
                tensors.len(),
                specs.len()
            )));
        }
        let n_param = model.param_slices().len();
        for ((tensor, (name, dims)), dst) in tensors[..n_param]
            .iter()
            .zip(&specs[..n_param])
            .zip(model.param_slices_mut())
        {
            load_tensor(tensor, name, dims, dst)?;
        }
        for ((tensor, (name, dims)), dst) in tensors[n_param..]
            .iter()
            .zip(&specs[n_param..])
            .zip(model.state_slices_mut())
        {
            load_tensor(tensor, name, dims, dst)?;
        }
        Ok(model)
    }

    /// A model of identical shape with every parameter and stat zeroed —
    /// the gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for p in out.param_slices_mut() {
            for v in p.iter_mut() {
                *v = F::zero();
            }
        }
        for s in out.state_slices_mut() {
            for v in s.iter_mut() {
                *v = F::zero();
            }
        }
        out
    }

    /// Total trainable parameter count.
    pub fn n_params(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }
}

use rand::SeedableRng;

/// Small two-stream configuration used across the scorer's tests.
#[cfg(test)]
pub(crate) fn tiny_config() -> ScorerConfig {
    ScorerConfig {
        d_mfcc: 4,
        d_deep: 6,
        d_hidden: 8,
        filters: 8,
        n_phones: 5,
        batch_size: 4,
        ..ScorerConfig::default()
    }
}
