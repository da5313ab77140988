//! Forward passes.
//!
//! `forward_train` is pure: it records batch statistics and every
//! intermediate needed for exact gradients into a [`BatchTrace`] without
//! touching the model; [`apply_running_update`] folds the recorded batch
//! statistics into the running stats as a separate step. `forward_eval`
//! uses running statistics, applies no dropout, and is a pure per-sample
//! function.

use rand::Rng;

use super::{conv_len, Affine, ConvBlock, Scalar, ScorerConfig, ScorerModel, Stream};
use crate::error::{Error, Result};
use crate::types::WordSample;

/// Floor applied to batch-norm variances before the reciprocal square root.
pub(crate) const BN_VAR_FLOOR: f64 = 1e-5;

/// A word sample converted to model precision, stream-selected, and
/// edge-padded up to the tower's minimum length.
#[derive(Debug, Clone)]
pub struct PreparedSample<F> {
    /// Frame count after padding.
    pub frames: usize,
    /// Per-frame phone ids (dense, validated against the config).
    pub phones: Vec<u32>,
    /// Per stream (in config order): `[frames * dim]` row-major features.
    pub streams: Vec<Vec<F>>,
    pub target: F,
    /// True when the sample was shorter than the geometric minimum and its
    /// last frame was repeated to reach it.
    pub padded: bool,
}

impl<F: Scalar> PreparedSample<F> {
    pub fn prepare(sample: &WordSample, config: &ScorerConfig) -> Result<Self> {
        let min = config.min_frames()?;
        let t0 = sample.frames();
        for (t, p) in sample.phones_per_frame.iter().enumerate() {
            if p.index() >= config.n_phones {
                return Err(Error::InvalidInput(format!(
                    "word `{}` frame {t}: phone id {} outside embedding range {}",
                    sample.word,
                    p.0,
                    config.n_phones
                )));
            }
        }
        let t = t0.max(min);
        let padded = t > t0;
        let mut phones: Vec<u32> = sample.phones_per_frame.iter().map(|p| p.0).collect();
        phones.resize(t, *phones.last().expect("samples have at least one frame"));
        let mut streams = Vec::with_capacity(config.n_streams());
        for &s in config.streams() {
            let m = match s {
                Stream::Mfcc => &sample.mfcc,
                Stream::Deep => &sample.deep,
            };
            let d = config.stream_dim(s);
            if m.cols() != d {
                return Err(Error::DimensionMismatch {
                    context: format!("word `{}`", sample.word),
                    field: match s {
                        Stream::Mfcc => "mfcc",
                        Stream::Deep => "deep",
                    },
                    detail: format!("{} columns, model expects {d}", m.cols()),
                });
            }
            let mut v: Vec<F> = m.data().iter().map(|&x| F::from_f32c(x)).collect();
            let last_row: Vec<F> = v[(t0 - 1) * d..t0 * d].to_vec();
            for _ in t0..t {
                v.extend_from_slice(&last_row);
            }
            streams.push(v);
        }
        Ok(PreparedSample {
            frames: t,
            phones,
            streams,
            target: F::from_f64c(sample.target),
            padded,
        })
    }
}

/// Per-sample lengths at each tower stage for a given input length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Geometry {
    /// Conv output length of each block.
    pub conv: [usize; 3],
    /// Length after the block-2 max-pool.
    pub pooled: usize,
}

pub(crate) fn geometry(config: &ScorerConfig, t: usize) -> Result<Geometry> {
    let mut l = t;
    let mut conv = [0usize; 3];
    let mut pooled = 0usize;
    for (i, out) in conv.iter_mut().enumerate() {
        l = conv_len(l, config.kernels[i], config.paddings[i], 1)
            .filter(|&v| v > 0)
            .ok_or_else(|| {
                Error::InvalidInput(format!(
                    "word of {t} frames too short for conv block {i}"
                ))
            })?;
        *out = l;
        if i == 1 {
            l = conv_len(l, config.pool_kernel, 0, config.pool_stride)
                .filter(|&v| v > 0)
                .ok_or_else(|| {
                    Error::InvalidInput(format!("word of {t} frames too short for max-pool"))
                })?;
            pooled = l;
        }
    }
    Ok(Geometry { conv, pooled })
}

/// Dropout keep-masks for one batch, one per (stream, block, sample,
/// activation element). Generated up front so a forward pass can be
/// replayed exactly.
#[derive(Debug, Clone)]
pub struct BatchMasks {
    /// `keep[stream][block][sample]` has one flag per conv-output element.
    pub keep: Vec<Vec<Vec<Vec<bool>>>>,
    pub p: f64,
}

impl BatchMasks {
    fn build<G: FnMut() -> bool>(
        config: &ScorerConfig,
        lens: &[usize],
        p: f64,
        mut draw: G,
    ) -> Result<Self> {
        let mut keep = Vec::with_capacity(config.n_streams());
        for _ in 0..config.n_streams() {
            let mut per_block = Vec::with_capacity(3);
            for b in 0..3 {
                let mut per_sample = Vec::with_capacity(lens.len());
                for &t in lens {
                    let g = geometry(config, t)?;
                    let n = g.conv[b] * config.filters;
                    per_sample.push((0..n).map(|_| draw()).collect());
                }
                per_block.push(per_sample);
            }
            keep.push(per_block);
        }
        Ok(BatchMasks { keep, p })
    }

    /// All-keep masks (dropout disabled).
    pub fn none(config: &ScorerConfig, lens: &[usize]) -> Result<Self> {
        Self::build(config, lens, 0.0, || true)
    }

    /// Bernoulli keep-masks with the config's dropout probability. Draw
    /// order is stream-major, then block, sample, element.
    pub fn sample<R: Rng + ?Sized>(
        config: &ScorerConfig,
        lens: &[usize],
        rng: &mut R,
    ) -> Result<Self> {
        let p = config.dropout_p;
        if p == 0.0 {
            return Self::none(config, lens);
        }
        Self::build(config, lens, p, || rng.random::<f64>() >= p)
    }

    /// Inverted-dropout scale applied to kept activations at train time.
    pub fn scale<F: Scalar>(&self) -> F {
        F::from_f64c(1.0 / (1.0 - self.p))
    }
}

/// Batch statistics of one batch-norm layer.
#[derive(Debug, Clone)]
pub struct BnStats<F> {
    pub mean: Vec<F>,
    /// Biased (1/N) per-channel variance.
    pub var: Vec<F>,
    /// `1/sqrt(max(var, floor))`.
    pub inv_std: Vec<F>,
    /// Channels whose variance sat below the floor (no gradient through
    /// the variance there).
    pub floored: Vec<bool>,
    /// Total frames across the batch at this layer.
    pub count: usize,
}

/// Everything recorded about one block of one stream.
#[derive(Debug, Clone)]
pub struct BlockTrace<F> {
    pub in_lens: Vec<usize>,
    pub out_lens: Vec<usize>,
    /// Pre-batch-norm conv outputs per sample.
    pub conv_y: Vec<Vec<F>>,
    pub stats: BnStats<F>,
    /// Block outputs per sample (after dropout, and pooling when present);
    /// the next stage's input.
    pub post: Vec<Vec<F>>,
    /// For the pooled block: per sample, the source time index of each
    /// pooled (time, channel) element.
    pub pool_from: Option<Vec<Vec<u32>>>,
}

/// Everything recorded about one stream.
#[derive(Debug, Clone)]
pub struct StreamTrace<F> {
    /// Post-ReLU front outputs per sample.
    pub x0: Vec<Vec<F>>,
    /// Front outputs plus phone embeddings — the tower input.
    pub x: Vec<Vec<F>>,
    pub blocks: Vec<BlockTrace<F>>,
    /// Mean-over-time tower outputs per sample.
    pub h: Vec<Vec<F>>,
}

impl<F> StreamTrace<F> {
    /// Input activations of block `b` (the tower input for block 0).
    pub fn input_to(&self, b: usize) -> &[Vec<F>] {
        if b == 0 {
            &self.x
        } else {
            &self.blocks[b - 1].post
        }
    }
}

/// Full record of one training forward pass.
#[derive(Debug, Clone)]
pub struct BatchTrace<F> {
    pub streams: Vec<StreamTrace<F>>,
    /// Concatenated tower outputs per sample.
    pub concat: Vec<Vec<F>>,
    /// Head intermediate per sample.
    pub v: Vec<Vec<F>>,
    pub logits: Vec<F>,
    pub preds: Vec<F>,
}

fn affine_forward<F: Scalar>(aff: &Affine<F>, input: &[F]) -> Vec<F> {
    let mut out = aff.b.clone();
    for (i, &a) in input.iter().enumerate() {
        let wrow = &aff.w[i * aff.d_out..(i + 1) * aff.d_out];
        for (o, &w) in out.iter_mut().zip(wrow) {
            *o += a * w;
        }
    }
    out
}

/// Front transform: per frame `relu(W·f + b)`, then the frame's phone
/// embedding added. Returns (post-ReLU, post-embedding).
fn front_forward<F: Scalar>(
    front: &Affine<F>,
    emb: &[F],
    input: &[F],
    phones: &[u32],
) -> (Vec<F>, Vec<F>) {
    let d = front.d_in;
    let h = front.d_out;
    let t_len = phones.len();
    let mut x0 = vec![F::zero(); t_len * h];
    for t in 0..t_len {
        let row = &mut x0[t * h..(t + 1) * h];
        row.copy_from_slice(&front.b);
        let irow = &input[t * d..(t + 1) * d];
        for (di, &a) in irow.iter().enumerate() {
            let wrow = &front.w[di * h..(di + 1) * h];
            for (o, &w) in row.iter_mut().zip(wrow) {
                *o += a * w;
            }
        }
        for v in row.iter_mut() {
            if *v < F::zero() {
                *v = F::zero();
            }
        }
    }
    let mut x = x0.clone();
    for t in 0..t_len {
        let e = &emb[phones[t] as usize * h..][..h];
        let row = &mut x[t * h..(t + 1) * h];
        for (o, &ev) in row.iter_mut().zip(e) {
            *o += ev;
        }
    }
    (x0, x)
}

/// Public form of the per-frame input transform for one stream: features
/// `[T x D]` to `[T x d_hidden]`, embeddings included.
pub fn phonetic_features<F: Scalar>(
    model: &ScorerModel<F>,
    stream_idx: usize,
    features: &crate::types::FeatureMatrix,
    phones: &[crate::types::PhoneId],
) -> Result<Vec<F>> {
    let config = &model.config;
    if stream_idx >= config.n_streams() {
        return Err(Error::InvalidInput(format!(
            "stream index {stream_idx} out of range for {} streams",
            config.n_streams()
        )));
    }
    if features.rows() != phones.len() {
        return Err(Error::LengthMismatch(format!(
            "{} feature frames but {} phone labels",
            features.rows(),
            phones.len()
        )));
    }
    let front = &model.fronts[stream_idx];
    if features.cols() != front.d_in {
        return Err(Error::InvalidInput(format!(
            "stream {stream_idx} expects {} columns, got {}",
            front.d_in,
            features.cols()
        )));
    }
    let mut ids = Vec::with_capacity(phones.len());
    for p in phones {
        if p.index() >= config.n_phones {
            return Err(Error::InvalidInput(format!(
                "phone id {} outside embedding range {}",
                p.0, config.n_phones
            )));
        }
        ids.push(p.0);
    }
    let input: Vec<F> = features.data().iter().map(|&v| F::from_f32c(v)).collect();
    let emb = &model.embeddings[config.embedding_of(stream_idx)];
    let (_, x) = front_forward(front, emb, &input, &ids);
    Ok(x)
}

pub(crate) fn conv_forward<F: Scalar>(
    block: &ConvBlock<F>,
    input: &[F],
    l_in: usize,
    l_out: usize,
) -> Vec<F> {
    let (k, pad, ci, co) = (block.kernel, block.padding, block.c_in, block.c_out);
    let mut out = vec![F::zero(); l_out * co];
    for t in 0..l_out {
        let orow = &mut out[t * co..(t + 1) * co];
        orow.copy_from_slice(&block.b);
        for dt in 0..k {
            let src = t as isize + dt as isize - pad as isize;
            if src < 0 || src >= l_in as isize {
                continue;
            }
            let irow = &input[src as usize * ci..][..ci];
            let wbase = dt * ci * co;
            for (i, &a) in irow.iter().enumerate() {
                let wrow = &block.w[wbase + i * co..][..co];
                for (o, &w) in orow.iter_mut().zip(wrow) {
                    *o += a * w;
                }
            }
        }
    }
    out
}

fn bn_batch_stats<F: Scalar>(ys: &[Vec<F>], c: usize) -> BnStats<F> {
    let mut count = 0usize;
    let mut sum = vec![F::zero(); c];
    for y in ys {
        let l = y.len() / c;
        count += l;
        for t in 0..l {
            for (s, &v) in sum.iter_mut().zip(&y[t * c..(t + 1) * c]) {
                *s += v;
            }
        }
    }
    let n = F::from_f64c(count as f64);
    let mean: Vec<F> = sum.iter().map(|&s| s / n).collect();
    let mut sq = vec![F::zero(); c];
    for y in ys {
        let l = y.len() / c;
        for t in 0..l {
            for ch in 0..c {
                let d = y[t * c + ch] - mean[ch];
                sq[ch] += d * d;
            }
        }
    }
    let var: Vec<F> = sq.iter().map(|&s| s / n).collect();
    let floor = F::from_f64c(BN_VAR_FLOOR);
    let floored: Vec<bool> = var.iter().map(|&v| v < floor).collect();
    let inv_std: Vec<F> = var.iter().map(|&v| v.max(floor).sqrt().recip()).collect();
    BnStats {
        mean,
        var,
        inv_std,
        floored,
        count,
    }
}

pub(crate) fn pool_forward<F: Scalar>(
    input: &[F],
    l_in: usize,
    c: usize,
    k: usize,
    s: usize,
) -> (Vec<F>, Vec<u32>) {
    let l_out = (l_in - k) / s + 1;
    let mut out = vec![F::zero(); l_out * c];
    let mut from = vec![0u32; l_out * c];
    for tp in 0..l_out {
        for dt in 0..k {
            let t = tp * s + dt;
            let irow = &input[t * c..(t + 1) * c];
            for ch in 0..c {
                let v = irow[ch];
                // First maximum wins on ties.
                if dt == 0 || v > out[tp * c + ch] {
                    out[tp * c + ch] = v;
                    from[tp * c + ch] = t as u32;
                }
            }
        }
    }
    (out, from)
}

fn sigmoid<F: Scalar>(z: F) -> F {
    F::one() / (F::one() + (-z).exp())
}

fn head_forward<F: Scalar>(model: &ScorerModel<F>, u: &[F]) -> Result<(Vec<F>, F, F)> {
    let v = affine_forward(&model.head1, u);
    let o = affine_forward(&model.head2, &v);
    let logit = o[0];
    if !logit.is_finite() {
        return Err(Error::Numeric("non-finite pre-sigmoid activation".into()));
    }
    Ok((v, logit, sigmoid(logit)))
}

/// Training-mode forward over one batch. Pure: batch statistics and all
/// intermediates go into the returned trace; the model is untouched.
pub fn forward_train<F: Scalar>(
    model: &ScorerModel<F>,
    batch: &[PreparedSample<F>],
    masks: &BatchMasks,
) -> Result<(Vec<F>, BatchTrace<F>)> {
    let config = &model.config;
    if batch.is_empty() {
        return Err(Error::EmptyInput("forward on an empty batch".into()));
    }
    let scale: F = masks.scale();
    let mut streams = Vec::with_capacity(config.n_streams());
    for j in 0..config.n_streams() {
        let emb = &model.embeddings[config.embedding_of(j)];
        let front = &model.fronts[j];
        let tower = &model.towers[config.tower_of(j)];
        let mut x0s = Vec::with_capacity(batch.len());
        let mut xs = Vec::with_capacity(batch.len());
        for sample in batch {
            let (x0, x) = front_forward(front, emb, &sample.streams[j], &sample.phones);
            x0s.push(x0);
            xs.push(x);
        }
        let mut lens: Vec<usize> = batch.iter().map(|s| s.frames).collect();
        let mut current: Vec<Vec<F>> = xs.clone();
        let mut blocks = Vec::with_capacity(3);
        for (bi, block) in tower.iter().enumerate() {
            let in_lens = lens.clone();
            let mut out_lens = Vec::with_capacity(batch.len());
            let mut conv_y = Vec::with_capacity(batch.len());
            for (s, input) in current.iter().enumerate() {
                let l_out = conv_len(in_lens[s], block.kernel, block.padding, 1)
                    .filter(|&v| v > 0)
                    .ok_or_else(|| {
                        Error::InvalidInput(format!(
                            "sample {s}: input length {} too short for conv block {bi}",
                            in_lens[s]
                        ))
                    })?;
                conv_y.push(conv_forward(block, input, in_lens[s], l_out));
                out_lens.push(l_out);
            }
            let stats = bn_batch_stats(&conv_y, block.c_out);
            let c = block.c_out;
            let mut post = Vec::with_capacity(batch.len());
            for (s, y) in conv_y.iter().enumerate() {
                let mask = &masks.keep[j][bi][s];
                if mask.len() != y.len() {
                    return Err(Error::InvalidInput(format!(
                        "dropout mask of stream {j} block {bi} sample {s} has {} elements, \
                         activations have {}",
                        mask.len(),
                        y.len()
                    )));
                }
                let mut a = vec![F::zero(); y.len()];
                for t in 0..out_lens[s] {
                    for ch in 0..c {
                        let idx = t * c + ch;
                        let xhat = (y[idx] - stats.mean[ch]) * stats.inv_std[ch];
                        let act = block.gamma[ch] * xhat + block.beta[ch];
                        let relu = if act > F::zero() { act } else { F::zero() };
                        a[idx] = if mask[idx] { relu * scale } else { F::zero() };
                    }
                }
                post.push(a);
            }
            let pool_from = if block.pool {
                let mut pooled = Vec::with_capacity(batch.len());
                let mut froms = Vec::with_capacity(batch.len());
                let mut new_lens = Vec::with_capacity(batch.len());
                for (s, a) in post.iter().enumerate() {
                    if out_lens[s] < config.pool_kernel {
                        return Err(Error::InvalidInput(format!(
                            "sample {s}: length {} too short for max-pool",
                            out_lens[s]
                        )));
                    }
                    let (p, fr) = pool_forward(
                        a,
                        out_lens[s],
                        c,
                        config.pool_kernel,
                        config.pool_stride,
                    );
                    new_lens.push(p.len() / c);
                    pooled.push(p);
                    froms.push(fr);
                }
                post = pooled;
                lens = new_lens;
                Some(froms)
            } else {
                lens = out_lens.clone();
                None
            };
            blocks.push(BlockTrace {
                in_lens,
                out_lens,
                conv_y,
                stats,
                post: post.clone(),
                pool_from,
            });
            current = post;
        }
        // Mean over time.
        let c = config.filters;
        let mut hs = Vec::with_capacity(batch.len());
        for (s, a) in current.iter().enumerate() {
            let l = lens[s];
            let mut h = vec![F::zero(); c];
            for t in 0..l {
                for (acc, &v) in h.iter_mut().zip(&a[t * c..(t + 1) * c]) {
                    *acc += v;
                }
            }
            let n = F::from_f64c(l as f64);
            for v in h.iter_mut() {
                *v /= n;
            }
            hs.push(h);
        }
        streams.push(StreamTrace {
            x0: x0s,
            x: xs,
            blocks,
            h: hs,
        });
    }

    let mut concat = Vec::with_capacity(batch.len());
    let mut vs = Vec::with_capacity(batch.len());
    let mut logits = Vec::with_capacity(batch.len());
    let mut preds = Vec::with_capacity(batch.len());
    for s in 0..batch.len() {
        let mut u = Vec::with_capacity(config.head_in());
        for st in &streams {
            u.extend_from_slice(&st.h[s]);
        }
        let (v, logit, p) = head_forward(model, &u)?;
        concat.push(u);
        vs.push(v);
        logits.push(logit);
        preds.push(p);
    }
    let trace = BatchTrace {
        streams,
        concat,
        v: vs,
        logits,
        preds: preds.clone(),
    };
    Ok((preds, trace))
}

/// Folds the batch statistics recorded in `trace` into the model's running
/// stats: `running = (1 - momentum)·running + momentum·batch`, with the
/// unbiased variance when more than one frame contributed. With shared
/// towers each stream applies its own update in stream order.
pub fn apply_running_update<F: Scalar>(model: &mut ScorerModel<F>, trace: &BatchTrace<F>) {
    let config = model.config.clone();
    let mom = F::from_f64c(config.bn_momentum);
    let keep = F::one() - mom;
    for (j, st) in trace.streams.iter().enumerate() {
        let ti = config.tower_of(j);
        for (bi, bt) in st.blocks.iter().enumerate() {
            let block = &mut model.towers[ti][bi];
            let n = bt.stats.count;
            let unbias = if n > 1 {
                F::from_f64c(n as f64 / (n as f64 - 1.0))
            } else {
                F::one()
            };
            for ch in 0..block.c_out {
                block.running_mean[ch] = keep * block.running_mean[ch] + mom * bt.stats.mean[ch];
                block.running_var[ch] =
                    keep * block.running_var[ch] + mom * bt.stats.var[ch] * unbias;
            }
        }
    }
}

fn eval_one<F: Scalar>(model: &ScorerModel<F>, sample: &PreparedSample<F>) -> Result<F> {
    let config = &model.config;
    let floor = F::from_f64c(BN_VAR_FLOOR);
    let mut u = Vec::with_capacity(config.head_in());
    for j in 0..config.n_streams() {
        let emb = &model.embeddings[config.embedding_of(j)];
        let front = &model.fronts[j];
        let tower = &model.towers[config.tower_of(j)];
        let (_, mut a) = front_forward(front, emb, &sample.streams[j], &sample.phones);
        let mut l = sample.frames;
        for block in tower {
            let l_out = conv_len(l, block.kernel, block.padding, 1)
                .filter(|&v| v > 0)
                .ok_or_else(|| {
                    Error::InvalidInput(format!("input length {l} too short for conv"))
                })?;
            let y = conv_forward(block, &a, l, l_out);
            let c = block.c_out;
            let mut act = vec![F::zero(); y.len()];
            for t in 0..l_out {
                for ch in 0..c {
                    let idx = t * c + ch;
                    let inv = block.running_var[ch].max(floor).sqrt().recip();
                    let xhat = (y[idx] - block.running_mean[ch]) * inv;
                    let z = block.gamma[ch] * xhat + block.beta[ch];
                    act[idx] = if z > F::zero() { z } else { F::zero() };
                }
            }
            if block.pool {
                let (p, _) = pool_forward(&act, l_out, c, config.pool_kernel, config.pool_stride);
                l = p.len() / c;
                a = p;
            } else {
                l = l_out;
                a = act;
            }
        }
        let c = config.filters;
        let n = F::from_f64c(l as f64);
        for ch in 0..c {
            let mut acc = F::zero();
            for t in 0..l {
                acc += a[t * c + ch];
            }
            u.push(acc / n);
        }
    }
    let (_, _, p) = head_forward(model, &u)?;
    Ok(p)
}

/// Evaluation-mode forward: running batch-norm stats, no dropout. Each
/// sample's score depends only on (model, sample).
pub fn forward_eval<F: Scalar>(
    model: &ScorerModel<F>,
    batch: &[PreparedSample<F>],
) -> Result<Vec<F>> {
    batch.iter().map(|s| eval_one(model, s)).collect()
}

/// Scores raw word samples in eval mode, returning `f64` predictions.
pub fn predict<F: Scalar>(model: &ScorerModel<F>, samples: &[WordSample]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(samples.len());
    for sample in samples {
        let prepared = PreparedSample::<F>::prepare(sample, &model.config)?;
        out.push(eval_one(model, &prepared)?.to_f64c());
    }
    Ok(out)
}
