//! Exact reverse-mode gradients for the scorer.
//!
//! Consumes the trace of [`super::forward_train`] plus per-sample loss
//! gradients `dL/dpred`, and returns a model-shaped accumulator whose
//! parameter fields hold `dL/dθ` summed over the batch. Batch-norm
//! gradients are batch-coupled: every sample's activations feed every
//! other sample's gradient through the shared batch statistics. Channels
//! whose batch variance sat below the floor get no gradient through the
//! variance term (the normalizer was a constant there), but still get the
//! mean term.

use super::forward::{BatchMasks, BatchTrace};
use super::{Scalar, ScorerModel};
use crate::error::{Error, Result};
use crate::scorer::PreparedSample;

/// Backward pass over one batch. Returns gradients in a [`ScorerModel`]
/// shell (state tensors stay zero). `dpreds[s]` is `dL/dpred` of sample `s`.
pub fn backward<F: Scalar>(
    model: &ScorerModel<F>,
    batch: &[PreparedSample<F>],
    masks: &BatchMasks,
    trace: &BatchTrace<F>,
    dpreds: &[F],
) -> Result<ScorerModel<F>> {
    let config = &model.config;
    if batch.len() != dpreds.len() || trace.preds.len() != batch.len() {
        return Err(Error::LengthMismatch(format!(
            "backward over {} samples with {} trace entries and {} loss gradients",
            batch.len(),
            trace.preds.len(),
            dpreds.len()
        )));
    }
    let mut g = model.zeros_like();
    let scale: F = masks.scale();
    let fl = config.filters;

    // Head: sigmoid, two affines; collect d(concat input) per sample.
    let mut dus: Vec<Vec<F>> = Vec::with_capacity(batch.len());
    for (s, &dpred) in dpreds.iter().enumerate() {
        let p = trace.preds[s];
        let dlogit = dpred * p * (F::one() - p);
        g.head2.b[0] += dlogit;
        let v = &trace.v[s];
        let d_mid = model.head2.d_in;
        let mut dv = vec![F::zero(); d_mid];
        for i in 0..d_mid {
            g.head2.w[i] += v[i] * dlogit;
            dv[i] = model.head2.w[i] * dlogit;
        }
        let u = &trace.concat[s];
        let d_in = model.head1.d_in;
        for (gb, &d) in g.head1.b.iter_mut().zip(&dv) {
            *gb += d;
        }
        let mut du = vec![F::zero(); d_in];
        for i in 0..d_in {
            let wrow = &model.head1.w[i * d_mid..(i + 1) * d_mid];
            let gwrow = &mut g.head1.w[i * d_mid..(i + 1) * d_mid];
            let ui = u[i];
            let mut acc = F::zero();
            for o in 0..d_mid {
                gwrow[o] += ui * dv[o];
                acc += wrow[o] * dv[o];
            }
            du[i] = acc;
        }
        dus.push(du);
    }

    for j in 0..config.n_streams() {
        let st = &trace.streams[j];
        let ti = config.tower_of(j);
        let ei = config.embedding_of(j);

        // Mean-over-time: spread each stream's slice of du evenly.
        let mut d_cur: Vec<Vec<F>> = Vec::with_capacity(batch.len());
        for (s, du) in dus.iter().enumerate() {
            let a_len = st.blocks[2].post[s].len();
            let l = a_len / fl;
            let inv_l = F::from_f64c(1.0 / l as f64);
            let dh = &du[j * fl..(j + 1) * fl];
            let mut d = vec![F::zero(); a_len];
            for t in 0..l {
                for (dst, &v) in d[t * fl..(t + 1) * fl].iter_mut().zip(dh) {
                    *dst = v * inv_l;
                }
            }
            d_cur.push(d);
        }

        for bi in (0..3).rev() {
            let bt = &st.blocks[bi];
            let block = &model.towers[ti][bi];
            let c = block.c_out;

            // Max-pool: route gradients to the recorded argmax sources.
            let d_act: Vec<Vec<F>> = if let Some(froms) = &bt.pool_from {
                let mut out = Vec::with_capacity(batch.len());
                for s in 0..batch.len() {
                    let mut d = vec![F::zero(); bt.out_lens[s] * c];
                    for (i, &src) in froms[s].iter().enumerate() {
                        d[src as usize * c + i % c] += d_cur[s][i];
                    }
                    out.push(d);
                }
                out
            } else {
                std::mem::take(&mut d_cur)
            };

            // Dropout and ReLU (activations recomputed from the conv trace),
            // then batch-norm scale/shift grads and the per-channel sums the
            // input gradient needs.
            let stats = &bt.stats;
            let n = F::from_f64c(stats.count as f64);
            let gblock = &mut g.towers[ti][bi];
            let mut sum_dyh = vec![F::zero(); c];
            let mut sum_dyh_yh = vec![F::zero(); c];
            let mut dyhs: Vec<Vec<F>> = Vec::with_capacity(batch.len());
            let mut yhats: Vec<Vec<F>> = Vec::with_capacity(batch.len());
            for (s, da) in d_act.iter().enumerate() {
                let y = &bt.conv_y[s];
                let mask = &masks.keep[j][bi][s];
                let mut dyh = vec![F::zero(); y.len()];
                let mut yhat = vec![F::zero(); y.len()];
                for t in 0..bt.out_lens[s] {
                    for ch in 0..c {
                        let idx = t * c + ch;
                        let yh = (y[idx] - stats.mean[ch]) * stats.inv_std[ch];
                        yhat[idx] = yh;
                        let z = block.gamma[ch] * yh + block.beta[ch];
                        let dr = if mask[idx] { da[idx] * scale } else { F::zero() };
                        let dz = if z > F::zero() { dr } else { F::zero() };
                        gblock.gamma[ch] += dz * yh;
                        gblock.beta[ch] += dz;
                        let d = dz * block.gamma[ch];
                        dyh[idx] = d;
                        sum_dyh[ch] += d;
                        sum_dyh_yh[ch] += d * yh;
                    }
                }
                dyhs.push(dyh);
                yhats.push(yhat);
            }

            // Batch-norm input gradient:
            //   dy = inv_std · (dŷ − mean(dŷ) − ŷ·mean(dŷ·ŷ))
            // with the ŷ (variance) term dropped on floored channels.
            let mut dys: Vec<Vec<F>> = Vec::with_capacity(batch.len());
            for s in 0..batch.len() {
                let dyh = &dyhs[s];
                let yhat = &yhats[s];
                let mut dy = vec![F::zero(); dyh.len()];
                for t in 0..bt.out_lens[s] {
                    for ch in 0..c {
                        let idx = t * c + ch;
                        let mut v = dyh[idx] - sum_dyh[ch] / n;
                        if !stats.floored[ch] {
                            v -= yhat[idx] * sum_dyh_yh[ch] / n;
                        }
                        dy[idx] = stats.inv_std[ch] * v;
                    }
                }
                dys.push(dy);
            }

            // Conv: weight/bias grads plus the gradient into the block input.
            let inputs = st.input_to(bi);
            let (k, pad, ci) = (block.kernel, block.padding, block.c_in);
            let mut d_inputs: Vec<Vec<F>> = Vec::with_capacity(batch.len());
            for s in 0..batch.len() {
                let dy = &dys[s];
                let input = &inputs[s];
                let l_in = bt.in_lens[s];
                let mut d_input = vec![F::zero(); l_in * ci];
                for t in 0..bt.out_lens[s] {
                    let dyrow = &dy[t * c..(t + 1) * c];
                    for (gb, &d) in gblock.b.iter_mut().zip(dyrow) {
                        *gb += d;
                    }
                    for dt in 0..k {
                        let src = t as isize + dt as isize - pad as isize;
                        if src < 0 || src >= l_in as isize {
                            continue;
                        }
                        let src = src as usize;
                        let irow = &input[src * ci..(src + 1) * ci];
                        let drow = &mut d_input[src * ci..(src + 1) * ci];
                        let wbase = dt * ci * c;
                        for i in 0..ci {
                            let a = irow[i];
                            let wrow = &block.w[wbase + i * c..][..c];
                            let gwrow = &mut gblock.w[wbase + i * c..][..c];
                            let mut acc = F::zero();
                            for o in 0..c {
                                gwrow[o] += a * dyrow[o];
                                acc += wrow[o] * dyrow[o];
                            }
                            drow[i] += acc;
                        }
                    }
                }
                d_inputs.push(d_input);
            }
            d_cur = d_inputs;
        }

        // Tower input = relu(front) + embedding.
        let h = config.d_hidden;
        let front = &model.fronts[j];
        for s in 0..batch.len() {
            let dx = &d_cur[s];
            let x0 = &st.x0[s];
            let feats = &batch[s].streams[j];
            let d = front.d_in;
            for t in 0..batch[s].frames {
                let ph = batch[s].phones[t] as usize;
                let erow = &mut g.embeddings[ei][ph * h..(ph + 1) * h];
                let dxrow = &dx[t * h..(t + 1) * h];
                for (e, &v) in erow.iter_mut().zip(dxrow) {
                    *e += v;
                }
                // ReLU gate on the front output.
                let mut dfz = vec![F::zero(); h];
                for hh in 0..h {
                    if x0[t * h + hh] > F::zero() {
                        dfz[hh] = dxrow[hh];
                    }
                }
                for (gb, &v) in g.fronts[j].b.iter_mut().zip(&dfz) {
                    *gb += v;
                }
                let frow = &feats[t * d..(t + 1) * d];
                for (di, &a) in frow.iter().enumerate() {
                    let gwrow = &mut g.fronts[j].w[di * h..(di + 1) * h];
                    for (gw, &v) in gwrow.iter_mut().zip(&dfz) {
                        *gw += a * v;
                    }
                }
            }
        }
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorer::{forward_train, init_model, tiny_config, BatchMasks};
    use crate::types::{FeatureMatrix, PhoneId, Provenance, WordSample};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn batch(cfg: &crate::scorer::ScorerConfig, ts: &[usize]) -> Vec<PreparedSample<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        ts.iter()
            .map(|&t| {
                let mut gen =
                    |n: usize| -> Vec<f32> { (0..n).map(|_| rng.random_range(-1.0f32..1.0)).collect() };
                let mfcc = FeatureMatrix::new(t, cfg.d_mfcc, gen(t * cfg.d_mfcc)).unwrap();
                let deep = FeatureMatrix::new(t, cfg.d_deep, gen(t * cfg.d_deep)).unwrap();
                let phones = (0..t).map(|i| PhoneId((i % cfg.n_phones) as u32)).collect();
                let s = WordSample::new("w".into(), phones, mfcc, deep, 0.5, Provenance::Mixup)
                    .unwrap();
                PreparedSample::prepare(&s, cfg).unwrap()
            })
            .collect()
    }

    #[test]
    fn zero_loss_gradient_gives_zero_parameter_gradients() {
        let cfg = tiny_config();
        let model = init_model::<f64, _>(&cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = batch(&cfg, &[4, 6]);
        let lens: Vec<usize> = b.iter().map(|s| s.frames).collect();
        let masks = BatchMasks::sample(&cfg, &lens, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let (_, trace) = forward_train(&model, &b, &masks).unwrap();
        let g = backward(&model, &b, &masks, &trace, &[0.0, 0.0]).unwrap();
        assert!(g
            .param_slices()
            .iter()
            .all(|s| s.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn gradients_are_linear_in_loss_gradient() {
        let cfg = tiny_config();
        let model = init_model::<f64, _>(&cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = batch(&cfg, &[5, 3]);
        let lens: Vec<usize> = b.iter().map(|s| s.frames).collect();
        let masks = BatchMasks::sample(&cfg, &lens, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let (_, trace) = forward_train(&model, &b, &masks).unwrap();
        let g1 = backward(&model, &b, &masks, &trace, &[0.3, -0.7]).unwrap();
        let g2 = backward(&model, &b, &masks, &trace, &[0.6, -1.4]).unwrap();
        for (a, b2) in g1.param_slices().iter().zip(g2.param_slices()) {
            for (&x, &y) in a.iter().zip(b2.iter()) {
                assert!((y - 2.0 * x).abs() <= 1e-12 * (1.0 + x.abs()), "{y} vs 2*{x}");
            }
        }
    }

    #[test]
    fn batch_gradient_superposes_over_samples() {
        // backward is linear in dpreds, so the joint gradient must equal
        // the sum of the two one-hot decompositions even though batch-norm
        // couples the samples.
        let cfg = tiny_config();
        let model = init_model::<f64, _>(&cfg, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = batch(&cfg, &[4, 7]);
        let lens: Vec<usize> = b.iter().map(|s| s.frames).collect();
        let masks = BatchMasks::none(&cfg, &lens).unwrap();
        let (_, trace) = forward_train(&model, &b, &masks).unwrap();
        let joint = backward(&model, &b, &masks, &trace, &[0.4, -0.9]).unwrap();
        let only0 = backward(&model, &b, &masks, &trace, &[0.4, 0.0]).unwrap();
        let only1 = backward(&model, &b, &masks, &trace, &[0.0, -0.9]).unwrap();
        for ((a, b0), b1) in joint
            .param_slices()
            .iter()
            .zip(only0.param_slices())
            .zip(only1.param_slices())
        {
            for ((&x, &y), &z) in a.iter().zip(b0.iter()).zip(b1.iter()) {
                assert!((x - (y + z)).abs() <= 1e-12 * (1.0 + x.abs()));
            }
        }
    }

    #[test]
    fn state_tensors_stay_zero_in_gradient() {
        let cfg = tiny_config();
        let model = init_model::<f64, _>(&cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = batch(&cfg, &[4]);
        let masks = BatchMasks::none(&cfg, &[4]).unwrap();
        let (_, trace) = forward_train(&model, &b, &masks).unwrap();
        let g = backward(&model, &b, &masks, &trace, &[1.0]).unwrap();
        assert!(g
            .state_slices()
            .iter()
            .all(|s| s.iter().all(|&v| v == 0.0)));
        assert!(g
            .param_slices()
            .iter()
            .any(|s| s.iter().any(|&v| v != 0.0)));
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        let cfg = tiny_config();
        let model = init_model::<f64, _>(&cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = batch(&cfg, &[4]);
        let masks = BatchMasks::none(&cfg, &[4]).unwrap();
        let (_, trace) = forward_train(&model, &b, &masks).unwrap();
        assert!(backward(&model, &b, &masks, &trace, &[1.0, 2.0]).is_err());
    }
}
