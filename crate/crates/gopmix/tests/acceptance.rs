//! Product acceptance suite: ten numbered criteria, one test each.
//!
//! Every test prints exactly one `criterion N (<name>): PASS/FAIL [...]`
//! line (run with `--nocapture` to see the lines for passing criteria) and
//! panics on FAIL. Checks, tolerances, and runtime budgets are pinned in
//! each test body; budgets are enforced, and tests serialize on a global
//! lock so each criterion's runtime is measured without contention from its
//! neighbors.
//!
//! The headline numbers of the system this pipeline mirrors were produced
//! on a large proprietary corpus (thousands of hours of speech, tens of
//! thousands of human-scored recordings) that cannot ship with the code, so
//! reproducing them directly is out of reach here. Criterion 1 records the
//! substitution: a documented real-data mode runs the identical protocol on
//! externally produced files, and criteria 2-10 pin the properties that
//! protocol relies on — exact GOP arithmetic, mixup construction
//! invariants, sampling frequencies, gradient correctness, shape
//! arithmetic, trainability, the pretraining-ordering effect at desk scale,
//! correlation identities, and format round-trips.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gopmix::eval::pearson_pcc;
use gopmix::experiment::{
    load_protocol_data, protocol_data, run_comparison, run_system, ComparisonSpec, PretrainKind,
    SystemConfig, Verdict,
};
use gopmix::gop::{phone_gop, word_gop, GopVariant, PhoneClassMap};
use gopmix::io::{
    read_checkpoint, read_dataset, read_matrix, read_pool, write_checkpoint, write_dataset,
    write_matrix_binary, write_pool, AlignUnits,
};
use gopmix::mixup::generate_dataset;
use gopmix::pool::build_pool;
use gopmix::scorer::{
    conv_len, gradcheck, init_model, layer_lengths, train, BatchMasks, PreparedSample,
    ScorerConfig, ScorerModel, TargetKind,
};
use gopmix::synth::{generate_corpus, write_corpus, SynthSpec};
use gopmix::types::{
    AlignSegment, FeatureMatrix, Lexicon, LexiconEntry, PhoneId, PhoneInventory, PhonePoolSet,
    Posteriorgram, Provenance, Quadruplet, WordSample,
};
use gopmix::Error;

static GATE: Mutex<()> = Mutex::new(());

/// Runs one criterion body, enforces its runtime budget, prints the verdict
/// line, and panics on failure so the suite stays honest under `cargo test`.
fn criterion(
    n: u32,
    name: &str,
    budget: Option<Duration>,
    body: impl FnOnce() -> Result<String, String>,
) {
    let _gate = GATE.lock().unwrap_or_else(|poisoned| poisoned.into_inner());
    let start = Instant::now();
    let outcome = body();
    let elapsed = start.elapsed();
    let (passed, detail) = match (outcome, budget) {
        (Ok(detail), Some(b)) if elapsed > b => (
            false,
            format!("checks passed but runtime {elapsed:.1?} exceeded the {b:?} budget; {detail}"),
        ),
        (Ok(detail), _) => (true, detail),
        (Err(e), _) => (false, e),
    };
    println!(
        "criterion {n} ({name}): {} [{elapsed:.1?}] {detail}",
        if passed { "PASS" } else { "FAIL" }
    );
    assert!(passed, "criterion {n} ({name}) failed: {detail}");
}

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn lib<T>(r: gopmix::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn bits_eq(a: &FeatureMatrix, b: &FeatureMatrix) -> bool {
    a.rows() == b.rows()
        && a.cols() == b.cols()
        && a.data()
            .iter()
            .zip(b.data())
            .all(|(x, y)| x.to_bits() == y.to_bits())
}

fn samples_eq(a: &WordSample, b: &WordSample) -> bool {
    a.word == b.word
        && a.provenance == b.provenance
        && a.target.to_bits() == b.target.to_bits()
        && a.phones_per_frame == b.phones_per_frame
        && bits_eq(&a.mfcc, &b.mfcc)
        && bits_eq(&a.deep, &b.deep)
}

fn datasets_eq(a: &[WordSample], b: &[WordSample]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| samples_eq(x, y))
}

/// A small corpus spec with narrow feature widths, for fast criteria.
fn small_corpus_spec(n_utts: usize, seed: u64) -> SynthSpec {
    SynthSpec {
        n_utts,
        n_phones: 8,
        lexicon_size: 16,
        d_mfcc: 6,
        d_deep: 9,
        n_classes: 24,
        seed,
        ..SynthSpec::default()
    }
}

/// Criterion 1: direct reproduction of the reference results needs corpora
/// and acoustic models that cannot ship with the code, so acceptance
/// substitutes properties 2-10 plus a documented real-data mode. This test
/// verifies the substitution itself: the real-data mode is documented in
/// the README, and the documented file-based protocol actually runs
/// end-to-end on externally produced corpus files (here written by the
/// synthetic generator in exactly the documented formats).
#[test]
fn criterion_01_real_data_mode() {
    criterion(1, "real-data mode substitution", None, || {
        let readme_path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../README.md");
        let readme = std::fs::read_to_string(readme_path)
            .map_err(|e| format!("{readme_path}: {e}"))?;
        ensure!(
            readme.contains("## Real-data mode"),
            "README.md lacks the real-data mode section"
        );
        for needed in [
            "phones.tsv",
            "lexicon.tsv",
            "align.tsv",
            "posterior",
            "forced align",
            "450k",
            "50k",
        ] {
            ensure!(
                readme.contains(needed),
                "README.md real-data documentation does not mention `{needed}`"
            );
        }

        // The documented protocol, run from a corpus directory alone.
        let corpus = lib(generate_corpus(&small_corpus_spec(80, 31)))?;
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        lib(write_corpus(dir.path(), &corpus))?;
        let data = lib(load_protocol_data(
            dir.path(),
            GopVariant::MeanPosterior,
            AlignUnits::Frames,
        ))?;
        let scorer = lib(data.configure(&ScorerConfig {
            d_hidden: 8,
            filters: 8,
            batch_size: 16,
            dropout_p: 0.0,
            ..ScorerConfig::default()
        }))?;
        let outcome = lib(run_system(
            &data,
            &SystemConfig {
                pretrain: PretrainKind::Mixup,
                real_count: 60,
                mixup_count: 300,
                scorer,
                pretrain_epochs: Some(3),
                finetune_epochs: Some(3),
                seed: 9,
            },
        ))?;
        match outcome.verdict {
            Verdict::Scored(report) => Ok(format!(
                "real-data mode documented; file-based protocol scored {} held-out words (pcc {:.3})",
                report.rows.len(),
                report.pcc
            )),
            Verdict::Degenerate(why) => Err(format!(
                "file-based protocol produced a degenerate model: {why}"
            )),
        }
    });
}

/// Criterion 2: GOP arithmetic. Word score of phone scores 0.3 and 0.9 is
/// 0.6 bit-exactly; a segment whose phone posterior is constant returns
/// that constant (exactly for the mean variant on dyadic values, within
/// 1e-12 otherwise — the constant being the f32 value stored in the
/// posteriorgram); every GOP over a generated corpus lies in [0, 1] under
/// both variants. Budget: 1 s.
#[test]
fn criterion_02_gop_unit_suite() {
    criterion(2, "GOP unit suite", Some(Duration::from_secs(1)), || {
        let w = lib(word_gop(&[0.3, 0.9]))?;
        ensure!(w == 0.6, "word GOP of [0.3, 0.9] is {w:.17}, want 0.6 exactly");

        let inv = lib(PhoneInventory::from_symbols(["A", "B"]))?;
        let map = lib(PhoneClassMap::new(inv.clone(), vec![vec![0], vec![1]]))?;
        let phone_a = inv.get("A").expect("A in inventory");
        for (c, frames, dyadic) in [
            (0.5f32, 4usize, true),
            (0.25, 7, true),
            (0.875, 3, true),
            (0.3, 7, false),
        ] {
            let rows = vec![vec![c, 1.0 - c]; frames];
            let post = lib(Posteriorgram::new(lib(FeatureMatrix::from_rows(&rows))?))?;
            let seg = AlignSegment {
                phone: phone_a,
                start: 0,
                end: frames,
            };
            let expected = c as f64;
            for variant in [GopVariant::MeanPosterior, GopVariant::LogMean] {
                let g = lib(phone_gop(&post, &map, &seg, variant))?;
                ensure!(
                    (g - expected).abs() <= 1e-12,
                    "constant posterior {c} over {frames} frames gave {g:.17} under {}",
                    variant.as_str()
                );
                if dyadic && variant == GopVariant::MeanPosterior {
                    ensure!(
                        g == expected,
                        "dyadic constant {c} not exact under mean-posterior: {g:.17}"
                    );
                }
            }
        }

        let corpus = lib(generate_corpus(&small_corpus_spec(40, 61)))?;
        let mut n_segments = 0usize;
        for utt in &corpus.utterances {
            for seg in utt.record.align.segments() {
                for variant in [GopVariant::MeanPosterior, GopVariant::LogMean] {
                    let g = lib(phone_gop(&utt.record.post, &corpus.map, seg, variant))?;
                    ensure!(
                        (0.0..=1.0).contains(&g),
                        "GOP {g} outside [0, 1] for segment {seg:?} under {}",
                        variant.as_str()
                    );
                }
                n_segments += 1;
            }
        }
        Ok(format!(
            "0.3/0.9 -> 0.6 exact; constants returned; {n_segments} segments x 2 variants all in [0, 1]"
        ))
    });
}

/// Criterion 3: mixup construction. 10,000 generated words each decompose
/// into one pooled segment per pronunciation phone (frame counts add up;
/// features are bitwise copies of pool entries), and the target equals the
/// mean of the matched segments' GOP scores within 1e-12. Generation with a
/// fixed seed is bit-identical across two runs and across worker counts
/// {1, 4}, and a different seed changes the output. Budget: 30 s.
#[test]
fn criterion_03_mixup_properties() {
    criterion(3, "mixup construction", Some(Duration::from_secs(30)), || {
        let corpus = lib(generate_corpus(&small_corpus_spec(160, 41)))?;
        let (pools, _) = lib(build_pool(
            corpus.utterances.iter().map(|u| Ok(u.record.clone())),
            &corpus.map,
            GopVariant::MeanPosterior,
        ))?;
        let inv = pools.inventory().clone();
        // Pronunciations avoid adjacent phone repeats so each drawn segment
        // is one run in the output's per-frame phone track.
        let prons: [&[u32]; 12] = [
            &[0],
            &[1, 4],
            &[2, 5, 0],
            &[3, 6, 1, 7],
            &[4, 0],
            &[5, 2, 7],
            &[6, 3],
            &[7, 5, 2, 0],
            &[0, 2],
            &[1, 6, 4],
            &[2, 7],
            &[3, 0, 5, 1],
        ];
        let entries: Vec<LexiconEntry> = prons
            .iter()
            .enumerate()
            .map(|(i, p)| LexiconEntry {
                word: format!("W{i:02}"),
                phones: p.iter().map(|&x| PhoneId(x)).collect(),
                frequency: (i as u64 % 5) + 1,
            })
            .collect();
        let lexicon = lib(Lexicon::new(inv, entries))?;

        let n = 10_000;
        let seed = 4242;
        let (samples, manifest) = lib(generate_dataset(&pools, &lexicon, n, seed))?;
        ensure!(samples.len() == n, "generated {} words, want {n}", samples.len());

        for (i, s) in samples.iter().enumerate() {
            let pron = &lexicon
                .get(&s.word)
                .ok_or_else(|| format!("sample {i}: word `{}` not in lexicon", s.word))?
                .phones;
            let runs = s.phone_runs();
            ensure!(
                runs.iter().map(|&(p, _)| p).collect::<Vec<_>>() == *pron,
                "sample {i} (`{}`): phone track {:?} does not spell the pronunciation {:?}",
                s.word,
                runs,
                pron
            );
            let total: usize = runs.iter().map(|&(_, len)| len).sum();
            ensure!(
                total == s.frames() && s.mfcc.rows() == total && s.deep.rows() == total,
                "sample {i}: frame counts do not add up ({} runs totaling {total}, sample {} frames)",
                runs.len(),
                s.frames()
            );

            let mut start = 0;
            let mut gops = Vec::with_capacity(runs.len());
            for &(phone, len) in &runs {
                let mfcc = lib(s.mfcc.slice_rows(start, start + len))?;
                let deep = lib(s.deep.slice_rows(start, start + len))?;
                let matches: Vec<&Quadruplet> = pools
                    .pool(phone)
                    .iter()
                    .filter(|q| {
                        q.frames() == len && bits_eq(&q.mfcc_seg, &mfcc) && bits_eq(&q.deep_seg, &deep)
                    })
                    .collect();
                ensure!(
                    !matches.is_empty(),
                    "sample {i}: the {len}-frame segment at {start} is not a bitwise copy of any pool entry"
                );
                ensure!(
                    matches
                        .iter()
                        .all(|q| q.gop.to_bits() == matches[0].gop.to_bits()),
                    "sample {i}: ambiguous pool match with differing GOPs"
                );
                gops.push(matches[0].gop);
                start += len;
            }
            let mean = gops.iter().sum::<f64>() / gops.len() as f64;
            ensure!(
                (s.target - mean).abs() <= 1e-12,
                "sample {i}: target {:.17} vs drawn-GOP mean {mean:.17}",
                s.target
            );
        }

        let (again, manifest_again) = lib(generate_dataset(&pools, &lexicon, n, seed))?;
        ensure!(
            datasets_eq(&samples, &again) && manifest == manifest_again,
            "rerun with the same seed is not bit-identical"
        );
        for workers in [1usize, 4] {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .map_err(|e| e.to_string())?;
            let (w, _) = lib(pool.install(|| generate_dataset(&pools, &lexicon, n, seed)))?;
            ensure!(
                datasets_eq(&samples, &w),
                "{workers}-worker generation differs from the baseline"
            );
        }
        let (other, _) = lib(generate_dataset(&pools, &lexicon, n, seed + 1))?;
        ensure!(
            !datasets_eq(&samples, &other),
            "changing the seed did not change the output"
        );
        Ok(format!(
            "{n} words decomposed into pooled segments; targets = segment-GOP means within 1e-12; bit-identical across reruns and workers {{1, 4}}"
        ))
    });
}

/// Criterion 4: frequency-weighted word sampling. With two words at
/// frequencies 3:1, the count of the frequent word in 40,000 draws lies
/// within 3 binomial standard deviations of 30,000. Budget: 5 s.
#[test]
fn criterion_04_word_frequency_sampling() {
    criterion(4, "word-frequency sampling", Some(Duration::from_secs(5)), || {
        let inv = lib(PhoneInventory::from_symbols(["A", "B"]))?;
        let a = inv.get("A").expect("A");
        let b = inv.get("B").expect("B");
        let mut pools = PhonePoolSet::new(inv.clone());
        for (phone, fill) in [(a, 0.125f32), (b, 0.625f32)] {
            pools.push(lib(Quadruplet::new(
                phone,
                lib(FeatureMatrix::new(2, 3, vec![fill; 6]))?,
                lib(FeatureMatrix::new(2, 4, vec![fill; 8]))?,
                0.5,
            ))?);
        }
        let lexicon = lib(Lexicon::new(
            inv,
            vec![
                LexiconEntry {
                    word: "HI".into(),
                    phones: vec![a],
                    frequency: 3,
                },
                LexiconEntry {
                    word: "LO".into(),
                    phones: vec![b],
                    frequency: 1,
                },
            ],
        ))?;

        let n = 40_000usize;
        let (samples, _) = lib(generate_dataset(&pools, &lexicon, n, 7))?;
        let hi = samples.iter().filter(|s| s.word == "HI").count();
        let p = 0.75;
        let mean = n as f64 * p;
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        let dev = (hi as f64 - mean).abs();
        ensure!(
            dev <= 3.0 * sd,
            "frequent word drawn {hi} times; |{hi} - {mean}| = {dev:.1} exceeds 3 sd = {:.1}",
            3.0 * sd
        );
        Ok(format!(
            "frequent word drawn {hi}/{n} times (expected {mean:.0} +/- {:.0} at 3 sd)",
            3.0 * sd
        ))
    });
}

/// Criterion 5: gradient correctness. The fixed finite-difference suite
/// (central differences, step 1e-5, dropout masks held fixed, f64) passes
/// with max relative error < 1e-4 over every trainable parameter, and so
/// does a dedicated two-sample batch of eight-frame words on the small
/// configuration (d_mfcc 4, d_deep 6, hidden 8). Budget: 60 s.
#[test]
fn criterion_05_gradient_check() {
    criterion(5, "gradient check", Some(Duration::from_secs(60)), || {
        let report = lib(gradcheck::run_default_suite())?;
        for s in &report.scenarios {
            ensure!(s.passed, "scenario failed: {s}");
        }
        ensure!(
            report.max_rel_err() < 1e-4,
            "max relative error {:.3e} >= 1e-4",
            report.max_rel_err()
        );

        let config = ScorerConfig {
            d_mfcc: 4,
            d_deep: 6,
            d_hidden: 8,
            filters: 8,
            n_phones: 5,
            ..ScorerConfig::default()
        };
        let model: ScorerModel<f64> =
            lib(init_model(&config, &mut ChaCha8Rng::seed_from_u64(7)))?;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let words: Vec<WordSample> = (0..2)
            .map(|i| {
                let t = 8usize;
                let mfcc: Vec<f32> = (0..t * config.d_mfcc)
                    .map(|_| rng.random_range(-1.0f32..1.0))
                    .collect();
                let deep: Vec<f32> = (0..t * config.d_deep)
                    .map(|_| rng.random_range(-1.0f32..1.0))
                    .collect();
                let phones: Vec<PhoneId> = (0..t)
                    .map(|_| PhoneId(rng.random_range(0..config.n_phones as u32)))
                    .collect();
                WordSample::new(
                    format!("G{i}"),
                    phones,
                    FeatureMatrix::new(t, config.d_mfcc, mfcc)?,
                    FeatureMatrix::new(t, config.d_deep, deep)?,
                    rng.random_range(0.0..1.0),
                    Provenance::Mixup,
                )
            })
            .collect::<gopmix::Result<_>>()
            .map_err(|e| e.to_string())?;
        let batch: Vec<PreparedSample<f64>> = words
            .iter()
            .map(|w| PreparedSample::prepare(w, &config))
            .collect::<gopmix::Result<_>>()
            .map_err(|e| e.to_string())?;
        let masks = lib(BatchMasks::sample(
            &config,
            &[8, 8],
            &mut ChaCha8Rng::seed_from_u64(9),
        ))?;
        let extra = lib(gradcheck::check_scenario(
            "two eight-frame samples",
            &model,
            &batch,
            &masks,
        ))?;
        ensure!(extra.passed, "dedicated batch-of-two scenario failed: {extra}");

        Ok(format!(
            "{} parameters verified across {} scenarios, max relative error {:.2e}",
            report.total_checked() + extra.n_checked,
            report.scenarios.len() + 1,
            report.max_rel_err().max(extra.max_rel_err)
        ))
    });
}

/// Criterion 6: shape arithmetic. Each block's output length obeys
/// L = (L_in + 2*padding - kernel)/stride + 1 (integer floor); folding that
/// formula over the default architecture (two k=3/p=1 convs with a k=2/s=2
/// max-pool after the second, then a k=1 conv) matches `layer_lengths` for
/// input lengths {2, 5, 10, 37, 200}; length 10 with padding 0 and kernel 3
/// maps to 8; inputs too short for a window are rejected, not mis-shaped.
#[test]
fn criterion_06_shape_ledger() {
    criterion(6, "shape ledger", Some(Duration::from_secs(1)), || {
        // The published formula, written independently of the model code.
        let formula = |l: usize, k: usize, p: usize, s: usize| -> Option<usize> {
            let padded = l + 2 * p;
            if padded < k || s == 0 {
                return None;
            }
            Some((padded - k) / s + 1)
        };

        let cfg = ScorerConfig::default();
        let mut ledger = Vec::new();
        for l0 in [2usize, 5, 10, 37, 200] {
            let want0 = formula(l0, cfg.kernels[0], cfg.paddings[0], 1)
                .ok_or_else(|| format!("formula rejects block 0 at L0={l0}"))?;
            let conv1 = formula(want0, cfg.kernels[1], cfg.paddings[1], 1)
                .ok_or_else(|| format!("formula rejects block 1 at L0={l0}"))?;
            let want1 = formula(conv1, cfg.pool_kernel, 0, cfg.pool_stride)
                .ok_or_else(|| format!("formula rejects the max-pool at L0={l0}"))?;
            let want2 = formula(want1, cfg.kernels[2], cfg.paddings[2], 1)
                .ok_or_else(|| format!("formula rejects block 2 at L0={l0}"))?;
            let got = lib(layer_lengths(&cfg, l0))?;
            ensure!(
                got == [want0, want1, want2],
                "L0={l0}: model reports {got:?}, formula gives [{want0}, {want1}, {want2}]"
            );
            ledger.push(format!("{l0}->{want0}/{want1}/{want2}"));
        }

        ensure!(
            conv_len(10, 3, 0, 1) == Some(8),
            "unpadded k=3 over 10 frames gave {:?}, want 8",
            conv_len(10, 3, 0, 1)
        );
        ensure!(
            conv_len(1, 3, 0, 1).is_none(),
            "a 1-frame input must not fit a k=3 unpadded window"
        );
        ensure!(
            layer_lengths(&cfg, 1).is_err(),
            "a 1-frame word must be rejected by the default architecture"
        );
        Ok(format!(
            "block lengths match the formula ({}); (10, k=3, p=0) -> 8",
            ledger.join(", ")
        ))
    });
}

/// Criterion 7: overfit sanity. Training on 32 human-labeled synthetic
/// words at learning rate 0.002 (batch 32, so one optimizer step per epoch,
/// no dropout, no holdout) reaches MSE < 1e-3 within 2,000 steps.
/// Budget: 2 min.
#[test]
fn criterion_07_overfit_sanity() {
    criterion(7, "overfit sanity", Some(Duration::from_secs(120)), || {
        let corpus = lib(generate_corpus(&SynthSpec {
            n_utts: 48,
            n_phones: 10,
            lexicon_size: 16,
            seed: 53,
            ..SynthSpec::default()
        }))?;
        let data = lib(protocol_data(&corpus, GopVariant::MeanPosterior))?;
        ensure!(
            data.test.len() >= 32,
            "corpus too small: only {} labeled test words",
            data.test.len()
        );
        let words: Vec<WordSample> = data.test.iter().take(32).map(|lw| lw.sample.clone()).collect();

        let config = lib(data.configure(&ScorerConfig {
            d_hidden: 16,
            filters: 16,
            epochs: 2000,
            batch_size: 32,
            learning_rate: 0.002,
            dropout_p: 0.0,
            holdout_fraction: 0.0,
            seed: 3,
            ..ScorerConfig::default()
        }))?;
        let mut model: ScorerModel<f32> =
            lib(init_model(&config, &mut ChaCha8Rng::seed_from_u64(1)))?;
        let report = lib(train(&mut model, &words, TargetKind::Finetune))?;
        ensure!(
            report.n_train == 32 && report.train_loss.len() == 2000,
            "expected 2000 single-batch epochs over 32 words, got {} epochs over {}",
            report.train_loss.len(),
            report.n_train
        );
        let min = report.train_loss.iter().cloned().fold(f64::INFINITY, f64::min);
        let hit = report.train_loss.iter().position(|&l| l < 1e-3);
        match hit {
            // train_loss[e] is measured before the (e+1)-th update, i.e.
            // after e optimizer steps.
            Some(step) => Ok(format!(
                "MSE fell below 1e-3 after {step} steps (min {min:.2e})"
            )),
            None => Err(format!(
                "MSE never fell below 1e-3 in 2000 steps (min {min:.2e})"
            )),
        }
    });
}

/// Criterion 8: the ordering effect at desk scale. On the default synthetic
/// corpus with seeds {1..5}, mean test correlation satisfies
/// mixup-pretrain (2k real + 18k generated) >= real-pretrain (2k) >=
/// no-pretrain, and mixup-pretrain beats no-pretrain by >= 0.03 absolute.
/// Individual seeds may deviate; the ordering is required of the seed
/// means. Budget: 30 min.
#[test]
fn criterion_08_pretraining_ordering() {
    criterion(8, "pretraining ordering", Some(Duration::from_secs(1800)), || {
        let corpus = lib(generate_corpus(&SynthSpec::default()))?;
        let data = lib(protocol_data(&corpus, GopVariant::MeanPosterior))?;
        let scorer = lib(data.configure(&ScorerConfig::default()))?;
        let seeds = [1u64, 2, 3, 4, 5];
        let result = lib(run_comparison(
            &data,
            &ComparisonSpec {
                real_count: 2_000,
                mixup_count: 18_000,
                scorer,
                pretrain_epochs: Some(4),
                finetune_epochs: Some(8),
            },
            &seeds,
        ))?;

        for row in &result.rows {
            ensure!(
                row.pcc.is_some(),
                "system `{}` seed {} was degenerate: {}",
                row.system.as_str(),
                row.seed,
                row.note.as_deref().unwrap_or("no note")
            );
        }
        let mean = |k: PretrainKind| -> Result<f64, String> {
            result
                .mean(k)
                .ok_or_else(|| format!("no scored seeds for system `{}`", k.as_str()))
        };
        let none = mean(PretrainKind::None)?;
        let real = mean(PretrainKind::Real)?;
        let mixup = mean(PretrainKind::Mixup)?;
        ensure!(
            mixup >= real,
            "mixup-pretrain mean pcc {mixup:.4} < real-pretrain {real:.4}"
        );
        ensure!(
            real >= none,
            "real-pretrain mean pcc {real:.4} < no-pretrain {none:.4}"
        );
        ensure!(
            mixup - none >= 0.03,
            "mixup-pretrain led no-pretrain by only {:.4} (< 0.03): {mixup:.4} vs {none:.4}",
            mixup - none
        );
        Ok(format!(
            "5-seed mean pcc: none {none:.4} <= real {real:.4} <= mixup {mixup:.4}; gap {:.4} >= 0.03",
            mixup - none
        ))
    });
}

/// Criterion 9: correlation identities. pcc(x, x) = 1 and pcc(x, -x) = -1;
/// a positive affine map of either argument changes nothing; the four-point
/// example below equals 0.8; all to 1e-12. Constant vectors are a
/// categorized error, not a number.
#[test]
fn criterion_09_pcc_suite() {
    criterion(9, "correlation suite", Some(Duration::from_secs(1)), || {
        let x = [0.12, 0.47, 0.33, 0.91, 0.58, 0.06, 0.74];
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let affine: Vec<f64> = x.iter().map(|v| 2.5 * v - 0.7).collect();
        let z = [0.9, 0.1, 0.5, 0.2, 0.8, 0.35, 0.6];

        let self_r = lib(pearson_pcc(&x, &x))?;
        ensure!((self_r - 1.0).abs() <= 1e-12, "pcc(x, x) = {self_r:.17}");
        let neg_r = lib(pearson_pcc(&x, &neg))?;
        ensure!((neg_r + 1.0).abs() <= 1e-12, "pcc(x, -x) = {neg_r:.17}");
        let aff_r = lib(pearson_pcc(&x, &affine))?;
        ensure!(
            (aff_r - 1.0).abs() <= 1e-12,
            "pcc(x, 2.5x - 0.7) = {aff_r:.17}"
        );
        let base = lib(pearson_pcc(&x, &z))?;
        let mapped = lib(pearson_pcc(&affine, &z))?;
        ensure!(
            (base - mapped).abs() <= 1e-12,
            "affine map of one argument moved pcc from {base:.17} to {mapped:.17}"
        );

        // Hand-derived: deviations give sxy = 8, sxx = 5, syy = 20, so
        // r = 8 / sqrt(5 * 20) = 0.8.
        let four = lib(pearson_pcc(&[1.0, 2.0, 3.0, 4.0], &[1.0, 5.0, 3.0, 7.0]))?;
        ensure!(
            (four - 0.8).abs() <= 1e-12,
            "four-point example gave {four:.17}, want 0.8"
        );

        match pearson_pcc(&[0.4; 5], &x[..5]) {
            Err(e @ Error::ConstantVector(_)) => {
                ensure!(e.exit_code() == 4, "constant-vector error not categorized numeric");
            }
            other => {
                return Err(format!(
                    "constant vector should be a categorized error, got {other:?}"
                ))
            }
        }
        Ok("identity, inversion, affine invariance, and the 0.8 example all within 1e-12".into())
    });
}

/// Criterion 10: persistence. Matrix, pool, dataset, and checkpoint files
/// survive write -> read bit-exactly (including negative zero, subnormals,
/// and f32 extremes), and truncated, magic-corrupted, and
/// trailing-garbage fixtures of each format are rejected with data-category
/// errors naming the file.
#[test]
fn criterion_10_format_round_trips() {
    criterion(10, "format round-trips", Some(Duration::from_secs(30)), || {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;

        let matrix = lib(FeatureMatrix::new(
            3,
            4,
            vec![
                0.0,
                -0.0,
                f32::MAX,
                f32::MIN_POSITIVE,
                1.0e-42, // subnormal
                -1.0,
                0.25,
                1.0e30,
                -3.5,
                42.0,
                7.0,
                -0.125,
            ],
        ))?;
        let m_path = dir.path().join("m.gmx");
        lib(write_matrix_binary(&m_path, &matrix))?;
        let m_back = lib(read_matrix(&m_path))?;
        ensure!(bits_eq(&matrix, &m_back), "matrix round-trip not bit-exact");
        ensure!(
            m_back.data()[1].to_bits() == (-0.0f32).to_bits(),
            "negative zero lost its sign bit"
        );

        let corpus = lib(generate_corpus(&small_corpus_spec(30, 71)))?;
        let (pools, _) = lib(build_pool(
            corpus.utterances.iter().map(|u| Ok(u.record.clone())),
            &corpus.map,
            GopVariant::MeanPosterior,
        ))?;
        let p_path = dir.path().join("p.gmpl");
        lib(write_pool(&p_path, &pools))?;
        let pools_back = lib(read_pool(&p_path))?;
        ensure!(
            pools_back.inventory().symbols() == pools.inventory().symbols()
                && pools_back.total() == pools.total()
                && pools.phones().all(|ph| {
                    let (a, b) = (pools.pool(ph), pools_back.pool(ph));
                    a.len() == b.len()
                        && a.iter().zip(b).all(|(x, y)| {
                            x.phone == y.phone
                                && x.gop.to_bits() == y.gop.to_bits()
                                && bits_eq(&x.mfcc_seg, &y.mfcc_seg)
                                && bits_eq(&x.deep_seg, &y.deep_seg)
                        })
                }),
            "pool round-trip not bit-exact"
        );

        let (samples, _) = lib(generate_dataset(&pools, &corpus.lexicon, 40, 3))?;
        let d_path = dir.path().join("d.gmds");
        lib(write_dataset(&d_path, &samples, pools.inventory()))?;
        let (samples_back, inv_back) = lib(read_dataset(&d_path))?;
        ensure!(
            datasets_eq(&samples, &samples_back)
                && inv_back.symbols() == pools.inventory().symbols(),
            "dataset round-trip not bit-exact"
        );

        let config = ScorerConfig {
            d_mfcc: corpus.spec.d_mfcc,
            d_deep: corpus.spec.d_deep,
            d_hidden: 8,
            filters: 8,
            n_phones: corpus.inventory.len(),
            ..ScorerConfig::default()
        };
        let model: ScorerModel<f32> =
            lib(init_model(&config, &mut ChaCha8Rng::seed_from_u64(5)))?;
        let c_path = dir.path().join("c.gmck");
        lib(write_checkpoint(&c_path, &model, &corpus.inventory))?;
        let (model_back, ck_inv) = lib(read_checkpoint(&c_path))?;
        ensure!(
            model_back == model && ck_inv.symbols() == corpus.inventory.symbols(),
            "checkpoint round-trip not bit-exact"
        );

        // Malformed fixtures: truncation, corrupted magic, trailing bytes.
        let mut rejected = 0usize;
        for path in [&m_path, &p_path, &d_path, &c_path] {
            let bytes = std::fs::read(path).map_err(|e| e.to_string())?;
            let name = path.file_name().unwrap().to_string_lossy().into_owned();
            let cases: [(&str, Vec<u8>); 3] = [
                ("truncated", bytes[..bytes.len() / 2].to_vec()),
                ("bad-magic", {
                    let mut b = bytes.clone();
                    b[0] ^= 0xFF;
                    b
                }),
                ("trailing-garbage", {
                    let mut b = bytes.clone();
                    b.extend_from_slice(&[0xAB; 7]);
                    b
                }),
            ];
            for (kind, mutated) in cases {
                let bad = dir.path().join(format!("{kind}-{name}"));
                std::fs::write(&bad, &mutated).map_err(|e| e.to_string())?;
                let err = match path.extension().and_then(|e| e.to_str()) {
                    Some("gmx") => read_matrix(&bad).map(|_| ()).err(),
                    Some("gmpl") => read_pool(&bad).map(|_| ()).err(),
                    Some("gmds") => read_dataset(&bad).map(|_| ()).err(),
                    Some("gmck") => read_checkpoint(&bad).map(|_| ()).err(),
                    _ => return Err(format!("unexpected fixture {bad:?}")),
                };
                let err = err.ok_or_else(|| format!("{kind} {name} was accepted"))?;
                ensure!(
                    err.exit_code() == 3,
                    "{kind} {name}: error not categorized as a data error: {err}"
                );
                let shown = err.to_string();
                ensure!(
                    shown.contains(&name),
                    "{kind} {name}: error does not name the file: {shown}"
                );
                rejected += 1;
            }
        }
        Ok(format!(
            "4 formats round-trip bit-exactly; {rejected}/12 malformed fixtures rejected with data errors"
        ))
    });
}

/// The provenance wall between phases, exercised end to end: pretraining
/// refuses human-labeled samples and fine-tuning refuses GOP-labeled ones.
/// Not a numbered criterion, but the property the split criteria assume.
#[test]
fn training_phases_enforce_sample_provenance() {
    let _gate = GATE.lock().unwrap_or_else(|poisoned| poisoned.into_inner());
    let corpus = generate_corpus(&small_corpus_spec(30, 83)).unwrap();
    let data = protocol_data(&corpus, GopVariant::MeanPosterior).unwrap();
    let config = data
        .configure(&ScorerConfig {
            d_hidden: 8,
            filters: 8,
            epochs: 1,
            batch_size: 8,
            ..ScorerConfig::default()
        })
        .unwrap();
    let mut model: ScorerModel<f32> =
        init_model(&config, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();

    let labeled: Vec<WordSample> = data.test.iter().take(8).map(|l| l.sample.clone()).collect();
    let err = train(&mut model, &labeled, TargetKind::Pretrain).unwrap_err();
    assert!(err.to_string().contains("human_labeled"), "{err}");

    let err = train(&mut model, &data.real[..8.min(data.real.len())], TargetKind::Finetune)
        .unwrap_err();
    assert!(err.to_string().contains("real_unlabeled"), "{err}");
}
