//! Synthetic desk-scale corpora with known ground truth.
//!
//! Every phone instance carries a latent quality `q ∈ [q_low, q_high]`:
//!
//! * its posteriorgram rows put mass `clamp(q + δ·4q(1−q), 0, 1)` on the
//!   phone's classes (δ is per-frame Gaussian jitter, damped to vanish at
//!   q = 0 and q = 1) and spread the rest uniformly, so the mean-posterior
//!   GOP of the segment recovers `q` almost exactly;
//! * its feature rows are a per-phone Gaussian prototype shifted along a
//!   per-phone direction by `shift_scale·(q − 0.5)` plus noise, so the
//!   features are informative about quality;
//! * each word's human score is `clip(mean(q) + ε, 0, 1)·10` with Gaussian
//!   ε, which keeps the GOP-to-human correlation high but below 1.
//!
//! Generation is deterministic for a given spec: corpus-level draws
//! (pronunciations, prototypes) use random stream 0, utterance `u` uses
//! stream `1 + u`, so utterances can be generated in parallel in any order.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gop::PhoneClassMap;
use crate::io::{
    write_alignments, write_labels, write_lexicon, write_manifest, write_matrix_binary,
    write_phone_map, LabelRow, LabelTable, ManifestLine,
};
use crate::types::{
    AlignSegment, FeatureMatrix, Lexicon, LexiconEntry, PhoneAlignment, PhoneInventory,
    Posteriorgram, UtteranceRecord,
};

/// Noise and signal-strength knobs of the synthetic quality model.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QualityModel {
    /// Per-frame posterior jitter σ; damped by `4q(1−q)` so the extremes
    /// stay exact.
    pub frame_jitter: f64,
    /// MFCC feature noise σ.
    pub mfcc_noise: f64,
    /// Deep feature noise σ.
    pub deep_noise: f64,
    /// Magnitude of the quality-dependent feature shift.
    pub shift_scale: f64,
    /// Human-score noise σ on the [0, 1] scale.
    pub score_noise: f64,
    /// Latent quality is uniform on `[q_low, q_high]`.
    pub q_low: f64,
    pub q_high: f64,
}

impl Default for QualityModel {
    fn default() -> Self {
        QualityModel {
            frame_jitter: 0.01,
            mfcc_noise: 0.8,
            deep_noise: 0.5,
            shift_scale: 2.0,
            score_noise: 0.05,
            q_low: 0.1,
            q_high: 1.0,
        }
    }
}

/// Corpus dimensions and the quality model; serializable as a JSON config.
///
/// The defaults are desk-scale: small enough to train the scorer in
/// minutes while exercising every pipeline stage.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub n_utts: usize,
    pub n_phones: usize,
    pub lexicon_size: usize,
    /// Inclusive range of words per utterance.
    pub words_per_utt: [usize; 2],
    /// Inclusive range of phones per lexicon word.
    pub phones_per_word: [usize; 2],
    /// Inclusive range of frames per phone instance.
    pub frames_per_phone: [usize; 2],
    pub d_mfcc: usize,
    pub d_deep: usize,
    /// Posterior classes; distributed contiguously over the phones.
    pub n_classes: usize,
    pub quality: QualityModel,
    /// Utterance-level split ratios: unlabeled pool-source, labeled train,
    /// labeled test. Must sum to 1.
    pub split: [f64; 3],
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_utts: 2000,
            n_phones: 40,
            lexicon_size: 300,
            words_per_utt: [2, 6],
            phones_per_word: [2, 5],
            frames_per_phone: [3, 12],
            d_mfcc: 13,
            d_deep: 32,
            n_classes: 120,
            quality: QualityModel::default(),
            split: [0.5, 0.25, 0.25],
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let positive: [(&str, usize); 6] = [
            ("n_utts", self.n_utts),
            ("n_phones", self.n_phones),
            ("lexicon_size", self.lexicon_size),
            ("d_mfcc", self.d_mfcc),
            ("d_deep", self.d_deep),
            ("n_classes", self.n_classes),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        for (name, [lo, hi]) in [
            ("words_per_utt", self.words_per_utt),
            ("phones_per_word", self.phones_per_word),
            ("frames_per_phone", self.frames_per_phone),
        ] {
            if lo == 0 || hi < lo {
                return Err(Error::Config(format!(
                    "{name} range [{lo}, {hi}] must satisfy 1 <= lo <= hi"
                )));
            }
        }
        if self.n_classes < self.n_phones || self.n_classes < 2 {
            return Err(Error::Config(format!(
                "n_classes {} must be at least max(n_phones, 2) = {}",
                self.n_classes,
                self.n_phones.max(2)
            )));
        }
        let q = &self.quality;
        if !(0.0 <= q.q_low && q.q_low < q.q_high && q.q_high <= 1.0) {
            return Err(Error::Config(format!(
                "quality range [{}, {}] must satisfy 0 <= q_low < q_high <= 1",
                q.q_low, q.q_high
            )));
        }
        for (name, v) in [
            ("frame_jitter", q.frame_jitter),
            ("mfcc_noise", q.mfcc_noise),
            ("deep_noise", q.deep_noise),
            ("shift_scale", q.shift_scale),
            ("score_noise", q.score_noise),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and >= 0")));
            }
        }
        validate_ratios(self.split)?;
        Ok(())
    }
}

fn validate_ratios(ratios: [f64; 3]) -> Result<()> {
    if ratios.iter().any(|&r| !(r > 0.0)) {
        return Err(Error::Config(format!(
            "split ratios {ratios:?} must all be positive"
        )));
    }
    let sum: f64 = ratios.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split ratios {ratios:?} sum to {sum}, expected 1"
        )));
    }
    Ok(())
}

/// Utterance indices of the three splits: unlabeled pool-source, labeled
/// train, labeled test. Disjoint and exhaustive, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SplitIndices {
    pub pool: Vec<usize>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded utterance-level split. Cut points are `round(n·r)` running sums,
/// so 100 utterances at 0.5/0.25/0.25 give exactly 50/25/25.
pub fn split_indices(n: usize, ratios: [f64; 3], seed: u64) -> Result<SplitIndices> {
    validate_ratios(ratios)?;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let c1 = (n as f64 * ratios[0]).round() as usize;
    let c2 = (n as f64 * (ratios[0] + ratios[1])).round() as usize;
    if c1 == 0 || c2 <= c1 || c2 >= n {
        return Err(Error::Config(format!(
            "split of {n} utterances at {ratios:?} leaves an empty part"
        )));
    }
    let mut pool = idx[..c1].to_vec();
    let mut train = idx[c1..c2].to_vec();
    let mut test = idx[c2..].to_vec();
    pool.sort_unstable();
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitIndices { pool, train, test })
}

/// One generated utterance with its ground truth: the latent quality of
/// each alignment segment and the noisy human score (0–10) of each word.
#[derive(Debug, Clone)]
pub struct SynthUtterance {
    pub record: UtteranceRecord,
    pub latent_q: Vec<f64>,
    pub word_scores: Vec<f64>,
}

/// A fully generated corpus, in memory.
#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub spec: SynthSpec,
    pub inventory: Arc<PhoneInventory>,
    pub map: PhoneClassMap,
    pub lexicon: Lexicon,
    pub utterances: Vec<SynthUtterance>,
    pub splits: SplitIndices,
}

/// Per-phone feature prototypes: a Gaussian center and a unit-norm shift
/// direction per stream.
struct Prototypes {
    mfcc_center: Vec<Vec<f64>>,
    mfcc_shift: Vec<Vec<f64>>,
    deep_center: Vec<Vec<f64>>,
    deep_shift: Vec<Vec<f64>>,
}

fn normal_vec<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample(StandardNormal)).collect()
}

fn unit_vec<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<f64> {
    let mut v = normal_vec(rng, d);
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

fn draw_prototypes<R: Rng + ?Sized>(rng: &mut R, spec: &SynthSpec) -> Prototypes {
    let n = spec.n_phones;
    Prototypes {
        mfcc_center: (0..n).map(|_| normal_vec(rng, spec.d_mfcc)).collect(),
        mfcc_shift: (0..n).map(|_| unit_vec(rng, spec.d_mfcc)).collect(),
        deep_center: (0..n).map(|_| normal_vec(rng, spec.d_deep)).collect(),
        deep_shift: (0..n).map(|_| unit_vec(rng, spec.d_deep)).collect(),
    }
}

/// Contiguous class ranges: phone `i` owns `[i·C/P, (i+1)·C/P)`.
fn class_assignment(n_phones: usize, n_classes: usize) -> Vec<Vec<usize>> {
    (0..n_phones)
        .map(|i| (i * n_classes / n_phones..(i + 1) * n_classes / n_phones).collect())
        .collect()
}

/// One feature row around the phone's prototype, shifted by quality.
fn feature_row<R: Rng + ?Sized>(
    rng: &mut R,
    center: &[f64],
    shift: &[f64],
    q: f64,
    shift_scale: f64,
    noise: f64,
) -> Vec<f32> {
    center
        .iter()
        .zip(shift)
        .map(|(&c, &s)| {
            let eps: f64 = rng.sample(StandardNormal);
            (c + shift_scale * (q - 0.5) * s + noise * eps) as f32
        })
        .collect()
}

/// One posterior row putting mass `m` on the phone's `k` classes and the
/// rest uniformly on the others.
fn posterior_row(classes: &std::ops::Range<usize>, n_classes: usize, m: f64) -> Vec<f32> {
    let k = classes.len();
    let on = (m / k as f64) as f32;
    let off = ((1.0 - m) / (n_classes - k) as f64) as f32;
    (0..n_classes)
        .map(|c| if classes.contains(&c) { on } else { off })
        .collect()
}

struct UttPlan<'a> {
    spec: &'a SynthSpec,
    lexicon_words: &'a [(String, Vec<usize>)],
    word_dist: &'a WeightedIndex<f64>,
    prototypes: &'a Prototypes,
    class_ranges: &'a [std::ops::Range<usize>],
}

fn generate_utterance(plan: &UttPlan<'_>, u: usize) -> Result<SynthUtterance> {
    let spec = plan.spec;
    let q_model = &spec.quality;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(1 + u as u64);

    let n_words = rng.random_range(spec.words_per_utt[0]..=spec.words_per_utt[1]);
    let mut text = Vec::with_capacity(n_words);
    let mut segments = Vec::new();
    let mut latent_q = Vec::new();
    let mut word_scores = Vec::with_capacity(n_words);
    let mut mfcc_rows: Vec<Vec<f32>> = Vec::new();
    let mut deep_rows: Vec<Vec<f32>> = Vec::new();
    let mut post_rows: Vec<Vec<f32>> = Vec::new();
    let mut frame = 0usize;

    for _ in 0..n_words {
        let (word, phones) = &plan.lexicon_words[plan.word_dist.sample(&mut rng)];
        text.push(word.clone());
        let mut q_sum = 0.0;
        for &p in phones {
            let frames = rng.random_range(spec.frames_per_phone[0]..=spec.frames_per_phone[1]);
            let q = rng.random_range(q_model.q_low..=q_model.q_high);
            q_sum += q;
            latent_q.push(q);
            segments.push(AlignSegment {
                phone: crate::types::PhoneId(p as u32),
                start: frame,
                end: frame + frames,
            });
            frame += frames;
            for _ in 0..frames {
                mfcc_rows.push(feature_row(
                    &mut rng,
                    &plan.prototypes.mfcc_center[p],
                    &plan.prototypes.mfcc_shift[p],
                    q,
                    q_model.shift_scale,
                    q_model.mfcc_noise,
                ));
                deep_rows.push(feature_row(
                    &mut rng,
                    &plan.prototypes.deep_center[p],
                    &plan.prototypes.deep_shift[p],
                    q,
                    q_model.shift_scale,
                    q_model.deep_noise,
                ));
                let jitter: f64 = rng.sample(StandardNormal);
                let m = (q + jitter * q_model.frame_jitter * 4.0 * q * (1.0 - q))
                    .clamp(0.0, 1.0);
                post_rows.push(posterior_row(&plan.class_ranges[p], spec.n_classes, m));
            }
        }
        let eps: f64 = rng.sample(StandardNormal);
        let score01 = (q_sum / phones.len() as f64 + eps * q_model.score_noise).clamp(0.0, 1.0);
        word_scores.push(score01 * 10.0);
    }

    let record = UtteranceRecord {
        utt_id: format!("u{u:05}"),
        mfcc: FeatureMatrix::from_rows(&mfcc_rows)?,
        deep: FeatureMatrix::from_rows(&deep_rows)?,
        post: Posteriorgram::new(FeatureMatrix::from_rows(&post_rows)?)?,
        align: PhoneAlignment::new(segments)?,
        text,
    }
    .validated()?;
    Ok(SynthUtterance {
        record,
        latent_q,
        word_scores,
    })
}

/// Generates a full corpus in memory. Deterministic given the spec;
/// utterances are generated in parallel on independent substreams.
pub fn generate_corpus(spec: &SynthSpec) -> Result<SynthCorpus> {
    spec.validate()?;
    let inventory =
        PhoneInventory::from_symbols((0..spec.n_phones).map(|i| format!("P{i:02}")))?;
    let class_sets = class_assignment(spec.n_phones, spec.n_classes);
    let class_ranges: Vec<std::ops::Range<usize>> = class_sets
        .iter()
        .map(|s| s[0]..s[s.len() - 1] + 1)
        .collect();
    let map = PhoneClassMap::new(inventory.clone(), class_sets)?;

    // Corpus-level draws on stream 0: pronunciations, then prototypes.
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(0);
    let lexicon_words: Vec<(String, Vec<usize>)> = (0..spec.lexicon_size)
        .map(|i| {
            let k = rng.random_range(spec.phones_per_word[0]..=spec.phones_per_word[1]);
            let phones = (0..k)
                .map(|_| rng.random_range(0..spec.n_phones))
                .collect();
            (format!("W{i:03}"), phones)
        })
        .collect();
    let prototypes = draw_prototypes(&mut rng, spec);
    // Transcript word draws are Zipf-weighted by lexicon rank.
    let word_dist = WeightedIndex::new((0..spec.lexicon_size).map(|i| 1.0 / (i + 1) as f64))
        .map_err(|e| Error::Config(format!("unusable lexicon weights: {e}")))?;

    let plan = UttPlan {
        spec,
        lexicon_words: &lexicon_words,
        word_dist: &word_dist,
        prototypes: &prototypes,
        class_ranges: &class_ranges,
    };
    let utterances: Vec<SynthUtterance> = (0..spec.n_utts)
        .into_par_iter()
        .map(|u| generate_utterance(&plan, u))
        .collect::<Result<_>>()?;

    // Lexicon frequencies are the observed counts in the corpus
    // transcripts (minimum 1 so every word stays drawable).
    let mut counts = vec![0u64; spec.lexicon_size];
    let index_of: std::collections::HashMap<&str, usize> = lexicon_words
        .iter()
        .enumerate()
        .map(|(i, (w, _))| (w.as_str(), i))
        .collect();
    for utt in &utterances {
        for w in &utt.record.text {
            counts[index_of[w.as_str()]] += 1;
        }
    }
    let entries = lexicon_words
        .iter()
        .zip(&counts)
        .map(|((word, phones), &count)| LexiconEntry {
            word: word.clone(),
            phones: phones
                .iter()
                .map(|&p| crate::types::PhoneId(p as u32))
                .collect(),
            frequency: count.max(1),
        })
        .collect();
    let lexicon = Lexicon::new(inventory.clone(), entries)?;
    let splits = split_indices(spec.n_utts, spec.split, spec.seed)?;

    Ok(SynthCorpus {
        spec: spec.clone(),
        inventory,
        map,
        lexicon,
        utterances,
        splits,
    })
}

/// Where [`write_corpus`] put everything.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusPaths {
    pub root: PathBuf,
    pub phone_map: PathBuf,
    pub lexicon: PathBuf,
    pub alignments: PathBuf,
    /// Manifests of the pool-source, train, and test splits.
    pub pool_manifest: PathBuf,
    pub train_manifest: PathBuf,
    pub test_manifest: PathBuf,
    pub train_labels: PathBuf,
    pub test_labels: PathBuf,
    pub spec_json: PathBuf,
}

impl CorpusPaths {
    pub fn under(root: &Path) -> Self {
        CorpusPaths {
            root: root.to_path_buf(),
            phone_map: root.join("phones.tsv"),
            lexicon: root.join("lexicon.tsv"),
            alignments: root.join("align.tsv"),
            pool_manifest: root.join("manifest.pool.jsonl"),
            train_manifest: root.join("manifest.train.jsonl"),
            test_manifest: root.join("manifest.test.jsonl"),
            train_labels: root.join("labels.train.tsv"),
            test_labels: root.join("labels.test.tsv"),
            spec_json: root.join("synth.json"),
        }
    }
}

/// Writes the corpus in the pipeline's file formats: per-utterance feature,
/// deep, and posterior matrices under `feats/`, one shared alignment file,
/// one manifest per split, and human-score labels for the two labeled
/// splits.
pub fn write_corpus(root: &Path, corpus: &SynthCorpus) -> Result<CorpusPaths> {
    let paths = CorpusPaths::under(root);
    let feats = root.join("feats");
    std::fs::create_dir_all(&feats).map_err(|e| Error::io(&feats, e))?;

    write_phone_map(&paths.phone_map, &corpus.map)?;
    write_lexicon(&paths.lexicon, &corpus.lexicon)?;

    let alignments: Vec<(String, PhoneAlignment)> = corpus
        .utterances
        .iter()
        .map(|u| (u.record.utt_id.clone(), u.record.align.clone()))
        .collect();
    write_alignments(&paths.alignments, &alignments, &corpus.inventory)?;

    let mut lines = Vec::with_capacity(corpus.utterances.len());
    for u in &corpus.utterances {
        let rec = &u.record;
        let id = &rec.utt_id;
        write_matrix_binary(&feats.join(format!("{id}.mfcc.gmx")), &rec.mfcc)?;
        write_matrix_binary(&feats.join(format!("{id}.deep.gmx")), &rec.deep)?;
        write_matrix_binary(&feats.join(format!("{id}.post.gmx")), rec.post.matrix())?;
        lines.push(ManifestLine {
            utt_id: id.clone(),
            mfcc: format!("feats/{id}.mfcc.gmx"),
            deep: format!("feats/{id}.deep.gmx"),
            post: format!("feats/{id}.post.gmx"),
            align: "align.tsv".into(),
            text: rec.text.join(" "),
        });
    }
    let manifest_for = |idx: &[usize]| -> Vec<ManifestLine> {
        idx.iter().map(|&i| lines[i].clone()).collect()
    };
    write_manifest(&paths.pool_manifest, &manifest_for(&corpus.splits.pool))?;
    write_manifest(&paths.train_manifest, &manifest_for(&corpus.splits.train))?;
    write_manifest(&paths.test_manifest, &manifest_for(&corpus.splits.test))?;

    let labels_for = |idx: &[usize]| -> Result<LabelTable> {
        let mut rows = Vec::new();
        for &i in idx {
            let u = &corpus.utterances[i];
            for (word_index, (word, &score)) in
                u.record.text.iter().zip(&u.word_scores).enumerate()
            {
                rows.push(LabelRow {
                    utt_id: u.record.utt_id.clone(),
                    word_index,
                    word: word.clone(),
                    score,
                });
            }
        }
        LabelTable::new(rows)
    };
    write_labels(&paths.train_labels, &labels_for(&corpus.splits.train)?)?;
    write_labels(&paths.test_labels, &labels_for(&corpus.splits.test)?)?;

    let spec_json = serde_json::to_string_pretty(&corpus.spec)
        .map_err(|e| Error::InvalidInput(format!("unserializable synth spec: {e}")))?;
    std::fs::write(&paths.spec_json, spec_json + "\n")
        .map_err(|e| Error::io(&paths.spec_json, e))?;
    Ok(paths)
}
