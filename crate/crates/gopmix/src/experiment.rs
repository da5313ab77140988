//! Experiment protocol: build the three systems (no-pretrain,
//! real-pretrain, mixup-pretrain) from one corpus, compare them over a
//! seed set, and sweep the pretraining-set size per feature set.
//!
//! One system run is: optionally pretrain on GOP-target data (real
//! unlabeled words, optionally mixed with generated words), then fine-tune
//! on human-labeled words, then evaluate Pearson correlation on the
//! held-out labeled test words. All randomness of a run derives from one
//! master seed via fixed per-stage substreams, so runs are reproducible
//! and stages are decorrelated.

use std::path::Path;

use crate::error::{Error, Result};
use crate::eval::{build_report, EvalReport};
use crate::gop::GopVariant;
use crate::io::{read_labels, read_lexicon, read_phone_map, AlignUnits, CorpusReader, LabelRow, LabelTable};
use crate::mixup::{generate_dataset, mix_pretrain_corpus};
use crate::pool::{build_pool, PoolBuildStats};
use crate::scorer::{
    init_model, predict, train, FeatureSet, ScorerConfig, ScorerModel, TargetKind, TrainReport,
};
use crate::synth::{CorpusPaths, SynthCorpus};
use crate::types::{Lexicon, PhonePoolSet, Provenance, WordSample};
use crate::words::{labeled_word_samples, real_word_samples, LabeledWord};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// Everything a system run needs, prepared once per corpus: the phone
/// pools and real GOP-target words from the unlabeled split, and the
/// human-labeled words of the train and test splits.
pub struct ProtocolData {
    pub pools: PhonePoolSet,
    pub pool_stats: PoolBuildStats,
    pub lexicon: Lexicon,
    /// GOP-target words from the pool-source split (pretraining).
    pub real: Vec<WordSample>,
    /// Human-target words of the labeled train split (fine-tuning).
    pub finetune: Vec<WordSample>,
    /// Human-target words of the labeled test split (evaluation).
    pub test: Vec<LabeledWord>,
}

fn label_table(corpus: &SynthCorpus, indices: &[usize]) -> Result<LabelTable> {
    let mut rows = Vec::new();
    for &i in indices {
        let u = &corpus.utterances[i];
        for (word_index, (word, &score)) in u.record.text.iter().zip(&u.word_scores).enumerate()
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
}

/// Builds the protocol inputs from an in-memory synthetic corpus.
pub fn protocol_data(corpus: &SynthCorpus, variant: GopVariant) -> Result<ProtocolData> {
    let records = corpus
        .splits
        .pool
        .iter()
        .map(|&i| Ok(corpus.utterances[i].record.clone()));
    let (pools, pool_stats) = build_pool(records, &corpus.map, variant)?;

    let mut real = Vec::new();
    for &i in &corpus.splits.pool {
        real.extend(real_word_samples(
            &corpus.utterances[i].record,
            &corpus.lexicon,
            &corpus.map,
            variant,
        )?);
    }

    let train_labels = label_table(corpus, &corpus.splits.train)?;
    let mut finetune = Vec::new();
    for &i in &corpus.splits.train {
        let labeled =
            labeled_word_samples(&corpus.utterances[i].record, &corpus.lexicon, &train_labels)?;
        finetune.extend(labeled.into_iter().map(|lw| lw.sample));
    }

    let test_labels = label_table(corpus, &corpus.splits.test)?;
    let mut test = Vec::new();
    for &i in &corpus.splits.test {
        test.extend(labeled_word_samples(
            &corpus.utterances[i].record,
            &corpus.lexicon,
            &test_labels,
        )?);
    }

    Ok(ProtocolData {
        pools,
        pool_stats,
        lexicon: corpus.lexicon.clone(),
        real,
        finetune,
        test,
    })
}

/// Loads the protocol inputs from a corpus directory on disk — the layout
/// written by [`crate::synth::write_corpus`], or the same files produced
/// externally from real recordings.
pub fn load_protocol_data(
    root: &Path,
    variant: GopVariant,
    units: AlignUnits,
) -> Result<ProtocolData> {
    let paths = CorpusPaths::under(root);
    let map = read_phone_map(&paths.phone_map)?;
    let inventory = map.inventory().clone();
    let lexicon = read_lexicon(&paths.lexicon, &inventory)?;

    let pool_reader = CorpusReader::open(&paths.pool_manifest, &inventory, units)?;
    let mut pool_records = Vec::with_capacity(pool_reader.len());
    for rec in pool_reader.iter() {
        pool_records.push(rec?);
    }
    let (pools, pool_stats) =
        build_pool(pool_records.iter().cloned().map(Ok), &map, variant)?;
    let mut real = Vec::new();
    for rec in &pool_records {
        real.extend(real_word_samples(rec, &lexicon, &map, variant)?);
    }
    drop(pool_records);

    let train_reader = CorpusReader::open(&paths.train_manifest, &inventory, units)?;
    let train_labels = read_labels(&paths.train_labels)?;
    let mut finetune = Vec::new();
    for rec in train_reader.iter() {
        let labeled = labeled_word_samples(&rec?, &lexicon, &train_labels)?;
        finetune.extend(labeled.into_iter().map(|lw| lw.sample));
    }

    let test_reader = CorpusReader::open(&paths.test_manifest, &inventory, units)?;
    let test_labels = read_labels(&paths.test_labels)?;
    let mut test = Vec::new();
    for rec in test_reader.iter() {
        test.extend(labeled_word_samples(&rec?, &lexicon, &test_labels)?);
    }

    Ok(ProtocolData {
        pools,
        pool_stats,
        lexicon,
        real,
        finetune,
        test,
    })
}

impl ProtocolData {
    /// Copies a base scorer config with the data-determined fields filled
    /// in: stream widths from the samples, phone count from the inventory.
    pub fn configure(&self, base: &ScorerConfig) -> Result<ScorerConfig> {
        let sample = self
            .test
            .first()
            .map(|lw| &lw.sample)
            .or(self.finetune.first())
            .or(self.real.first())
            .ok_or_else(|| Error::EmptyInput("protocol data has no samples".into()))?;
        let mut config = base.clone();
        config.d_mfcc = sample.mfcc.cols();
        config.d_deep = sample.deep.cols();
        config.n_phones = self.pools.inventory().len();
        Ok(config)
    }
}

/// Which pretraining corpus a system uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PretrainKind {
    /// Fine-tune from random initialization.
    None,
    /// Pretrain on real GOP-target words only.
    Real,
    /// Pretrain on real GOP-target words plus generated words.
    Mixup,
}

impl PretrainKind {
    pub const ALL: [PretrainKind; 3] = [PretrainKind::None, PretrainKind::Real, PretrainKind::Mixup];

    pub fn as_str(self) -> &'static str {
        match self {
            PretrainKind::None => "none",
            PretrainKind::Real => "real",
            PretrainKind::Mixup => "mixup",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(PretrainKind::None),
            "real" => Ok(PretrainKind::Real),
            "mixup" => Ok(PretrainKind::Mixup),
            other => Err(Error::Config(format!(
                "unknown pretrain kind `{other}` (expected none, real, or mixup)"
            ))),
        }
    }

    pub fn index(self) -> usize {
        match self {
            PretrainKind::None => 0,
            PretrainKind::Real => 1,
            PretrainKind::Mixup => 2,
        }
    }
}

/// Random-substream labels of one system run; every stage seed is
/// [`derive_seed`]`(master, stage)` so the CLI and the in-memory runner
/// draw identical streams for the same master seed.
pub mod stage {
    /// Model parameter initialization.
    pub const INIT: u64 = 0;
    /// Subsampling the real pretraining words.
    pub const SUBSAMPLE: u64 = 1;
    /// Generating the augmented words.
    pub const MIXUP: u64 = 2;
    /// Shuffling real and augmented words together.
    pub const MIX_SHUFFLE: u64 = 3;
    /// Pretraining batch order and dropout.
    pub const PRETRAIN: u64 = 4;
    /// Fine-tuning batch order and dropout.
    pub const FINETUNE: u64 = 5;
}

/// Splitmix64 of (master seed, stage): decorrelates the per-stage random
/// streams while keeping every stage a pure function of the master seed.
pub fn derive_seed(master: u64, stage: u64) -> u64 {
    let mut z = master ^ stage.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One system to run: pretraining kind, data sizes, architecture, seed.
#[derive(Debug, Clone)]
pub struct SystemConfig {
    pub pretrain: PretrainKind,
    /// Real GOP-target words used for pretraining (subsampled by seed).
    pub real_count: usize,
    /// Generated words added when `pretrain` is `Mixup`.
    pub mixup_count: usize,
    /// Architecture and training hyperparameters (must be configured for
    /// the data; see [`ProtocolData::configure`]).
    pub scorer: ScorerConfig,
    /// Per-phase epoch overrides; `None` uses `scorer.epochs`.
    pub pretrain_epochs: Option<usize>,
    pub finetune_epochs: Option<usize>,
    pub seed: u64,
}

/// Evaluation result of one system: a scored report, or a note that the
/// model collapsed to a constant predictor (undefined correlation).
#[derive(Debug, Clone)]
pub enum Verdict {
    Scored(EvalReport),
    Degenerate(String),
}

impl Verdict {
    pub fn pcc(&self) -> Option<f64> {
        match self {
            Verdict::Scored(r) => Some(r.pcc),
            Verdict::Degenerate(_) => None,
        }
    }
}

/// Everything one system run produced.
pub struct SystemOutcome {
    pub pretrain_report: Option<TrainReport>,
    pub finetune_report: TrainReport,
    pub verdict: Verdict,
    pub model: ScorerModel<f32>,
}

/// Scores labeled test words in eval mode and reports the Pearson
/// correlation with the human targets, sorted for reproducibility.
pub fn evaluate_model(model: &ScorerModel<f32>, test: &[LabeledWord]) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::EmptyInput("evaluation on an empty test set".into()));
    }
    for lw in test {
        if lw.sample.provenance != Provenance::HumanLabeled {
            return Err(Error::InvalidInput(format!(
                "test word `{}` of {} has provenance {}, expected human_labeled",
                lw.sample.word,
                lw.utt_id,
                lw.sample.provenance.as_str()
            )));
        }
    }
    let mut preds = Vec::with_capacity(test.len());
    for lw in test {
        preds.push(predict(model, std::slice::from_ref(&lw.sample))?[0]);
    }
    build_report(test, &preds)
}

/// Runs one system end to end: subsample/generate the pretraining set,
/// pretrain (unless `None`), fine-tune, evaluate.
pub fn run_system(data: &ProtocolData, sys: &SystemConfig) -> Result<SystemOutcome> {
    sys.scorer.validate()?;
    let mut init_rng = ChaCha8Rng::seed_from_u64(derive_seed(sys.seed, stage::INIT));
    let mut model: ScorerModel<f32> = init_model(&sys.scorer, &mut init_rng)?;

    let pretrain_report = match sys.pretrain {
        PretrainKind::None => None,
        kind => {
            if sys.real_count == 0 || sys.real_count > data.real.len() {
                return Err(Error::InvalidInput(format!(
                    "real_count {} outside [1, {}] available real words",
                    sys.real_count,
                    data.real.len()
                )));
            }
            let mut order: Vec<usize> = (0..data.real.len()).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(
                sys.seed,
                stage::SUBSAMPLE,
            )));
            let real: Vec<WordSample> = order[..sys.real_count]
                .iter()
                .map(|&i| data.real[i].clone())
                .collect();
            let corpus = match kind {
                PretrainKind::Real => real,
                PretrainKind::Mixup => {
                    if sys.mixup_count == 0 {
                        return Err(Error::InvalidInput(
                            "mixup pretraining needs mixup_count >= 1 (use `real` otherwise)"
                                .into(),
                        ));
                    }
                    let (mixed, _) = generate_dataset(
                        &data.pools,
                        &data.lexicon,
                        sys.mixup_count,
                        derive_seed(sys.seed, stage::MIXUP),
                    )?;
                    mix_pretrain_corpus(real, mixed, derive_seed(sys.seed, stage::MIX_SHUFFLE))?
                }
                PretrainKind::None => unreachable!(),
            };
            model.config.seed = derive_seed(sys.seed, stage::PRETRAIN);
            if let Some(e) = sys.pretrain_epochs {
                model.config.epochs = e;
            }
            Some(train(&mut model, &corpus, TargetKind::Pretrain)?)
        }
    };

    model.config.seed = derive_seed(sys.seed, stage::FINETUNE);
    model.config.epochs = sys.finetune_epochs.unwrap_or(sys.scorer.epochs);
    let finetune_report = train(&mut model, &data.finetune, TargetKind::Finetune)?;

    let verdict = match evaluate_model(&model, &data.test) {
        Ok(report) => Verdict::Scored(report),
        Err(Error::ConstantVector(msg)) => Verdict::Degenerate(format!("degenerate model: {msg}")),
        Err(e) => return Err(e),
    };
    Ok(SystemOutcome {
        pretrain_report,
        finetune_report,
        verdict,
        model,
    })
}

/// One (system, seed) measurement of a comparison.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ComparisonRow {
    pub system: PretrainKind,
    pub seed: u64,
    /// `None` when the run produced a degenerate (constant) predictor.
    pub pcc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Seed-set comparison of the three systems.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ComparisonResult {
    pub rows: Vec<ComparisonRow>,
    /// Mean test PCC per system, indexed by [`PretrainKind::index`];
    /// `None` when every seed of that system was degenerate.
    pub mean_pcc: [Option<f64>; 3],
}

impl ComparisonResult {
    pub fn mean(&self, kind: PretrainKind) -> Option<f64> {
        self.mean_pcc[kind.index()]
    }
}

/// Sizes and architecture shared by all runs of a comparison.
#[derive(Debug, Clone)]
pub struct ComparisonSpec {
    pub real_count: usize,
    pub mixup_count: usize,
    pub scorer: ScorerConfig,
    pub pretrain_epochs: Option<usize>,
    pub finetune_epochs: Option<usize>,
}

/// Runs all three systems over a seed set and averages per system.
pub fn run_comparison(
    data: &ProtocolData,
    spec: &ComparisonSpec,
    seeds: &[u64],
) -> Result<ComparisonResult> {
    if seeds.is_empty() {
        return Err(Error::InvalidInput("comparison needs at least one seed".into()));
    }
    let mut rows = Vec::with_capacity(3 * seeds.len());
    for kind in PretrainKind::ALL {
        for &seed in seeds {
            let outcome = run_system(
                data,
                &SystemConfig {
                    pretrain: kind,
                    real_count: spec.real_count,
                    mixup_count: spec.mixup_count,
                    scorer: spec.scorer.clone(),
                    pretrain_epochs: spec.pretrain_epochs,
                    finetune_epochs: spec.finetune_epochs,
                    seed,
                },
            )?;
            let note = match &outcome.verdict {
                Verdict::Degenerate(msg) => Some(msg.clone()),
                Verdict::Scored(_) => None,
            };
            rows.push(ComparisonRow {
                system: kind,
                seed,
                pcc: outcome.verdict.pcc(),
                note,
            });
        }
    }
    let mut mean_pcc = [None; 3];
    for kind in PretrainKind::ALL {
        let pccs: Vec<f64> = rows
            .iter()
            .filter(|r| r.system == kind)
            .filter_map(|r| r.pcc)
            .collect();
        if !pccs.is_empty() {
            mean_pcc[kind.index()] = Some(pccs.iter().sum::<f64>() / pccs.len() as f64);
        }
    }
    Ok(ComparisonResult { rows, mean_pcc })
}

/// One sweep measurement before CSV serialization.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    /// Total pretraining-set size (real + generated).
    pub size: usize,
    pub feature_set: FeatureSet,
    pub pcc: Option<f64>,
    pub note: Option<String>,
}

/// Sweeps total pretraining size per feature set. Every size must be at
/// least `real_count`; the point `size == real_count` is the no-mixup
/// configuration (real pretraining only).
pub fn run_sweep(
    data: &ProtocolData,
    base: &ScorerConfig,
    sizes: &[usize],
    feature_sets: &[FeatureSet],
    real_count: usize,
    seed: u64,
) -> Result<Vec<SweepPoint>> {
    if sizes.is_empty() || feature_sets.is_empty() {
        return Err(Error::InvalidInput(
            "sweep needs at least one size and one feature set".into(),
        ));
    }
    let mut out = Vec::with_capacity(sizes.len() * feature_sets.len());
    for &size in sizes {
        if size < real_count {
            return Err(Error::InvalidInput(format!(
                "sweep size {size} is below the real pretraining count {real_count}"
            )));
        }
        let mixup_count = size - real_count;
        for &fs in feature_sets {
            let mut scorer = base.clone();
            scorer.feature_set = fs;
            let outcome = run_system(
                data,
                &SystemConfig {
                    pretrain: if mixup_count == 0 {
                        PretrainKind::Real
                    } else {
                        PretrainKind::Mixup
                    },
                    real_count,
                    mixup_count,
                    scorer,
                    pretrain_epochs: None,
                    finetune_epochs: None,
                    seed,
                },
            )?;
            let note = match &outcome.verdict {
                Verdict::Degenerate(msg) => Some(msg.clone()),
                Verdict::Scored(_) => None,
            };
            out.push(SweepPoint {
                size,
                feature_set: fs,
                pcc: outcome.verdict.pcc(),
                note,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_corpus, SynthSpec};

    fn tiny_corpus() -> SynthCorpus {
        generate_corpus(&SynthSpec {
            n_utts: 48,
            n_phones: 6,
            lexicon_size: 10,
            words_per_utt: [1, 3],
            phones_per_word: [2, 3],
            frames_per_phone: [3, 5],
            d_mfcc: 5,
            d_deep: 7,
            n_classes: 12,
            seed: 17,
            ..SynthSpec::default()
        })
        .unwrap()
    }

    fn tiny_scorer(data: &ProtocolData) -> ScorerConfig {
        data.configure(&ScorerConfig {
            d_hidden: 8,
            filters: 8,
            epochs: 2,
            batch_size: 16,
            dropout_p: 0.0,
            ..ScorerConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn protocol_data_partitions_the_corpus() {
        let corpus = tiny_corpus();
        let data = protocol_data(&corpus, GopVariant::MeanPosterior).unwrap();
        assert!(data.pools.total() > 0);
        assert!(!data.real.is_empty());
        assert!(!data.finetune.is_empty());
        assert!(!data.test.is_empty());
        assert!(data
            .real
            .iter()
            .all(|s| s.provenance == Provenance::RealUnlabeled));
        assert!(data
            .finetune
            .iter()
            .all(|s| s.provenance == Provenance::HumanLabeled));
        assert!(data
            .test
            .iter()
            .all(|lw| lw.sample.provenance == Provenance::HumanLabeled));
        // Word counts follow the utterance split sizes (words per
        // utterance are independent of the split).
        let total_words: usize = corpus.utterances.iter().map(|u| u.record.text.len()).sum();
        assert_eq!(
            data.real.len() + data.finetune.len() + data.test.len(),
            total_words
        );
    }

    #[test]
    fn loading_from_disk_matches_the_in_memory_protocol() {
        let corpus = tiny_corpus();
        let mem = protocol_data(&corpus, GopVariant::MeanPosterior).unwrap();
        let dir = tempfile::tempdir().unwrap();
        crate::synth::write_corpus(dir.path(), &corpus).unwrap();
        let disk =
            load_protocol_data(dir.path(), GopVariant::MeanPosterior, AlignUnits::Frames)
                .unwrap();
        assert_eq!(disk.pools.total(), mem.pools.total());
        assert_eq!(disk.real.len(), mem.real.len());
        assert_eq!(disk.finetune.len(), mem.finetune.len());
        assert_eq!(disk.test.len(), mem.test.len());
        // Matrices round-trip bit-exactly, so the derived targets match too.
        for (a, b) in disk.real.iter().zip(&mem.real) {
            assert_eq!(a.target.to_bits(), b.target.to_bits());
            assert_eq!(a.mfcc, b.mfcc);
        }
        for (a, b) in disk.test.iter().zip(&mem.test) {
            assert_eq!(a.utt_id, b.utt_id);
            assert_eq!(a.sample.target.to_bits(), b.sample.target.to_bits());
        }
    }

    #[test]
    fn configure_fills_data_dimensions() {
        let corpus = tiny_corpus();
        let data = protocol_data(&corpus, GopVariant::MeanPosterior).unwrap();
        let config = tiny_scorer(&data);
        assert_eq!(config.d_mfcc, 5);
        assert_eq!(config.d_deep, 7);
        assert_eq!(config.n_phones, 6);
    }

    #[test]
    fn derived_seeds_differ_between_stages_and_masters() {
        let mut seen = std::collections::HashSet::new();
        for master in [0u64, 1, 2, 999] {
            for stage in 0..6 {
                assert!(seen.insert(derive_seed(master, stage)));
            }
        }
    }

    #[test]
    fn no_pretrain_system_runs_and_is_reproducible() {
        let corpus = tiny_corpus();
        let data = protocol_data(&corpus, GopVariant::MeanPosterior).unwrap();
        let sys = SystemConfig {
            pretrain: PretrainKind::None,
            real_count: 0,
            mixup_count: 0,
            scorer: tiny_scorer(&data),
            pretrain_epochs: None,
            finetune_epochs: None,
            seed: 5,
        };
        let a = run_system(&data, &sys).unwrap();
        let b = run_system(&data, &sys).unwrap();
        assert!(a.pretrain_report.is_none());
        match (&a.verdict, &b.verdict) {
            (Verdict::Scored(ra), Verdict::Scored(rb)) => {
                assert_eq!(ra.pcc.to_bits(), rb.pcc.to_bits());
                assert!((-1.0..=1.0).contains(&ra.pcc));
            }
            other => panic!("expected two scored runs, got {other:?}"),
        }
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn mixup_system_pretrains_then_finetunes() {
        let corpus = tiny_corpus();
        let data = protocol_data(&corpus, GopVariant::MeanPosterior).unwrap();
        let sys = SystemConfig {
            pretrain: PretrainKind::Mixup,
            real_count: 20,
            mixup_count: 40,
            scorer: tiny_scorer(&data),
            pretrain_epochs: Some(1),
            finetune_epochs: Some(2),
            seed: 6,
        };
        let outcome = run_system(&data, &sys).unwrap();
        let pre = outcome.pretrain_report.expect("pretraining happened");
        assert_eq!(pre.epochs, 1);
        assert_eq!(pre.n_train + pre.n_holdout, 60);
        assert_eq!(outcome.finetune_report.epochs, 2);
    }

    #[test]
    fn bad_real_count_is_rejected() {
        let corpus = tiny_corpus();
        let data = protocol_data(&corpus, GopVariant::MeanPosterior).unwrap();
        let sys = SystemConfig {
            pretrain: PretrainKind::Real,
            real_count: data.real.len() + 1,
            mixup_count: 0,
            scorer: tiny_scorer(&data),
            pretrain_epochs: None,
            finetune_epochs: None,
            seed: 0,
        };
        assert!(run_system(&data, &sys).is_err());
    }

    #[test]
    fn comparison_covers_all_systems_and_seeds() {
        let corpus = tiny_corpus();
        let data = protocol_data(&corpus, GopVariant::MeanPosterior).unwrap();
        let spec = ComparisonSpec {
            real_count: 10,
            mixup_count: 20,
            scorer: tiny_scorer(&data),
            pretrain_epochs: Some(1),
            finetune_epochs: Some(1),
        };
        let result = run_comparison(&data, &spec, &[1, 2]).unwrap();
        assert_eq!(result.rows.len(), 6);
        for kind in PretrainKind::ALL {
            let n = result.rows.iter().filter(|r| r.system == kind).count();
            assert_eq!(n, 2);
        }
        // Means agree with the rows they summarize.
        for kind in PretrainKind::ALL {
            let pccs: Vec<f64> = result
                .rows
                .iter()
                .filter(|r| r.system == kind)
                .filter_map(|r| r.pcc)
                .collect();
            if let Some(mean) = result.mean(kind) {
                let expect = pccs.iter().sum::<f64>() / pccs.len() as f64;
                assert!((mean - expect).abs() < 1e-15);
            } else {
                assert!(pccs.is_empty());
            }
        }
    }

    #[test]
    fn sweep_covers_the_size_grid() {
        let corpus = tiny_corpus();
        let data = protocol_data(&corpus, GopVariant::MeanPosterior).unwrap();
        let base = tiny_scorer(&data);
        let points = run_sweep(
            &data,
            &base,
            &[10, 30],
            &[FeatureSet::Mfcc, FeatureSet::Multi],
            10,
            3,
        )
        .unwrap();
        assert_eq!(points.len(), 4);
        assert!(points.iter().any(|p| p.size == 10));
        assert!(points.iter().any(|p| p.feature_set == FeatureSet::Mfcc));
        // Below the real count: rejected.
        assert!(run_sweep(&data, &base, &[5], &[FeatureSet::Multi], 10, 3).is_err());
    }

    #[test]
    fn degenerate_predictor_is_reported_not_crashed() {
        let corpus = tiny_corpus();
        let data = protocol_data(&corpus, GopVariant::MeanPosterior).unwrap();
        let config = tiny_scorer(&data);
        let mut model =
            init_model::<f32, _>(&config, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        // Zeroed head: every prediction is sigmoid(0) = 0.5.
        model.head2.w.iter_mut().for_each(|v| *v = 0.0);
        model.head2.b.iter_mut().for_each(|v| *v = 0.0);
        let err = evaluate_model(&model, &data.test).unwrap_err();
        assert!(matches!(err, Error::ConstantVector(_)), "{err}");
    }

    #[test]
    fn evaluation_rejects_non_human_targets() {
        let corpus = tiny_corpus();
        let data = protocol_data(&corpus, GopVariant::MeanPosterior).unwrap();
        let config = tiny_scorer(&data);
        let model = init_model::<f32, _>(&config, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let mut bad = data.test.clone();
        bad[0].sample.provenance = Provenance::Mixup;
        assert!(evaluate_model(&model, &bad).is_err());
    }
}
