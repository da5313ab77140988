//! Sweep the pretraining-set size per feature set and tabulate the test
//! correlation — how much augmented data helps, and which features.
//!
//! Every sweep point pretrains on the same real words plus enough
//! augmented words to reach the point's total size; the smallest point
//! equal to the real count is the no-augmentation baseline. Single-stream
//! feature sets (mfcc, deep) run a single tower; multi runs both.
//!
//! Run: cargo run --example sweep_sizes

use gopmix::experiment::{protocol_data, run_sweep};
use gopmix::gop::GopVariant;
use gopmix::scorer::{FeatureSet, ScorerConfig};
use gopmix::synth::{generate_corpus, SynthSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = generate_corpus(&SynthSpec {
        n_utts: 150,
        n_phones: 10,
        lexicon_size: 25,
        seed: 29,
        ..SynthSpec::default()
    })?;
    let data = protocol_data(&corpus, GopVariant::MeanPosterior)?;
    let base = data.configure(&ScorerConfig {
        d_hidden: 16,
        filters: 16,
        epochs: 4,
        batch_size: 32,
        ..ScorerConfig::default()
    })?;

    let real_count = 150;
    let sizes = [150, 600, 2_400];
    let feature_sets = [FeatureSet::Mfcc, FeatureSet::Deep, FeatureSet::Multi];
    println!(
        "sweeping sizes {sizes:?} (real count {real_count}; size {real_count} = no augmentation)\n"
    );

    let points = run_sweep(&data, &base, &sizes, &feature_sets, real_count, 3)?;

    println!("{:>10} {:>8} {:>8} {:>8}", "total", "mfcc", "deep", "multi");
    for &size in &sizes {
        let cell = |fs: FeatureSet| {
            points
                .iter()
                .find(|p| p.size == size && p.feature_set == fs)
                .and_then(|p| p.pcc)
                .map(|pcc| format!("{pcc:.4}"))
                .unwrap_or_else(|| "degen".into())
        };
        println!(
            "{:>10} {:>8} {:>8} {:>8}",
            size,
            cell(FeatureSet::Mfcc),
            cell(FeatureSet::Deep),
            cell(FeatureSet::Multi)
        );
    }
    Ok(())
}
