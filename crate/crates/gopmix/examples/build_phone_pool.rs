//! Harvest per-phoneme quadruplet pools from a corpus.
//!
//! Every aligned phone instance becomes a quadruplet: (phone, MFCC
//! segment, deep-feature segment, posterior-based score). Pools are the
//! raw material for augmented-word generation: any instance of a phone
//! can stand in for any other, carrying its own score with it.
//!
//! Run: cargo run --example build_phone_pool

use gopmix::gop::GopVariant;
use gopmix::pool::build_pool;
use gopmix::synth::{generate_corpus, SynthSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = generate_corpus(&SynthSpec {
        n_utts: 120,
        n_phones: 10,
        lexicon_size: 25,
        seed: 3,
        ..SynthSpec::default()
    })?;

    // Harvest from the pool split only, leaving train/test untouched.
    let records = corpus
        .splits
        .pool
        .iter()
        .map(|&i| Ok(corpus.utterances[i].record.clone()));
    let (pools, stats) = build_pool(records, &corpus.map, GopVariant::MeanPosterior)?;

    println!(
        "harvested {} quadruplets from {} utterances ({} segments)",
        pools.total(),
        stats.utterances,
        stats.segments
    );
    if !stats.long_segments.is_empty() {
        println!("  {} unusually long segments kept and flagged", stats.long_segments.len());
    }

    println!("\n{:<8} {:>6} {:>9} {:>9} {:>9}", "phone", "count", "min_gop", "mean_gop", "max_gop");
    for phone in pools.phones() {
        let pool = pools.pool(phone);
        if pool.is_empty() {
            println!("{:<8} {:>6}", corpus.inventory.symbol(phone), 0);
            continue;
        }
        let gops: Vec<f64> = pool.iter().map(|q| q.gop).collect();
        let mean = gops.iter().sum::<f64>() / gops.len() as f64;
        let min = gops.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = gops.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        println!(
            "{:<8} {:>6} {:>9.4} {:>9.4} {:>9.4}",
            corpus.inventory.symbol(phone),
            pool.len(),
            min,
            mean,
            max
        );
    }

    let q = &pools.pool(pools.phones().next().unwrap())[0];
    println!(
        "\nfirst quadruplet: {} frames, mfcc {}x{}, deep {}x{}, score {:.4}",
        q.frames(),
        q.mfcc_seg.rows(),
        q.mfcc_seg.cols(),
        q.deep_seg.rows(),
        q.deep_seg.cols(),
        q.gop
    );
    Ok(())
}
