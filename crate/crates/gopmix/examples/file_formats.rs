//! Round-trip every file format the pipeline reads and writes.
//!
//! Binary formats (feature matrices, pools, datasets, checkpoints) are
//! little-endian with magic tags and round-trip bit-exactly; text formats
//! (phone map, lexicon, alignments, labels, manifests) are TSV/JSONL.
//! Malformed files are rejected with errors naming the file and problem.
//!
//! Run: cargo run --example file_formats

use gopmix::io::{
    read_checkpoint, read_dataset, read_matrix, read_pool, write_checkpoint, write_dataset,
    write_matrix_binary, write_pool,
};
use gopmix::scorer::{init_model, ScorerConfig, ScorerModel};
use gopmix::synth::{generate_corpus, SynthSpec};
use gopmix::types::FeatureMatrix;
use rand::SeedableRng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("gopmix-example-formats");
    std::fs::create_dir_all(&dir)?;

    // Feature matrix: rows x cols of f32.
    let m = FeatureMatrix::new(3, 4, (0..12).map(|i| i as f32 * 0.5).collect())?;
    let path = dir.join("demo.gmx");
    write_matrix_binary(&path, &m)?;
    let back = read_matrix(&path)?;
    println!("matrix {}x{} round-trips: {}", m.rows(), m.cols(), back == m);

    // Pool and dataset, derived from a small corpus.
    let corpus = generate_corpus(&SynthSpec {
        n_utts: 30,
        n_phones: 6,
        lexicon_size: 10,
        seed: 9,
        ..SynthSpec::default()
    })?;
    let records = corpus.utterances.iter().map(|u| Ok(u.record.clone()));
    let (pools, _) = gopmix::pool::build_pool(
        records,
        &corpus.map,
        gopmix::gop::GopVariant::MeanPosterior,
    )?;
    let pool_path = dir.join("demo.gmpl");
    write_pool(&pool_path, &pools)?;
    let pools_back = read_pool(&pool_path)?;
    println!(
        "pool with {} quadruplets round-trips: {}",
        pools.total(),
        pools_back.total() == pools.total()
    );

    let (samples, _) = gopmix::mixup::generate_dataset(&pools, &corpus.lexicon, 50, 1)?;
    let ds_path = dir.join("demo.gmds");
    write_dataset(&ds_path, &samples, pools.inventory())?;
    let (samples_back, _) = read_dataset(&ds_path)?;
    println!(
        "dataset with {} words round-trips: {}",
        samples.len(),
        samples_back.len() == samples.len()
            && samples
                .iter()
                .zip(&samples_back)
                .all(|(a, b)| a.word == b.word && a.target.to_bits() == b.target.to_bits())
    );

    // Checkpoint: config + phone inventory + every tensor.
    let config = ScorerConfig {
        d_mfcc: 5,
        d_deep: 7,
        d_hidden: 8,
        filters: 8,
        n_phones: corpus.inventory.len(),
        ..ScorerConfig::default()
    };
    let model: ScorerModel<f32> =
        init_model(&config, &mut rand_chacha::ChaCha8Rng::seed_from_u64(0))?;
    let ckpt_path = dir.join("demo.gmck");
    write_checkpoint(&ckpt_path, &model, &corpus.inventory)?;
    let (model_back, inv_back) = read_checkpoint(&ckpt_path)?;
    println!(
        "checkpoint round-trips: {}",
        model_back == model && inv_back.symbols() == corpus.inventory.symbols()
    );

    // Corruption is rejected, not silently accepted.
    let mut bytes = std::fs::read(&ckpt_path)?;
    bytes[0] = b'X';
    let bad = dir.join("corrupt.gmck");
    std::fs::write(&bad, &bytes)?;
    match read_checkpoint(&bad) {
        Err(e) => println!("corrupted checkpoint rejected: {e}"),
        Ok(_) => unreachable!("corruption must not pass"),
    }
    Ok(())
}
