//! Generate a synthetic corpus and write it to disk.
//!
//! The corpus mimics what a pronunciation-assessment pipeline consumes:
//! per-utterance MFCC and deep-feature matrices, a posteriorgram, a phone
//! alignment, split manifests (pool / train / test), and human-style word
//! scores on a 0-10 scale. Each utterance carries a latent per-phone
//! quality in [0, 1] that drives features, posteriors, and scores, so
//! posterior-based word scores correlate with the "human" ones.
//!
//! Run: cargo run --example synth_corpus [out_dir]

use gopmix::synth::{generate_corpus, write_corpus, CorpusPaths, SynthSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("gopmix-example-corpus"));

    let spec = SynthSpec {
        n_utts: 200,
        n_phones: 12,
        lexicon_size: 40,
        seed: 7,
        ..SynthSpec::default()
    };
    let corpus = generate_corpus(&spec)?;

    let n_words: usize = corpus.utterances.iter().map(|u| u.record.text.len()).sum();
    println!(
        "generated {} utterances, {} words, {} phones, lexicon of {}",
        corpus.utterances.len(),
        n_words,
        corpus.inventory.len(),
        corpus.lexicon.len()
    );
    println!(
        "splits: pool {}, train {}, test {}",
        corpus.splits.pool.len(),
        corpus.splits.train.len(),
        corpus.splits.test.len()
    );

    let u = &corpus.utterances[0];
    println!(
        "\nfirst utterance `{}`: {} frames, transcript {:?}",
        u.record.utt_id,
        u.record.mfcc.rows(),
        u.record.text
    );
    println!(
        "  latent phone qualities: {:?}",
        u.latent_q.iter().map(|q| (q * 100.0).round() / 100.0).collect::<Vec<_>>()
    );
    println!("  human word scores (0-10): {:?}", u.word_scores);

    std::fs::create_dir_all(&out)?;
    write_corpus(&out, &corpus)?;
    let paths = CorpusPaths::under(&out);
    println!("\nwrote corpus to {}", out.display());
    for p in [
        &paths.phone_map,
        &paths.lexicon,
        &paths.alignments,
        &paths.pool_manifest,
        &paths.train_manifest,
        &paths.test_manifest,
        &paths.train_labels,
        &paths.test_labels,
    ] {
        println!("  {}", p.file_name().unwrap().to_string_lossy());
    }
    Ok(())
}
