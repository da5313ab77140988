//! Compute pronunciation scores from a posteriorgram.
//!
//! A phone's score is its mean per-frame posterior over the aligned
//! segment (the per-frame posterior sums the acoustic-model classes
//! belonging to that phone); a word's score is the unweighted mean of its
//! phone scores. The alternative `log_mean` variant averages log
//! posteriors instead, which penalizes brief confidence dips harder.
//!
//! Run: cargo run --example gop_scores

use gopmix::gop::{phone_gop, word_gop, GopVariant};
use gopmix::synth::{generate_corpus, SynthSpec};
use gopmix::words::word_spans;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = generate_corpus(&SynthSpec {
        n_utts: 4,
        n_phones: 8,
        lexicon_size: 12,
        seed: 21,
        ..SynthSpec::default()
    })?;
    let rec = &corpus.utterances[0].record;
    let map = &corpus.map;

    println!("utterance `{}`, transcript {:?}\n", rec.utt_id, rec.text);
    println!("{:<8} {:>5} {:>5} {:>14} {:>10}", "phone", "start", "end", "mean_posterior", "log_mean");
    let mut mean_gops = Vec::new();
    for seg in rec.align.segments() {
        let mean = phone_gop(&rec.post, map, seg, GopVariant::MeanPosterior)?;
        let log = phone_gop(&rec.post, map, seg, GopVariant::LogMean)?;
        println!(
            "{:<8} {:>5} {:>5} {:>14.4} {:>10.4}",
            corpus.inventory.symbol(seg.phone),
            seg.start,
            seg.end,
            mean,
            log
        );
        mean_gops.push(mean);
    }

    println!("\nword scores (mean of the word's phone scores):");
    for span in word_spans(rec, &corpus.lexicon)? {
        let score = word_gop(&mean_gops[span.segments.clone()])?;
        println!("  {:<12} {:.4}", span.word, score);
    }

    // The two-phone identity every word score obeys: with phone scores
    // 0.3 and 0.9 the word scores exactly 0.6.
    assert_eq!(word_gop(&[0.3, 0.9])?, 0.6);
    println!("\nsanity: word_gop([0.3, 0.9]) = 0.6 exactly");
    Ok(())
}
