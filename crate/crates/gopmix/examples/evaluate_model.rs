//! Train one system end to end and evaluate it: Pearson correlation
//! between predicted and human word scores on held-out utterances.
//!
//! `run_system` wires the whole schedule from a single master seed:
//! initialization, augmented-word generation, pretraining, fine-tuning,
//! and evaluation each draw from a derived, decorrelated stream.
//!
//! Run: cargo run --example evaluate_model

use gopmix::experiment::{protocol_data, run_system, PretrainKind, SystemConfig, Verdict};
use gopmix::gop::GopVariant;
use gopmix::scorer::ScorerConfig;
use gopmix::synth::{generate_corpus, SynthSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = generate_corpus(&SynthSpec {
        n_utts: 200,
        n_phones: 10,
        lexicon_size: 30,
        seed: 17,
        ..SynthSpec::default()
    })?;
    let data = protocol_data(&corpus, GopVariant::MeanPosterior)?;

    let scorer = data.configure(&ScorerConfig {
        d_hidden: 16,
        filters: 16,
        epochs: 6,
        batch_size: 32,
        ..ScorerConfig::default()
    })?;
    let outcome = run_system(
        &data,
        &SystemConfig {
            pretrain: PretrainKind::Mixup,
            real_count: 200,
            mixup_count: 1_800,
            scorer,
            pretrain_epochs: Some(4),
            finetune_epochs: None,
            seed: 1,
        },
    )?;

    if let Some(pre) = &outcome.pretrain_report {
        println!(
            "pretrained on {} words ({} epochs, best {})",
            pre.n_train + pre.n_holdout,
            pre.epochs,
            pre.best_epoch
        );
    }
    println!(
        "fine-tuned on {} words ({} epochs, best {})",
        outcome.finetune_report.n_train + outcome.finetune_report.n_holdout,
        outcome.finetune_report.epochs,
        outcome.finetune_report.best_epoch
    );

    match &outcome.verdict {
        Verdict::Scored(report) => {
            println!(
                "\ntest correlation: pcc {:.4} over {} words",
                report.pcc,
                report.rows.len()
            );
            println!("\n{:<8} {:<12} {:>7} {:>11}", "utt", "word", "human", "prediction");
            for row in &report.rows[..8.min(report.rows.len())] {
                println!(
                    "{:<8} {:<12} {:>7.3} {:>11.3}",
                    row.utt_id, row.word, row.target, row.prediction
                );
            }
        }
        Verdict::Degenerate(msg) => println!("\n{msg}"),
    }
    Ok(())
}
