//! The two-phase training schedule: pretrain on posterior-scored words
//! (real + augmented), then fine-tune the same parameters on human-scored
//! words.
//!
//! Pretraining sees continuous weak targets in [0, 1] that exist in
//! unlimited supply; fine-tuning sees the scarce 0-10 human ratings
//! rescaled to [0, 1]. Both phases select the best epoch on a held-out
//! slice and restore its parameters.
//!
//! Run: cargo run --example pretrain_finetune

use gopmix::experiment::{derive_seed, protocol_data, stage};
use gopmix::gop::GopVariant;
use gopmix::mixup::{generate_dataset, mix_pretrain_corpus};
use gopmix::scorer::{init_model, train, ScorerConfig, ScorerModel, TargetKind};
use gopmix::synth::{generate_corpus, SynthSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = generate_corpus(&SynthSpec {
        n_utts: 150,
        n_phones: 10,
        lexicon_size: 25,
        seed: 13,
        ..SynthSpec::default()
    })?;
    let data = protocol_data(&corpus, GopVariant::MeanPosterior)?;
    println!(
        "data: {} real pretraining words, {} human-scored fine-tuning words",
        data.real.len(),
        data.finetune.len()
    );

    // Pretraining corpus: every real word plus 2000 augmented ones,
    // shuffled together.
    let seed = 5u64;
    let (augmented, _) = generate_dataset(
        &data.pools,
        &data.lexicon,
        2_000,
        derive_seed(seed, stage::MIXUP),
    )?;
    let pretrain_corpus = mix_pretrain_corpus(
        data.real.clone(),
        augmented,
        derive_seed(seed, stage::MIX_SHUFFLE),
    )?;

    let mut config = data.configure(&ScorerConfig {
        d_hidden: 16,
        filters: 16,
        epochs: 4,
        batch_size: 32,
        ..ScorerConfig::default()
    })?;
    config.seed = derive_seed(seed, stage::PRETRAIN);
    let mut model: ScorerModel<f32> =
        init_model(&config, &mut ChaCha8Rng::seed_from_u64(derive_seed(seed, stage::INIT)))?;

    println!("\npretraining on {} words:", pretrain_corpus.len());
    let report = train(&mut model, &pretrain_corpus, TargetKind::Pretrain)?;
    for (e, (tr, ho)) in report.train_loss.iter().zip(&report.holdout_loss).enumerate() {
        println!("  epoch {e}: train MSE {tr:.5}, holdout MSE {ho:.5}");
    }
    println!("  restored epoch {}", report.best_epoch);

    model.config.seed = derive_seed(seed, stage::FINETUNE);
    model.config.epochs = 6;
    println!("\nfine-tuning on {} human-scored words:", data.finetune.len());
    let report = train(&mut model, &data.finetune, TargetKind::Finetune)?;
    for (e, (tr, ho)) in report.train_loss.iter().zip(&report.holdout_loss).enumerate() {
        println!("  epoch {e}: train MSE {tr:.5}, holdout MSE {ho:.5}");
    }
    println!("  restored epoch {}", report.best_epoch);

    // Provenance is enforced: human-scored words cannot leak into
    // pretraining, nor augmented words into fine-tuning.
    let err = train(&mut model, &data.finetune, TargetKind::Pretrain).unwrap_err();
    println!("\nprovenance guard: {err}");
    Ok(())
}
