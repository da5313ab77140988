//! Compare the three systems the pipeline exists for, over several seeds:
//!
//!   none  — fine-tune from random initialization
//!   real  — pretrain on real posterior-scored words, then fine-tune
//!   mixup — pretrain on real + augmented words, then fine-tune
//!
//! With scarce human labels, mixup-pretraining should come out on top on
//! mean test correlation, and any pretraining should beat none.
//!
//! Run: cargo run --example end_to_end   (takes a couple of minutes)

use gopmix::experiment::{protocol_data, run_comparison, ComparisonSpec, PretrainKind};
use gopmix::gop::GopVariant;
use gopmix::scorer::ScorerConfig;
use gopmix::synth::{generate_corpus, SynthSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = generate_corpus(&SynthSpec {
        n_utts: 300,
        n_phones: 12,
        lexicon_size: 40,
        seed: 41,
        ..SynthSpec::default()
    })?;
    let data = protocol_data(&corpus, GopVariant::MeanPosterior)?;
    println!(
        "corpus: {} pool words -> pools of {} instances; {} fine-tune words; {} test words",
        data.real.len(),
        data.pools.total(),
        data.finetune.len(),
        data.test.len()
    );

    let spec = ComparisonSpec {
        real_count: 300,
        mixup_count: 2_700,
        scorer: data.configure(&ScorerConfig {
            d_hidden: 16,
            filters: 16,
            batch_size: 32,
            ..ScorerConfig::default()
        })?,
        pretrain_epochs: Some(4),
        finetune_epochs: Some(8),
    };
    let seeds = [1, 2, 3];
    println!(
        "systems: none | real ({}) | mixup ({} + {}); seeds {seeds:?}\n",
        spec.real_count, spec.real_count, spec.mixup_count
    );

    let result = run_comparison(&data, &spec, &seeds)?;

    println!("{:>6} {:>8} {:>8} {:>8}", "seed", "none", "real", "mixup");
    for &seed in &seeds {
        let cell = |kind: PretrainKind| {
            result
                .rows
                .iter()
                .find(|r| r.system == kind && r.seed == seed)
                .and_then(|r| r.pcc)
                .map(|p| format!("{p:.4}"))
                .unwrap_or_else(|| "degen".into())
        };
        println!(
            "{:>6} {:>8} {:>8} {:>8}",
            seed,
            cell(PretrainKind::None),
            cell(PretrainKind::Real),
            cell(PretrainKind::Mixup)
        );
    }
    print!("{:>6}", "mean");
    for kind in PretrainKind::ALL {
        match result.mean(kind) {
            Some(m) => print!(" {m:>8.4}"),
            None => print!(" {:>8}", "-"),
        }
    }
    println!();

    if let (Some(none), Some(mixup)) = (
        result.mean(PretrainKind::None),
        result.mean(PretrainKind::Mixup),
    ) {
        println!("\nmixup-pretraining gained {:+.4} mean pcc over no pretraining", mixup - none);
    }
    Ok(())
}
