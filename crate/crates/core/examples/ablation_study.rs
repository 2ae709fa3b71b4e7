//! Mask ablation on the default synthetic benchmark.
//!
//! `cargo run --release -p imaplab --example ablation_study -- [repeats]`

use imaplab::baselines::BprConfig;
use imaplab::convrec::{Optimizer, TrainConfig};
use imaplab::dataio::{leave_one_out_split, SplitPolicy};
use imaplab::studies::{pretrain_embeddings, run_ablation_1, synthetic_dataset, AblationConfig, ConvRecipe, SyntheticConfig};

fn main() -> imaplab::Result<()> {
    let repeats = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let data = synthetic_dataset(&SyntheticConfig::default())?;
    let split = leave_one_out_split(&data, SplitPolicy::Random, 0)?;
    let base = pretrain_embeddings(&split, &BprConfig { factors: 8, epochs: 40, ..BprConfig::default() })?;
    let cfg = AblationConfig {
        n_repeats: repeats,
        recipe: ConvRecipe {
            train: TrainConfig {
                learning_rate: 1e-3,
                max_epochs: 30,
                optimizer: Optimizer::adam(),
                ..TrainConfig::default()
            },
            ..ConvRecipe::default()
        },
        ..AblationConfig::default()
    };
    let report = run_ablation_1(Some(&base), &split, &cfg)?;
    println!("{}", report.to_markdown());
    Ok(())
}
