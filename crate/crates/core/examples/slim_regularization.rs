//! How SLIM's penalty strength and mix shape the learned item weights.
//!
//!     cargo run --release --example slim_regularization

use recbench::eval::{evaluate_model, Metric};
use recbench::ingest::holdout_split;
use recbench::models::{ModelSpec, SlimConfig};
use recbench::synthetic::{synthetic_dataset, SyntheticConfig};

fn main() -> recbench::Result<()> {
    let data = synthetic_dataset(&SyntheticConfig::with_interactions(20_000, 0))?;
    let split = holdout_split(&data, 0.8, 0)?;
    println!("{:>8} {:>8} {:>10} {:>8}", "alpha", "l1_ratio", "nonzeros", "NDCG@10");
    for alpha in [1e-4, 1e-2, 1.0, 10.0] {
        for l1_ratio in [1.0, 0.5] {
            let spec = ModelSpec::Slim(SlimConfig {
                alpha,
                l1_ratio,
                ..SlimConfig::default()
            });
            let model = spec.fit(&split.train)?;
            let report = evaluate_model(&model, &split, &[10])?;
            let nnz = match &model.params {
                recbench::models::ModelParams::Item(w) => w.nnz(),
                _ => unreachable!(),
            };
            println!("{alpha:>8} {l1_ratio:>8} {nnz:>10} {:>8.4}", report.get(Metric::Ndcg, 10).unwrap());
        }
    }
    Ok(())
}
