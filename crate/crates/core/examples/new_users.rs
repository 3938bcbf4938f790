//! Cold-start users with two training interactions, then absorbing new users
//! without a refit, compared against full retraining.
//!
//!     cargo run --release --example new_users

use recbench::bench::{cold_start_eval, incremental_update_eval, CapabilityMatrix, IncrementalOutcome};
use recbench::eval::Metric;
use recbench::models::{ModelKind, ModelSpec};
use recbench::synthetic::{synthetic_dataset, SyntheticConfig};

fn main() -> recbench::Result<()> {
    let data = synthetic_dataset(&SyntheticConfig::with_interactions(30_000, 0))?;

    println!("cold start (max 2 training interactions, NDCG@10):");
    for kind in ModelKind::ALL {
        let report = cold_start_eval(&ModelSpec::default_for(kind), &data, 2, 0)?;
        println!("  {:>10} {:.4} over {} users", kind.name(), report.get(Metric::Ndcg, 10).unwrap(), report.n_users_evaluated);
    }

    println!("\ncapabilities (fold-in / score new users / refit for new items):");
    for (kind, caps) in CapabilityMatrix::all().rows {
        println!(
            "  {:>10} {:5} {:5} {:5}",
            kind.name(),
            caps.supports_user_fold_in,
            caps.supports_new_user_scoring_without_refit,
            caps.requires_full_refit_for_new_items
        );
    }

    println!("\nincremental update vs retrain (5% new users):");
    for kind in ModelKind::ALL {
        match incremental_update_eval(&ModelSpec::default_for(kind), &data, 0.05, 0)? {
            IncrementalOutcome::NotSupported { model, reason } => println!("  {model:>10} not supported: {reason}"),
            IncrementalOutcome::Measured(r) => println!(
                "  {:>10} incorporate {:.4}s retrain {:.4}s NDCG@10 delta {:+.4}",
                r.model,
                r.incorporate_seconds,
                r.retrain_seconds,
                r.delta(Metric::Ndcg, 10).unwrap()
            ),
        }
    }
    Ok(())
}
