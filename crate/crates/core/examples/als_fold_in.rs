//! Implicit ALS: objective per round, then folding a user back in against
//! the trained item factors.
//!
//!     cargo run --release --example als_fold_in

use recbench::ingest::holdout_split;
use recbench::models::factor::fit_als_traced;
use recbench::models::{fold_in_user, AlsConfig, Recommender};
use recbench::synthetic::{synthetic_dataset, SyntheticConfig};

fn main() -> recbench::Result<()> {
    let data = synthetic_dataset(&SyntheticConfig::with_interactions(20_000, 0))?;
    let split = holdout_split(&data, 0.8, 0)?;
    let cfg = AlsConfig::default();
    let (mut model, trace) = fit_als_traced(&split.train, &cfg)?;
    for (round, obj) in trace.iter().enumerate() {
        println!("round {:>2}: objective {obj:.2}", round + 1);
    }

    let user = 0;
    let items: Vec<usize> = split.train.row(user).cols.iter().map(|&i| i as usize).collect();
    let before = Recommender::new(&model, &split.train)?.recommend(user, 10, true)?;
    let folded = fold_in_user(&model, &cfg, &items)?;
    let drift: f64 = folded
        .iter()
        .zip(model.user(user))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!("\nuser {user}: {} training items, fold-in differs from fitted factors by {drift:.2e}", items.len());
    model.set_user(user, &folded);
    let after = Recommender::new(&model, &split.train)?.recommend(user, 10, true)?;
    println!("top-10 before {before:?}\ntop-10 after  {after:?}");
    Ok(())
}
