//! Fit RP3beta on generated data, score a holdout split and print a few
//! recommendations.
//!
//!     cargo run --release --example quickstart

use recbench::eval::{evaluate_model, Metric};
use recbench::ingest::holdout_split;
use recbench::models::{ModelKind, ModelSpec, Recommender};
use recbench::synthetic::{synthetic_dataset, SyntheticConfig};

fn main() -> recbench::Result<()> {
    let data = synthetic_dataset(&SyntheticConfig::with_interactions(20_000, 0))?;
    println!("{} interactions, {} users, {} items", data.len(), data.n_users(), data.n_items());

    let split = holdout_split(&data, 0.8, 0)?;
    let spec = ModelSpec::default_for(ModelKind::Rp3Beta);
    println!("{}", spec.config_echo());
    let model = spec.fit(&split.train)?;

    let report = evaluate_model(&model, &split, &[5, 10])?;
    for metric in Metric::ALL {
        println!(
            "{:>9}@5 {:.4}   @10 {:.4}",
            metric.name(),
            report.get(metric, 5).unwrap(),
            report.get(metric, 10).unwrap()
        );
    }

    let rec = Recommender::new(&model, &split.train)?;
    for user in 0..3 {
        let items: Vec<&str> = rec
            .recommend(user, 5, true)?
            .iter()
            .map(|&i| data.item_lookup().external(i as usize).unwrap_or("?"))
            .collect();
        let id = data.user_lookup().external(user).unwrap_or("?");
        println!("user {id}: {}", items.join(" "));
    }
    Ok(())
}
