//! Every model under the five-seed holdout protocol, printed as an accuracy
//! table.
//!
//!     cargo run --release --example compare_models -- [interactions]

use recbench::eval::{evaluate_model, MetricsReport};
use recbench::ingest::holdout_split;
use recbench::models::{ModelKind, ModelSpec};
use recbench::report::accuracy_table;
use recbench::synthetic::{synthetic_dataset, SyntheticConfig};

fn main() -> recbench::Result<()> {
    let n: usize = std::env::args().nth(1).map_or(30_000, |s| s.parse().expect("interaction count"));
    let data = synthetic_dataset(&SyntheticConfig::with_interactions(n, 0))?;
    println!("{} interactions, {} users, {} items\n", data.len(), data.n_users(), data.n_items());

    let splits: Vec<_> = (0..5).map(|seed| holdout_split(&data, 0.8, seed)).collect::<Result<_, _>>()?;
    let mut reports = Vec::new();
    for kind in ModelKind::ALL {
        let mut per_split = Vec::new();
        for split in &splits {
            let model = ModelSpec::default_for(kind).with_seed(split.seed).fit(&split.train)?;
            per_split.push(evaluate_model(&model, split, &[10])?);
        }
        reports.push(MetricsReport::aggregate(&per_split)?);
    }
    print!("{}", accuracy_table(&reports, 10)?);
    Ok(())
}
