//! Writes a planted-cluster rating dataset as a MovieLens-style CSV.
//!
//!     cargo run --release --example synthetic_data -- out.csv [interactions] [seed]

use std::path::PathBuf;

use recbench::ingest::write_movielens_csv;
use recbench::synthetic::{generate_ratings, SyntheticConfig};

fn main() -> recbench::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "synthetic_ratings.csv".into()));
    let n: usize = args.next().map_or(100_000, |s| s.parse().expect("interaction count"));
    let seed: u64 = args.next().map_or(0, |s| s.parse().expect("seed"));

    let cfg = SyntheticConfig::with_interactions(n, seed);
    let records = generate_ratings(&cfg)?;
    write_movielens_csv(&records, &out)?;
    let positives = records.iter().filter(|r| r.rating >= 4.0).count();
    println!(
        "{} ratings ({} positive) from {} users over {} items in {} clusters -> {}",
        records.len(),
        positives,
        cfg.n_users,
        cfg.n_items,
        cfg.n_clusters,
        out.display()
    );
    Ok(())
}
