//! Parse a ratings file, apply 5-core filtering and binarization, save the
//! dataset and cut five seeded holdout splits.
//!
//!     cargo run --release --example ingest_pipeline -- [ratings.csv] [out-dir]

use std::path::PathBuf;

use recbench::ingest::{holdout_split, parse_ratings, remap_ids, Dataset, InputFormat, Preprocessing};

fn main() -> recbench::Result<()> {
    let mut args = std::env::args().skip(1);
    let input = PathBuf::from(
        args.next()
            .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/data/toy_ratings.csv").into()),
    );
    let out = args.next().map(PathBuf::from);

    let records = parse_ratings(&input, InputFormat::MovielensCsv)?;
    let raw = remap_ids(&records);
    println!("raw:     {:>7} ratings {:>5} users {:>5} items", raw.len(), raw.n_users(), raw.n_items());

    let clean = Preprocessing::default().apply(&raw)?;
    println!("cleaned: {:>7} ratings {:>5} users {:>5} items", clean.len(), clean.n_users(), clean.n_items());
    let density = clean.len() as f64 / (clean.n_users() * clean.n_items()) as f64;
    println!("density {:.4}", density);

    if let Some(dir) = out {
        clean.save(&dir)?;
        let back = Dataset::load(&dir)?;
        assert_eq!(back, clean);
        println!("saved to {}", dir.display());
    }

    for seed in 0..5 {
        let split = holdout_split(&clean, 0.8, seed)?;
        let test: usize = split.test_relevant.iter().map(Vec::len).sum();
        println!(
            "seed {seed}: train {} test {} evaluated users {}",
            split.train.nnz(),
            test,
            split.evaluated_users().len()
        );
    }
    Ok(())
}
