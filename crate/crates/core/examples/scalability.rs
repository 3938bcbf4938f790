//! Training time and memory across dataset sizes, plus per-model batch
//! latency written as a log-scale SVG.
//!
//!     cargo run --release --example scalability -- [out-dir]

use std::path::PathBuf;

use recbench::bench::{measure_latency, scalability_sweep, SweepOptions};
use recbench::ingest::holdout_split;
use recbench::models::{ModelKind, ModelSpec};
use recbench::report::{latency_points, points_csv, scalability_table, scatter_svg, ScatterOptions};
use recbench::synthetic::{synthetic_dataset, SyntheticConfig};

fn main() -> recbench::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| ".".into()));
    let data = synthetic_dataset(&SyntheticConfig::with_interactions(60_000, 0))?;
    let specs: Vec<ModelSpec> = ModelKind::ALL.iter().map(|&k| ModelSpec::default_for(k)).collect();

    let opts = SweepOptions {
        sizes: vec![20_000, 35_000, 50_000],
        seed: 0,
        repetitions: 1,
        allow_large: false,
    };
    let sweep = scalability_sweep(&specs, &data, &opts)?;
    for w in &sweep.warnings {
        println!("warning: {w}");
    }
    println!("{}", scalability_table(&sweep.records)?);
    for (model, times) in sweep.times_by_model() {
        let cells: Vec<String> = times.iter().map(|(n, t)| format!("{n}:{t:.3}s")).collect();
        println!("{model:>10} {}", cells.join("  "));
    }

    let split = holdout_split(&data, 0.8, 0)?;
    let mut records = Vec::new();
    for spec in &specs {
        let model = spec.fit(&split.train)?;
        let latency = measure_latency(&model, &split.train, 1000, 10, 0)?;
        let mut record = sweep.records.iter().find(|r| r.model == spec.kind().name()).cloned().unwrap();
        record.latency_ms_per_1k = Some(latency.ms_per_1k());
        records.push(record);
    }
    let points = latency_points(&records);
    let svg = scatter_svg(
        &points,
        &ScatterOptions {
            title: "Average latency per 1,000 users",
            x_label: "model",
            y_label: "ms per 1,000 users (log scale)",
            log_y: true,
        },
    )?;
    std::fs::write(out.join("latency.csv"), points_csv(&points))?;
    std::fs::write(out.join("latency.svg"), svg)?;
    println!("\nwrote latency.csv and latency.svg to {}", out.display());
    Ok(())
}
