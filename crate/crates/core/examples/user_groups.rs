//! MAP@10 by user-activity decile for each model, written as CSV and SVG.
//!
//!     cargo run --release --example user_groups -- [out-dir]

use std::path::PathBuf;

use recbench::eval::{group_users_by_profile, map_per_group, MetricsReport, evaluate_model};
use recbench::ingest::holdout_split;
use recbench::models::{ModelKind, ModelSpec};
use recbench::report::{group_map_points, points_csv, scatter_svg, ScatterOptions};
use recbench::synthetic::{synthetic_dataset, SyntheticConfig};

fn main() -> recbench::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| ".".into()));
    let data = synthetic_dataset(&SyntheticConfig::with_interactions(30_000, 0))?;
    let split = holdout_split(&data, 0.8, 0)?;
    let groups = group_users_by_profile(&split.train, 10)?;
    for (g, (lo, hi)) in groups.profile_ranges.iter().enumerate() {
        println!("group {g}: profiles of {lo}..={hi} items");
    }

    let mut reports: Vec<MetricsReport> = Vec::new();
    for kind in ModelKind::ALL {
        let model = ModelSpec::default_for(kind).fit(&split.train)?;
        let mut report = evaluate_model(&model, &split, &[10])?;
        let per_group = map_per_group(&model, &split, &groups, 10)?;
        let cells: Vec<String> = per_group.iter().map(|v| v.map_or("-".into(), |v| format!("{v:.3}"))).collect();
        println!("{:>10} {}", kind.name(), cells.join(" "));
        report.group_map = Some(per_group);
        reports.push(report);
    }

    let points = group_map_points(&reports);
    let svg = scatter_svg(
        &points,
        &ScatterOptions {
            title: "MAP@10 by user group",
            x_label: "user group (by profile size)",
            y_label: "MAP@10",
            log_y: false,
        },
    )?;
    std::fs::write(out.join("group_map.csv"), points_csv(&points))?;
    std::fs::write(out.join("group_map.svg"), svg)?;
    println!("wrote group_map.csv and group_map.svg to {}", out.display());
    Ok(())
}
