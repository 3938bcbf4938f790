//! Report emission: accuracy and scalability tables, plot-ready CSV and
//! minimal SVG scatter plots. Output is byte-stable for identical inputs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bench::BenchRecord;
use crate::error::{Error, Result};
use crate::eval::{Metric, MetricsReport};
use crate::models::ModelKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
    Structured,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "markdown" => Ok(ReportFormat::Markdown),
            "structured" => Ok(ReportFormat::Structured),
            other => Err(Error::InvalidConfig(format!(
                "unknown report format `{other}` (expected csv, markdown or structured)"
            ))),
        }
    }
}

/// Display name for a model name as stored in reports.
pub fn model_label(name: &str) -> String {
    name.parse::<ModelKind>()
        .map(|k| k.label().to_string())
        .unwrap_or_else(|_| name.to_string())
}

fn cell(value: Option<f64>) -> String {
    value.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"))
}

/// `| Model | Precision@10 | Recall@10 | NDCG@10 |`, one row per report.
pub fn accuracy_table(reports: &[MetricsReport], k: usize) -> Result<String> {
    if reports.is_empty() {
        return Err(Error::InvalidConfig("no metrics reports to tabulate".into()));
    }
    let mut out = format!("| Model | Precision@{k} | Recall@{k} | NDCG@{k} |\n|---|---|---|---|\n");
    for r in reports {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} |",
            model_label(&r.model),
            cell(r.get(Metric::Precision, k)),
            cell(r.get(Metric::Recall, k)),
            cell(r.get(Metric::Ndcg, k)),
        );
    }
    Ok(out)
}

/// `| Model | Training Time (s) | Peak Memory (MB) |`, with a size column
/// when the records span several dataset sizes.
pub fn scalability_table(records: &[BenchRecord]) -> Result<String> {
    if records.is_empty() {
        return Err(Error::InvalidConfig("no benchmark records to tabulate".into()));
    }
    let sized = records.iter().any(|r| r.size != records[0].size);
    let mut out = if sized {
        String::from("| Model | Size | Training Time (s) | Peak Memory (MB) |\n|---|---|---|---|\n")
    } else {
        String::from("| Model | Training Time (s) | Peak Memory (MB) |\n|---|---|---|\n")
    };
    for r in records {
        let size = if sized { format!(" {} |", r.size) } else { String::new() };
        let _ = writeln!(
            out,
            "| {} |{} {:.3} | {:.1} |",
            model_label(&r.model),
            size,
            r.fit_seconds,
            r.peak_bytes as f64 / (1024.0 * 1024.0)
        );
    }
    Ok(out)
}

/// One point of a plot-ready series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotPoint {
    pub x: f64,
    pub y: f64,
    pub series: String,
}

pub fn points_csv(points: &[PlotPoint]) -> String {
    let mut out = String::from("x,y,series\n");
    for p in points {
        let _ = writeln!(out, "{},{},{}", p.x, p.y, p.series);
    }
    out
}

/// Per-group MAP points: x is the group index, one series per model.
/// Groups without evaluated users are omitted.
pub fn group_map_points(reports: &[MetricsReport]) -> Vec<PlotPoint> {
    let mut points = Vec::new();
    for r in reports {
        if let Some(groups) = &r.group_map {
            for (g, value) in groups.iter().enumerate() {
                if let Some(y) = value {
                    points.push(PlotPoint {
                        x: g as f64,
                        y: *y,
                        series: model_label(&r.model),
                    });
                }
            }
        }
    }
    points
}

/// Latency points: x is the model's position among the records.
pub fn latency_points(records: &[BenchRecord]) -> Vec<PlotPoint> {
    let mut models: Vec<&str> = Vec::new();
    let mut points = Vec::new();
    for r in records {
        let Some(y) = r.latency_ms_per_1k else { continue };
        let x = match models.iter().position(|m| *m == r.model) {
            Some(i) => i,
            None => {
                models.push(&r.model);
                models.len() - 1
            }
        };
        points.push(PlotPoint {
            x: x as f64,
            y,
            series: model_label(&r.model),
        });
    }
    points
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

pub struct ScatterOptions<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    pub log_y: bool,
}

/// Powers of ten covering `[lo, hi]` (both positive).
pub fn log_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let first = lo.log10().floor() as i32;
    let last = hi.log10().ceil().max(first as f64 + 1.0) as i32;
    (first..=last).map(|e| 10f64.powi(e)).collect()
}

fn linear_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
    (0..=4).map(|i| lo + (hi - lo) * i as f64 / 4.0).collect()
}

fn tick_label(v: f64, log: bool) -> String {
    if log {
        let e = v.log10().round() as i32;
        format!("1e{e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// Self-contained SVG scatter plot with a legend.
pub fn scatter_svg(points: &[PlotPoint], opts: &ScatterOptions<'_>) -> Result<String> {
    if points.is_empty() {
        return Err(Error::InvalidConfig("nothing to plot".into()));
    }
    if opts.log_y && points.iter().any(|p| !(p.y > 0.0)) {
        return Err(Error::InvalidConfig("log-scale axis needs positive values".into()));
    }
    let (w, h) = (720.0, 420.0);
    let (left, right, top, bottom) = (70.0, 170.0, 40.0, 50.0);
    let (pw, ph) = (w - left - right, h - top - bottom);

    let x_min = points.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
    let x_max = points.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
    let y_min = points.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
    let y_max = points.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
    let y_ticks = if opts.log_y {
        log_ticks(y_min, y_max)
    } else {
        linear_ticks(y_min.min(0.0), y_max)
    };
    let transform = |v: f64| if opts.log_y { v.log10() } else { v };
    let (ty_lo, ty_hi) = (transform(y_ticks[0]), transform(*y_ticks.last().expect("ticks")));
    let (x_lo, x_hi) = if x_max > x_min { (x_min, x_max) } else { (x_min - 1.0, x_min + 1.0) };
    let px = |x: f64| left + (x - x_lo) / (x_hi - x_lo) * pw * 0.9 + pw * 0.05;
    let py = |y: f64| top + ph - (transform(y) - ty_lo) / (ty_hi - ty_lo) * ph;

    let mut series: Vec<&str> = Vec::new();
    for p in points {
        if !series.contains(&p.series.as_str()) {
            series.push(&p.series);
        }
    }

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        left + pw / 2.0,
        escape(opts.title)
    );
    let _ = writeln!(
        svg,
        r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for &t in &y_ticks {
        let y = py(t);
        let _ = writeln!(
            svg,
            r##"<line x1="{left}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##,
            left + pw,
            left - 6.0,
            y + 4.0,
            tick_label(t, opts.log_y)
        );
    }
    let mut xs: Vec<f64> = points.iter().map(|p| p.x).collect();
    xs.sort_by(|a, b| a.total_cmp(b));
    xs.dedup();
    if xs.len() <= 20 {
        for &x in &xs {
            let _ = writeln!(
                svg,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                px(x),
                top + ph + 16.0,
                tick_label(x, false)
            );
        }
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        left + pw / 2.0,
        h - 12.0,
        escape(opts.x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
        top + ph / 2.0,
        top + ph / 2.0,
        escape(opts.y_label)
    );
    for p in points {
        let color = PALETTE[series.iter().position(|s| *s == p.series).unwrap_or(0) % PALETTE.len()];
        let _ = writeln!(
            svg,
            r#"<circle cx="{:.1}" cy="{:.1}" r="4" fill="{color}"><title>{}: {}</title></circle>"#,
            px(p.x),
            py(p.y),
            escape(&p.series),
            p.y
        );
    }
    for (i, s) in series.iter().enumerate() {
        let y = top + 10.0 + i as f64 * 18.0;
        let x = left + pw + 16.0;
        let _ = writeln!(
            svg,
            r#"<circle cx="{x:.1}" cy="{y:.1}" r="4" fill="{}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            PALETTE[i % PALETTE.len()],
            x + 10.0,
            y + 4.0,
            escape(s)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[derive(Serialize)]
struct StructuredReport<'a> {
    metrics: &'a [MetricsReport],
    bench: &'a [BenchRecord],
}

fn write(dir: &Path, name: &str, contents: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Error::file(&path, e))?;
    written.push(path);
    Ok(())
}

/// Writes the report files for `format` into `dir` and returns their paths.
///
/// Every format also gets the plot data: `group_map.csv`/`.svg` when
/// reports carry per-group MAP, `latency.csv`/`.svg` when records carry
/// latency.
pub fn emit_report(
    reports: &[MetricsReport],
    records: &[BenchRecord],
    format: ReportFormat,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    if reports.is_empty() && records.is_empty() {
        return Err(Error::InvalidConfig("report needs metrics or benchmark records".into()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    let mut written = Vec::new();
    match format {
        ReportFormat::Markdown => {
            let mut md = String::new();
            if !reports.is_empty() {
                md.push_str("## Recommendation accuracy\n\n");
                md.push_str(&accuracy_table(reports, 10)?);
            }
            if !records.is_empty() {
                if !md.is_empty() {
                    md.push('\n');
                }
                md.push_str("## Scalability\n\n");
                md.push_str(&scalability_table(records)?);
            }
            write(dir, "report.md", &md, &mut written)?;
        }
        ReportFormat::Csv => {
            if !reports.is_empty() {
                write(dir, "metrics.csv", &MetricsReport::to_csv(reports), &mut written)?;
            }
            if !records.is_empty() {
                write(dir, "bench.csv", &BenchRecord::to_csv(records), &mut written)?;
            }
        }
        ReportFormat::Structured => {
            let doc = StructuredReport {
                metrics: reports,
                bench: records,
            };
            let mut json = serde_json::to_string_pretty(&doc)?;
            json.push('\n');
            write(dir, "report.json", &json, &mut written)?;
        }
    }

    let groups = group_map_points(reports);
    if !groups.is_empty() {
        write(dir, "group_map.csv", &points_csv(&groups), &mut written)?;
        let opts = ScatterOptions {
            title: "MAP by user group",
            x_label: "User Group",
            y_label: "MAP",
            log_y: false,
        };
        write(dir, "group_map.svg", &scatter_svg(&groups, &opts)?, &mut written)?;
    }
    let latency = latency_points(records);
    if !latency.is_empty() {
        write(dir, "latency.csv", &points_csv(&latency), &mut written)?;
        let opts = ScatterOptions {
            title: "Average latency per 1,000 users (log scale)",
            x_label: "Model",
            y_label: "ms per 1,000 users",
            log_y: true,
        };
        write(dir, "latency.svg", &scatter_svg(&latency, &opts)?, &mut written)?;
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{MetricTable, SplitMetrics, Timing};
    use std::collections::BTreeMap;

    fn report(model: &str, groups: Option<Vec<Option<f64>>>) -> MetricsReport {
        let mut metrics = MetricTable::new();
        for (m, v) in [(Metric::Precision, 0.25), (Metric::Recall, 0.5), (Metric::Ndcg, 0.4)] {
            metrics.insert(m, BTreeMap::from([(10, v)]));
        }
        MetricsReport {
            model: model.into(),
            config: String::new(),
            metrics: metrics.clone(),
            splits: vec![SplitMetrics {
                seed: 0,
                n_users_evaluated: 3,
                metrics,
            }],
            n_users_evaluated: 3,
            group_map: groups,
            timing: Timing::default(),
        }
    }

    #[test]
    fn single_row_table() {
        let t = accuracy_table(&[report("rp3beta", None)], 10).unwrap();
        assert_eq!(
            t,
            "| Model | Precision@10 | Recall@10 | NDCG@10 |\n|---|---|---|---|\n| RP3beta | 0.250 | 0.500 | 0.400 |\n"
        );
        assert!(accuracy_table(&[], 10).is_err());
    }

    #[test]
    fn group_points_reshape() {
        let groups = Some((0..10).map(|g| Some(g as f64 / 10.0)).collect());
        let reports = vec![
            report("slim", groups.clone()),
            report("ease-r", groups.clone()),
            report("als", groups),
        ];
        let csv = points_csv(&group_map_points(&reports));
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines.len(), 31);
        assert_eq!(lines[0], "x,y,series");
        assert_eq!(lines[1], "0,0,SLIM");
        assert!(lines.iter().skip(1).all(|l| l.split(',').count() == 3));
    }

    #[test]
    fn log_axis_ticks_at_powers_of_ten() {
        assert_eq!(log_ticks(0.5, 300.0), vec![0.1, 1.0, 10.0, 100.0, 1000.0]);
        let points: Vec<_> = [0.5, 20.0, 300.0]
            .iter()
            .enumerate()
            .map(|(i, &y)| PlotPoint {
                x: i as f64,
                y,
                series: format!("m{i}"),
            })
            .collect();
        let opts = ScatterOptions {
            title: "t",
            x_label: "x",
            y_label: "y",
            log_y: true,
        };
        let svg = scatter_svg(&points, &opts).unwrap();
        for tick in ["1e-1", "1e0", "1e1", "1e2", "1e3"] {
            assert!(svg.contains(&format!(">{tick}</text>")), "{tick}");
        }
        assert_eq!(svg, scatter_svg(&points, &opts).unwrap());
    }
}
