//! The `recbench` command line: pipeline stages that read and write files,
//! each leaving a run manifest next to its outputs.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 I/O or format
//! error, 3 numeric failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bench::{
    cold_start_eval, incremental_update_eval, measure_model, scalability_sweep, BenchRecord,
    SweepOptions,
};
use crate::codec::matrix_to_bytes;
use crate::error::{Error, Result};
use crate::eval::{evaluate_model, group_users_by_profile, map_per_group, Metric, MetricsReport};
use crate::ingest::{parse_ratings, remap_ids, Dataset, EvalSplit, InputFormat, Preprocessing};
use crate::models::{ModelKind, ModelSpec, TrainedModel};
use crate::report::{emit_report, ReportFormat};
use crate::sparse::CsrMatrix;

/// Console output that tolerates a closed stdout (e.g. piped into `head`).
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "REC_THREADS";

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::File { .. } | Error::Io(_) | Error::Parse { .. } | Error::Malformed(_) | Error::Json(_) => {
            EXIT_IO
        }
        Error::Numeric(_) => EXIT_NUMERIC,
        _ => EXIT_USAGE,
    }
}

#[derive(Parser, Debug)]
#[command(name = "recbench", version, about = "Sparse recommender benchmark pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Parse raw ratings into a dataset directory.
    Ingest(IngestArgs),
    /// k-core filter and binarize a dataset.
    Preprocess(PreprocessArgs),
    /// Write seeded per-user holdout splits.
    Split(SplitArgs),
    /// Fit a model on every split.
    Train(TrainArgs),
    /// Score fitted models on their splits.
    Evaluate(EvaluateArgs),
    /// Training-time, latency, cold-start and incremental benchmarks.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Tables, plot data and plots from evaluate and bench outputs.
    Report(ReportArgs),
}

#[derive(Args, Debug, Serialize)]
struct IngestArgs {
    #[arg(long)]
    input: PathBuf,
    /// movielens-csv, tsv-quad or netflix-dir.
    #[arg(long, default_value = "movielens-csv")]
    format: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct PreprocessArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 5)]
    min_interactions: usize,
    #[arg(long, default_value_t = 4.0)]
    binarize_threshold: f64,
}

#[derive(Args, Debug, Serialize)]
struct SplitArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.8)]
    ratio: f64,
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    #[arg(long, default_value_t = 0)]
    seed_base: u64,
}

fn parse_kind(s: &str) -> std::result::Result<ModelKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Hyperparameter overrides; unset flags keep the published defaults.
#[derive(Args, Debug, Default, Serialize)]
struct ModelFlags {
    /// EASE-R L2 strength.
    #[arg(long)]
    lambda: Option<f64>,
    /// SLIM regularization strength, or the walk exponent for p3alpha/rp3beta.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    l1_ratio: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    /// Let SLIM weights go negative.
    #[arg(long)]
    allow_negative: bool,
    #[arg(long)]
    factors: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    reg: Option<f64>,
    #[arg(long)]
    confidence_alpha: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    topk: Option<usize>,
    /// Initialization seed of ALS and FunkSVD.
    #[arg(long)]
    model_seed: Option<u64>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl ModelFlags {
    fn given(&self) -> Vec<&'static str> {
        let flags = [
            ("--lambda", self.lambda.is_some()),
            ("--alpha", self.alpha.is_some()),
            ("--l1-ratio", self.l1_ratio.is_some()),
            ("--max-iters", self.max_iters.is_some()),
            ("--tol", self.tol.is_some()),
            ("--allow-negative", self.allow_negative),
            ("--factors", self.factors.is_some()),
            ("--iterations", self.iterations.is_some()),
            ("--reg", self.reg.is_some()),
            ("--confidence-alpha", self.confidence_alpha.is_some()),
            ("--epochs", self.epochs.is_some()),
            ("--learning-rate", self.learning_rate.is_some()),
            ("--beta", self.beta.is_some()),
            ("--topk", self.topk.is_some()),
            ("--model-seed", self.model_seed.is_some()),
        ];
        flags.iter().filter(|(_, on)| *on).map(|(f, _)| *f).collect()
    }

    fn spec(&self, kind: ModelKind) -> Result<ModelSpec> {
        let allowed: &[&str] = match kind {
            ModelKind::EaseR => &["--lambda"],
            ModelKind::Slim | ModelKind::SlimEnet => {
                &["--alpha", "--l1-ratio", "--max-iters", "--tol", "--allow-negative"]
            }
            ModelKind::Als => &["--factors", "--iterations", "--reg", "--confidence-alpha", "--model-seed"],
            ModelKind::FunkSvd => &["--factors", "--epochs", "--learning-rate", "--reg", "--model-seed"],
            ModelKind::P3Alpha => &["--alpha", "--topk"],
            ModelKind::Rp3Beta => &["--alpha", "--beta", "--topk"],
            ModelKind::TopPop => &[],
        };
        if let Some(bad) = self.given().into_iter().find(|f| !allowed.contains(f)) {
            return Err(Error::InvalidConfig(format!("{bad} does not apply to model {kind}")));
        }
        let mut spec = ModelSpec::default_for(kind);
        match &mut spec {
            ModelSpec::EaseR(c) => set(&mut c.lambda, self.lambda),
            ModelSpec::Slim(c) | ModelSpec::SlimEnet(c) => {
                set(&mut c.alpha, self.alpha);
                set(&mut c.l1_ratio, self.l1_ratio);
                set(&mut c.max_iters, self.max_iters);
                set(&mut c.tol, self.tol);
                if self.allow_negative {
                    c.nonnegative = false;
                }
            }
            ModelSpec::Als(c) => {
                set(&mut c.factors, self.factors);
                set(&mut c.iterations, self.iterations);
                set(&mut c.reg, self.reg);
                set(&mut c.confidence_alpha, self.confidence_alpha);
                set(&mut c.seed, self.model_seed);
            }
            ModelSpec::FunkSvd(c) => {
                set(&mut c.factors, self.factors);
                set(&mut c.epochs, self.epochs);
                set(&mut c.learning_rate, self.learning_rate);
                set(&mut c.reg, self.reg);
                set(&mut c.seed, self.model_seed);
            }
            ModelSpec::P3Alpha(c) | ModelSpec::Rp3Beta(c) => {
                set(&mut c.alpha, self.alpha);
                set(&mut c.beta, self.beta);
                set(&mut c.topk, self.topk);
            }
            ModelSpec::TopPop => {}
        }
        Ok(spec)
    }
}

#[derive(Args, Debug, Serialize)]
struct TrainArgs {
    /// A split directory, or a directory of `split-<seed>` directories.
    #[arg(long)]
    split: PathBuf,
    #[arg(long, value_parser = parse_kind)]
    model: ModelKind,
    #[command(flatten)]
    flags: ModelFlags,
    /// Directory receiving `<model>-seed<seed>.rbmodel` files.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct EvaluateArgs {
    #[arg(long)]
    split: PathBuf,
    /// A model file or a directory of model files.
    #[arg(long)]
    models: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "10")]
    k: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "precision,recall,ndcg,map")]
    metrics: Vec<String>,
    /// User groups for per-group MAP; 0 disables.
    #[arg(long, default_value_t = 10)]
    groups: usize,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
enum BenchCommand {
    /// Fit times and memory across subsampled dataset sizes.
    Scale(ScaleArgs),
    /// Fit time, memory and batch recommendation latency on one split.
    Latency(LatencyArgs),
    /// Metrics for users truncated to a tiny training profile.
    Coldstart(ColdstartArgs),
    /// Absorbing new users without refitting versus a full refit.
    Incremental(IncrementalArgs),
}

#[derive(Args, Debug, Serialize)]
struct ScaleArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_delimiter = ',', value_parser = parse_kind, required = true)]
    models: Vec<ModelKind>,
    #[arg(long, value_delimiter = ',', default_value = "100000,1000000,10000000")]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Run sizes of ten million interactions and more.
    #[arg(long)]
    allow_large: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct LatencyArgs {
    #[arg(long)]
    split: PathBuf,
    #[arg(long, value_delimiter = ',', value_parser = parse_kind, required = true)]
    models: Vec<ModelKind>,
    #[arg(long, default_value_t = 1000)]
    batch: usize,
    #[arg(long, default_value_t = 3)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct ColdstartArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_parser = parse_kind)]
    model: ModelKind,
    #[arg(long, default_value_t = 2)]
    max_profile: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct IncrementalArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_parser = parse_kind)]
    model: ModelKind,
    #[arg(long, default_value_t = 0.05)]
    fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct ReportArgs {
    /// Directories holding `metrics-*.json` and `bench-*.json` files.
    #[arg(long, required = true)]
    input: Vec<PathBuf>,
    /// csv, markdown or structured.
    #[arg(long, default_value = "markdown")]
    format: String,
    #[arg(long)]
    out: PathBuf,
}

/// Everything needed to re-run a pipeline stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: Vec<String>,
    pub subcommand: String,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    /// SHA-256 of the serialized input matrix (or matrices, in order).
    pub dataset_fingerprint: Option<String>,
    pub versions: BTreeMap<String, String>,
    pub started_at: String,
    pub finished_at: String,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        fs::write(path, json).map_err(|e| Error::file(path, e))
    }

    /// The manifest with both timestamps blanked, for reproducibility checks.
    pub fn without_timestamps(&self) -> Self {
        RunManifest {
            started_at: String::new(),
            finished_at: String::new(),
            ..self.clone()
        }
    }
}

/// Hex SHA-256 over the serialized bytes of one or more matrices.
pub fn fingerprint<'a>(matrices: impl IntoIterator<Item = &'a CsrMatrix>) -> String {
    let mut hasher = Sha256::new();
    for m in matrices {
        hasher.update(matrix_to_bytes(m));
    }
    hex::encode(hasher.finalize())
}

fn versions() -> BTreeMap<String, String> {
    BTreeMap::from([
        ("recbench".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ("matrix-format".to_string(), "1".to_string()),
        ("model-format".to_string(), "1".to_string()),
    ])
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// What a stage reports back for its manifest.
struct Outcome {
    dir: PathBuf,
    tag: String,
    seeds: Vec<u64>,
    fingerprint: Option<String>,
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut json = serde_json::to_string_pretty(value)?;
    json.push('\n');
    fs::write(path, json).map_err(|e| Error::file(path, e))
}

/// Split directories under `root` in seed order (or `root` itself).
fn split_dirs(root: &Path) -> Result<Vec<PathBuf>> {
    if root.join("split.json").is_file() {
        return Ok(vec![root.to_path_buf()]);
    }
    let entries = fs::read_dir(root).map_err(|e| Error::file(root, e))?;
    let mut dirs: Vec<(u64, PathBuf)> = Vec::new();
    for entry in entries {
        let path = entry?.path();
        let seed = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_prefix("split-"))
            .and_then(|s| s.parse().ok());
        if let Some(seed) = seed {
            if path.join("split.json").is_file() {
                dirs.push((seed, path));
            }
        }
    }
    if dirs.is_empty() {
        return Err(Error::file(
            root,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no splits found"),
        ));
    }
    dirs.sort();
    Ok(dirs.into_iter().map(|(_, p)| p).collect())
}

fn model_file_name(kind: ModelKind, seed: u64) -> String {
    format!("{}-seed{seed}.rbmodel", kind.name())
}

/// Split seed encoded in a model file name.
fn model_file_seed(path: &Path) -> Option<u64> {
    let stem = path.file_stem()?.to_str()?;
    stem.rsplit_once("-seed")?.1.parse().ok()
}

fn ingest(a: &IngestArgs) -> Result<Outcome> {
    let format: InputFormat = a.format.parse()?;
    let d = remap_ids(&parse_ratings(&a.input, format)?);
    d.save(&a.out)?;
    say!("ingested {} interactions, {} users, {} items", d.len(), d.n_users(), d.n_items());
    Ok(Outcome {
        dir: a.out.clone(),
        tag: "ingest".into(),
        seeds: vec![],
        fingerprint: Some(fingerprint([&d.to_matrix()?])),
    })
}

fn preprocess(a: &PreprocessArgs) -> Result<Outcome> {
    let d = Dataset::load(&a.input)?;
    let p = Preprocessing {
        min_interactions: a.min_interactions,
        binarize_threshold: Some(a.binarize_threshold),
    };
    let out = p.apply(&d)?;
    out.save(&a.out)?;
    say!(
        "kept {} of {} interactions, {} users, {} items",
        out.len(),
        d.len(),
        out.n_users(),
        out.n_items()
    );
    Ok(Outcome {
        dir: a.out.clone(),
        tag: "preprocess".into(),
        seeds: vec![],
        fingerprint: Some(fingerprint([&d.to_matrix()?])),
    })
}

fn split(a: &SplitArgs) -> Result<Outcome> {
    if a.seeds == 0 {
        return Err(Error::InvalidConfig("--seeds must be at least 1".into()));
    }
    let d = Dataset::load(&a.input)?;
    let seeds: Vec<u64> = (a.seed_base..a.seed_base + a.seeds).collect();
    for &seed in &seeds {
        let s = crate::ingest::holdout_split(&d, a.ratio, seed)?;
        s.save(&a.out.join(format!("split-{seed}")))?;
    }
    say!("wrote {} splits to {}", seeds.len(), a.out.display());
    Ok(Outcome {
        dir: a.out.clone(),
        tag: "split".into(),
        seeds,
        fingerprint: Some(fingerprint([&d.to_matrix()?])),
    })
}

fn train(a: &TrainArgs) -> Result<Outcome> {
    let spec = a.flags.spec(a.model)?;
    say!("{}", spec.config_echo());
    create_dir(&a.out)?;
    let mut seeds = Vec::new();
    let mut matrices = Vec::new();
    for dir in split_dirs(&a.split)? {
        let s = EvalSplit::load(&dir)?;
        let model = spec.fit(&s.train)?;
        let path = a.out.join(model_file_name(a.model, s.seed));
        model.save(&path)?;
        say!("wrote {}", path.display());
        seeds.push(s.seed);
        matrices.push(s.train);
    }
    Ok(Outcome {
        dir: a.out.clone(),
        tag: format!("train-{}", a.model.name()),
        seeds,
        fingerprint: Some(fingerprint(&matrices)),
    })
}

fn model_files(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let entries = fs::read_dir(path).map_err(|e| Error::file(path, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let p = entry?.path();
        if p.extension().is_some_and(|e| e == "rbmodel") {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

fn evaluate(a: &EvaluateArgs) -> Result<Outcome> {
    let metrics: Vec<Metric> = a.metrics.iter().map(|m| m.parse()).collect::<Result<_>>()?;
    let splits: Vec<EvalSplit> = split_dirs(&a.split)?
        .iter()
        .map(|d| EvalSplit::load(d))
        .collect::<Result<_>>()?;
    let files = model_files(&a.models)?;
    if files.is_empty() {
        return Err(Error::file(
            &a.models,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no model files found"),
        ));
    }
    let mut per_model: BTreeMap<ModelKind, Vec<MetricsReport>> = BTreeMap::new();
    let mut seeds = Vec::new();
    for file in &files {
        let model = TrainedModel::load(file)?;
        let split = match model_file_seed(file) {
            Some(seed) => splits.iter().find(|s| s.seed == seed),
            None if splits.len() == 1 => splits.first(),
            None => None,
        }
        .ok_or_else(|| {
            Error::InvalidConfig(format!("no split matches model file {}", file.display()))
        })?;
        let mut report = evaluate_model(&model, split, &a.k)?;
        report.metrics.retain(|m, _| metrics.contains(m));
        for s in &mut report.splits {
            s.metrics.retain(|m, _| metrics.contains(m));
        }
        if a.groups > 0 {
            let groups = group_users_by_profile(&split.train, a.groups)?;
            let k = *a.k.iter().max().expect("k has a default");
            report.group_map = Some(map_per_group(&model, split, &groups, k)?);
        }
        seeds.push(split.seed);
        per_model.entry(model.kind()).or_default().push(report);
    }
    create_dir(&a.out)?;
    let mut all = Vec::new();
    for (kind, reports) in per_model {
        let merged = MetricsReport::aggregate(&reports)?;
        write_json(&a.out.join(format!("metrics-{}.json", kind.name())), &merged)?;
        let summary: Vec<String> = merged
            .metrics
            .iter()
            .flat_map(|(m, per_k)| per_k.iter().map(move |(k, v)| format!("{m}@{k}={v:.4}")))
            .collect();
        say!("{:10} {}", kind.name(), summary.join(" "));
        all.push(merged);
    }
    let csv_path = a.out.join("metrics.csv");
    fs::write(&csv_path, MetricsReport::to_csv(&all)).map_err(|e| Error::file(&csv_path, e))?;
    seeds.sort_unstable();
    seeds.dedup();
    Ok(Outcome {
        dir: a.out.clone(),
        tag: "evaluate".into(),
        seeds,
        fingerprint: Some(fingerprint(splits.iter().map(|s| &s.train))),
    })
}

fn bench(cmd: &BenchCommand) -> Result<Outcome> {
    match cmd {
        BenchCommand::Scale(a) => {
            let d = Dataset::load(&a.input)?;
            let specs: Vec<ModelSpec> = a.models.iter().map(|&k| ModelSpec::default_for(k)).collect();
            let opts = SweepOptions {
                sizes: a.sizes.clone(),
                seed: a.seed,
                repetitions: a.reps,
                allow_large: a.allow_large,
            };
            let result = scalability_sweep(&specs, &d, &opts)?;
            for w in &result.warnings {
                eprintln!("warning: {w}");
            }
            create_dir(&a.out)?;
            write_json(&a.out.join("bench-scale.json"), &result.records)?;
            say!("{}", BenchRecord::to_csv(&result.records).trim_end());
            Ok(Outcome {
                dir: a.out.clone(),
                tag: "bench-scale".into(),
                seeds: vec![a.seed],
                fingerprint: Some(fingerprint([&d.to_matrix()?])),
            })
        }
        BenchCommand::Latency(a) => {
            let dirs = split_dirs(&a.split)?;
            let s = EvalSplit::load(&dirs[0])?;
            let mut records = Vec::new();
            for &kind in &a.models {
                let spec = ModelSpec::default_for(kind);
                let (record, _) = measure_model(&spec, &s.train, a.reps, a.batch, a.seed)?;
                records.push(record);
            }
            create_dir(&a.out)?;
            write_json(&a.out.join("bench-latency.json"), &records)?;
            say!("{}", BenchRecord::to_csv(&records).trim_end());
            Ok(Outcome {
                dir: a.out.clone(),
                tag: "bench-latency".into(),
                seeds: vec![s.seed, a.seed],
                fingerprint: Some(fingerprint([&s.train])),
            })
        }
        BenchCommand::Coldstart(a) => {
            let d = Dataset::load(&a.input)?;
            let report = cold_start_eval(&ModelSpec::default_for(a.model), &d, a.max_profile, a.seed)?;
            create_dir(&a.out)?;
            write_json(&a.out.join(format!("coldstart-{}.json", a.model.name())), &report)?;
            say!(
                "{} cold users: ndcg@10={:.4} map@10={:.4}",
                report.n_users_evaluated,
                report.get(Metric::Ndcg, 10).unwrap_or(0.0),
                report.get(Metric::Map, 10).unwrap_or(0.0)
            );
            Ok(Outcome {
                dir: a.out.clone(),
                tag: format!("bench-coldstart-{}", a.model.name()),
                seeds: vec![a.seed],
                fingerprint: Some(fingerprint([&d.to_matrix()?])),
            })
        }
        BenchCommand::Incremental(a) => {
            let d = Dataset::load(&a.input)?;
            let outcome =
                incremental_update_eval(&ModelSpec::default_for(a.model), &d, a.fraction, a.seed)?;
            create_dir(&a.out)?;
            write_json(&a.out.join(format!("incremental-{}.json", a.model.name())), &outcome)?;
            match &outcome {
                crate::bench::IncrementalOutcome::NotSupported { reason, .. } => {
                    say!("{}: not supported ({reason})", a.model.name())
                }
                crate::bench::IncrementalOutcome::Measured(r) => say!(
                    "{}: incorporate {:.4}s, retrain {:.4}s, ndcg@10 delta {:+.4}",
                    r.model,
                    r.incorporate_seconds,
                    r.retrain_seconds,
                    r.delta(Metric::Ndcg, 10).unwrap_or(0.0)
                ),
            }
            Ok(Outcome {
                dir: a.out.clone(),
                tag: format!("bench-incremental-{}", a.model.name()),
                seeds: vec![a.seed],
                fingerprint: Some(fingerprint([&d.to_matrix()?])),
            })
        }
    }
}

fn json_files(dir: &Path, prefix: &str) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::file(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let p = entry?.path();
        let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if name.starts_with(prefix) && name.ends_with(".json") {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Malformed(format!("{}: {e}", path.display())))
}

fn report(a: &ReportArgs) -> Result<Outcome> {
    let format: ReportFormat = a.format.parse()?;
    let mut reports: Vec<MetricsReport> = Vec::new();
    let mut records: Vec<BenchRecord> = Vec::new();
    for dir in &a.input {
        for f in json_files(dir, "metrics-")? {
            reports.push(read_json(&f)?);
        }
        for f in json_files(dir, "bench-")? {
            records.extend(read_json::<Vec<BenchRecord>>(&f)?);
        }
    }
    let rank = |name: &str| {
        name.parse::<ModelKind>()
            .map(|k| k as usize)
            .unwrap_or(usize::MAX)
    };
    reports.sort_by_key(|r| rank(&r.model));
    for p in emit_report(&reports, &records, format, &a.out)? {
        say!("wrote {}", p.display());
    }
    Ok(Outcome {
        dir: a.out.clone(),
        tag: "report".into(),
        seeds: vec![],
        fingerprint: None,
    })
}

fn configure_threads() {
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            // Fails only if a pool already exists, in which case it stays.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

/// Usage line of the deepest subcommand named in `args`.
fn usage_for(args: &[OsString]) -> String {
    let mut cmd = Cli::command();
    cmd.build();
    for arg in args.iter().skip(1).filter_map(|a| a.to_str()) {
        match cmd.find_subcommand(arg) {
            Some(sub) => cmd = sub.clone(),
            None => break,
        }
    }
    cmd.render_usage().to_string()
}

/// Parses `args` (program name first), runs the stage and returns the exit code.
pub fn run_command<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            if !e.use_stderr() {
                return EXIT_OK;
            }
            if !e.render().to_string().contains("Usage:") {
                eprintln!("\n{}", usage_for(&args));
            }
            return EXIT_USAGE;
        }
    };
    configure_threads();
    let started_at = now();
    let result = match &cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Preprocess(a) => preprocess(a),
        Command::Split(a) => split(a),
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Bench(c) => bench(c),
        Command::Report(a) => report(a),
    };
    let outcome = match result {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let config = serde_json::to_value(&cli.command).expect("arguments serialize");
    let subcommand = config
        .as_object()
        .and_then(|m| m.keys().next().cloned())
        .unwrap_or_default();
    let manifest = RunManifest {
        command: args.iter().map(|a| a.to_string_lossy().into_owned()).collect(),
        subcommand,
        config,
        seeds: outcome.seeds,
        dataset_fingerprint: outcome.fingerprint,
        versions: versions(),
        started_at,
        finished_at: now(),
    };
    let path = outcome.dir.join(format!("manifest-{}.json", outcome.tag));
    match manifest.write(&path) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_apply_only_to_their_model() {
        let flags = ModelFlags {
            lambda: Some(2.0),
            ..Default::default()
        };
        assert_eq!(
            flags.spec(ModelKind::EaseR).unwrap(),
            ModelSpec::EaseR(crate::models::EaseConfig {
                lambda: 2.0,
                ..Default::default()
            })
        );
        assert!(flags.spec(ModelKind::Als).is_err());
        for kind in ModelKind::ALL {
            assert_eq!(ModelFlags::default().spec(kind).unwrap(), ModelSpec::default_for(kind));
        }
    }

    #[test]
    fn model_file_names_carry_the_seed() {
        let name = model_file_name(ModelKind::SlimEnet, 12);
        assert_eq!(name, "slim-enet-seed12.rbmodel");
        assert_eq!(model_file_seed(Path::new(&name)), Some(12));
    }

    #[test]
    fn fingerprint_tracks_content() {
        let a = CsrMatrix::from_binary_rows(vec![vec![0]], 2).unwrap();
        let b = CsrMatrix::from_binary_rows(vec![vec![1]], 2).unwrap();
        assert_eq!(fingerprint([&a]), fingerprint([&a.clone()]));
        assert_ne!(fingerprint([&a]), fingerprint([&b]));
        assert_eq!(fingerprint([&a]).len(), 64);
    }
}
