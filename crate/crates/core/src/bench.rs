//! Training time, peak memory, latency, scalability, cold-start and
//! incremental-update measurements.

use std::fs;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use log::warn;
use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{evaluate_scorer, Metric, MetricsReport};
use crate::ingest::{holdout_split, seeded_rng, subsample, Dataset, EvalSplit, Preprocessing};
use crate::models::{
    fold_in_user, ModelKind, ModelParams, ModelSpec, Recommender, Scorer, TrainedModel,
};
use crate::sparse::CsrMatrix;

/// Sizes at or above this many interactions only run when explicitly allowed.
pub const LARGE_SWEEP_SIZE: usize = 10_000_000;

/// One benchmark measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub model: String,
    pub config: String,
    /// Nominal dataset size (requested interaction count).
    pub size: usize,
    /// Interactions actually used for fitting.
    pub n_interactions: usize,
    /// Median wall-clock fit time over the repetitions.
    pub fit_seconds: f64,
    /// Highest resident-set sample seen while fitting.
    pub peak_bytes: u64,
    pub latency_ms_per_1k: Option<f64>,
    pub reps: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl BenchRecord {
    pub const CSV_HEADER: &'static str = "model,size,fit_seconds,peak_bytes,latency_ms_per_1k,reps";

    pub fn csv_row(&self) -> String {
        let latency = self.latency_ms_per_1k.map(|l| l.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{}",
            self.model, self.size, self.fit_seconds, self.peak_bytes, latency, self.reps
        )
    }

    pub fn to_csv(records: &[BenchRecord]) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in records {
            out.push_str(&r.csv_row());
            out.push('\n');
        }
        out
    }
}

/// Current resident set size of this process, from `/proc/self/status`.
pub fn resident_bytes() -> Option<u64> {
    let status = fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmRSS:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

/// Samples the resident set on a background thread and keeps the maximum.
pub struct MemoryMonitor {
    stop: Arc<AtomicBool>,
    peak: Arc<AtomicU64>,
    handle: Option<JoinHandle<()>>,
}

impl MemoryMonitor {
    pub const INTERVAL: Duration = Duration::from_millis(50);

    pub fn start() -> Self {
        let stop = Arc::new(AtomicBool::new(false));
        let peak = Arc::new(AtomicU64::new(resident_bytes().unwrap_or(0)));
        let handle = {
            let (stop, peak) = (Arc::clone(&stop), Arc::clone(&peak));
            thread::spawn(move || {
                while !stop.load(Ordering::Acquire) {
                    if let Some(rss) = resident_bytes() {
                        peak.fetch_max(rss, Ordering::AcqRel);
                    }
                    thread::park_timeout(Self::INTERVAL);
                }
            })
        };
        MemoryMonitor {
            stop,
            peak,
            handle: Some(handle),
        }
    }

    /// Stops sampling and returns the peak in bytes.
    pub fn stop(mut self) -> u64 {
        self.finish()
    }

    fn finish(&mut self) -> u64 {
        if let Some(rss) = resident_bytes() {
            self.peak.fetch_max(rss, Ordering::AcqRel);
        }
        self.stop.store(true, Ordering::Release);
        if let Some(h) = self.handle.take() {
            h.thread().unpark();
            let _ = h.join();
        }
        self.peak.load(Ordering::Acquire)
    }
}

impl Drop for MemoryMonitor {
    fn drop(&mut self) {
        self.finish();
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Fits `spec` `repetitions` times, reporting the median fit time and the
/// overall memory peak. Returns the last fitted model alongside.
pub fn measure_training(
    spec: &ModelSpec,
    train: &CsrMatrix,
    repetitions: usize,
) -> Result<(BenchRecord, TrainedModel)> {
    if repetitions == 0 {
        return Err(Error::InvalidConfig("repetitions must be at least 1".into()));
    }
    let mut times = Vec::with_capacity(repetitions);
    let mut peak = 0;
    let mut model = None;
    for _ in 0..repetitions {
        drop(model.take());
        let monitor = MemoryMonitor::start();
        let start = Instant::now();
        let fitted = spec.fit(train);
        let elapsed = start.elapsed().as_secs_f64();
        peak = peak.max(monitor.stop());
        model = Some(fitted?);
        times.push(elapsed);
    }
    let record = BenchRecord {
        model: spec.kind().name().to_string(),
        config: spec.config_echo(),
        size: train.nnz(),
        n_interactions: train.nnz(),
        fit_seconds: median(&mut times),
        peak_bytes: peak,
        latency_ms_per_1k: None,
        reps: repetitions,
        notes: Vec::new(),
    };
    Ok((record, model.expect("at least one repetition")))
}

/// Wall time of producing top-k lists for a batch of users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyResult {
    pub users: Vec<usize>,
    pub total_ms: f64,
    pub mean_ms: f64,
    /// Set when the batch exceeded the user count and users repeat.
    pub with_replacement: bool,
}

impl LatencyResult {
    pub fn ms_per_1k(&self) -> f64 {
        self.mean_ms * 1000.0
    }
}

/// A seeded batch of user indices; sampled with replacement only when
/// `batch` exceeds `n_users`.
pub fn latency_batch(n_users: usize, batch: usize, seed: u64) -> (Vec<usize>, bool) {
    let mut rng = seeded_rng(seed);
    if batch <= n_users {
        (index::sample(&mut rng, n_users, batch).into_vec(), false)
    } else if n_users == 0 {
        (Vec::new(), true)
    } else {
        ((0..batch).map(|_| rng.gen_range(0..n_users)).collect(), true)
    }
}

pub fn measure_latency<S: Scorer + ?Sized>(
    model: &S,
    train: &CsrMatrix,
    batch: usize,
    k: usize,
    seed: u64,
) -> Result<LatencyResult> {
    if batch == 0 || train.n_rows() == 0 {
        return Err(Error::InvalidConfig("latency needs a nonempty batch and users".into()));
    }
    let (users, with_replacement) = latency_batch(train.n_rows(), batch, seed);
    let rec = Recommender::new(model, train)?;
    let mut buf = vec![0.0; model.n_items()];
    let start = Instant::now();
    for &u in &users {
        std::hint::black_box(rec.recommend_with(u, k, true, &mut buf)?);
    }
    let total_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(LatencyResult {
        mean_ms: total_ms / users.len() as f64,
        total_ms,
        users,
        with_replacement,
    })
}

/// Fit-and-score record: training measurement plus batch latency.
pub fn measure_model(
    spec: &ModelSpec,
    train: &CsrMatrix,
    repetitions: usize,
    batch: usize,
    seed: u64,
) -> Result<(BenchRecord, TrainedModel)> {
    let (mut record, model) = measure_training(spec, train, repetitions)?;
    let latency = measure_latency(&model, train, batch, 10, seed)?;
    record.latency_ms_per_1k = Some(latency.ms_per_1k());
    if latency.with_replacement {
        record
            .notes
            .push(format!("latency batch of {batch} sampled with replacement"));
    }
    Ok((record, model))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub sizes: Vec<usize>,
    pub seed: u64,
    pub repetitions: usize,
    /// Permits sizes of at least [`LARGE_SWEEP_SIZE`].
    pub allow_large: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            sizes: vec![100_000, 1_000_000, 10_000_000],
            seed: 0,
            repetitions: 3,
            allow_large: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub records: Vec<BenchRecord>,
    pub warnings: Vec<String>,
}

impl SweepResult {
    /// Fit seconds per model at each size, in sweep order.
    pub fn times_by_model(&self) -> Vec<(String, Vec<(usize, f64)>)> {
        let mut out: Vec<(String, Vec<(usize, f64)>)> = Vec::new();
        for r in &self.records {
            match out.iter_mut().find(|(m, _)| *m == r.model) {
                Some((_, v)) => v.push((r.size, r.fit_seconds)),
                None => out.push((r.model.clone(), vec![(r.size, r.fit_seconds)])),
            }
        }
        out
    }
}

/// Subsamples `d` to each size, preprocesses, and measures every model.
pub fn scalability_sweep(specs: &[ModelSpec], d: &Dataset, opts: &SweepOptions) -> Result<SweepResult> {
    if opts.sizes.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidConfig("sweep sizes must be ascending".into()));
    }
    let mut result = SweepResult::default();
    for &size in &opts.sizes {
        if size > d.len() {
            let msg = format!("skipping size {size}: dataset has only {} interactions", d.len());
            warn!("{msg}");
            result.warnings.push(msg);
            continue;
        }
        if size >= LARGE_SWEEP_SIZE && !opts.allow_large {
            let msg = format!("skipping size {size}: large sweeps are disabled");
            warn!("{msg}");
            result.warnings.push(msg);
            continue;
        }
        let sample = Preprocessing::default().apply(&subsample(d, size, opts.seed)?)?;
        if sample.is_empty() {
            let msg = format!("skipping size {size}: nothing survives preprocessing");
            warn!("{msg}");
            result.warnings.push(msg);
            continue;
        }
        let train = sample.to_binary_matrix();
        for spec in specs {
            let (mut record, _) = measure_training(spec, &train, opts.repetitions)?;
            record.size = size;
            result.records.push(record);
        }
    }
    Ok(result)
}

/// Fraction of users whose profiles are truncated in the cold-start protocol.
pub const COLD_USER_FRACTION: f64 = 0.1;

/// Split in which a random 10% of users keep at most `max_profile` training
/// interactions; only those users have test items.
pub fn cold_start_split(d: &Dataset, max_profile: usize, seed: u64) -> Result<EvalSplit> {
    if max_profile == 0 {
        return Err(Error::InvalidConfig("max_profile must be at least 1".into()));
    }
    let n_users = d.n_users();
    let n_cold = ((n_users as f64 * COLD_USER_FRACTION).round() as usize).clamp(1.min(n_users), n_users);
    let mut rng = seeded_rng(seed);
    let mut cold = vec![false; n_users];
    for u in index::sample(&mut rng, n_users, n_cold) {
        cold[u] = true;
    }
    let mut per_user: Vec<Vec<u32>> = vec![Vec::new(); n_users];
    for x in d.interactions() {
        per_user[x.user as usize].push(x.item);
    }
    let mut train_rows = Vec::with_capacity(n_users);
    let mut test_relevant = Vec::with_capacity(n_users);
    for (u, mut items) in per_user.into_iter().enumerate() {
        items.sort_unstable();
        items.dedup();
        if !cold[u] {
            train_rows.push(items);
            test_relevant.push(Vec::new());
            continue;
        }
        items.shuffle(&mut rng);
        let keep = max_profile.min(crate::ingest::train_count(items.len(), 0.8));
        let mut test = items.split_off(keep);
        test.sort_unstable();
        train_rows.push(items);
        test_relevant.push(test);
    }
    Ok(EvalSplit {
        train: CsrMatrix::from_binary_rows(train_rows, d.n_items())?,
        test_relevant,
        seed,
    })
}

/// Fits on the truncated training data and reports metrics over the cold users.
pub fn cold_start_eval(spec: &ModelSpec, d: &Dataset, max_profile: usize, seed: u64) -> Result<MetricsReport> {
    let split = cold_start_split(d, max_profile, seed)?;
    let model = spec.fit(&split.train)?;
    let mut report = evaluate_scorer(&model, &split, &[10])?;
    report.model = spec.kind().name().to_string();
    report.config = format!("{} max_profile={max_profile}", spec.config_echo());
    Ok(report)
}

/// How each model can absorb new data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub supports_user_fold_in: bool,
    pub supports_new_user_scoring_without_refit: bool,
    pub requires_full_refit_for_new_items: bool,
}

impl Capabilities {
    pub fn of(kind: ModelKind) -> Self {
        let latent = matches!(kind, ModelKind::Als | ModelKind::FunkSvd);
        Capabilities {
            supports_user_fold_in: kind == ModelKind::Als,
            supports_new_user_scoring_without_refit: !latent,
            requires_full_refit_for_new_items: true,
        }
    }

    pub fn supports_incremental_users(&self) -> bool {
        self.supports_user_fold_in || self.supports_new_user_scoring_without_refit
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapabilityMatrix {
    pub rows: Vec<(ModelKind, Capabilities)>,
}

impl CapabilityMatrix {
    pub fn all() -> Self {
        CapabilityMatrix {
            rows: ModelKind::ALL.iter().map(|&k| (k, Capabilities::of(k))).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementalRecord {
    pub model: String,
    pub n_new_users: usize,
    /// Fit time without the new users.
    pub base_fit_seconds: f64,
    /// Fold-in (if any) plus scoring of the new users.
    pub incorporate_seconds: f64,
    /// Full refit including the new users, plus the same scoring.
    pub retrain_seconds: f64,
    pub incremental: MetricsReport,
    pub retrained: MetricsReport,
}

impl IncrementalRecord {
    /// `retrained − incremental` for `metric` at `k`.
    pub fn delta(&self, metric: Metric, k: usize) -> Option<f64> {
        Some(self.retrained.get(metric, k)? - self.incremental.get(metric, k)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum IncrementalOutcome {
    NotSupported { model: String, reason: String },
    Measured(Box<IncrementalRecord>),
}

fn time_scoring<S: Scorer + ?Sized>(model: &S, train: &CsrMatrix, users: &[usize]) -> Result<f64> {
    let rec = Recommender::new(model, train)?;
    let mut buf = vec![0.0; model.n_items()];
    let start = Instant::now();
    for &u in users {
        std::hint::black_box(rec.recommend_with(u, 10, true, &mut buf)?);
    }
    Ok(start.elapsed().as_secs_f64())
}

/// Compares absorbing held-out users without refitting against a full refit.
pub fn incremental_update_eval(
    spec: &ModelSpec,
    d: &Dataset,
    new_user_fraction: f64,
    seed: u64,
) -> Result<IncrementalOutcome> {
    let kind = spec.kind();
    if !Capabilities::of(kind).supports_incremental_users() {
        return Ok(IncrementalOutcome::NotSupported {
            model: kind.name().to_string(),
            reason: "no fold-in is defined and new users cannot be scored without a refit".into(),
        });
    }
    if !(new_user_fraction > 0.0 && new_user_fraction < 1.0) {
        return Err(Error::InvalidConfig("new_user_fraction must lie in (0, 1)".into()));
    }
    let split = holdout_split(d, 0.8, seed)?;
    let n_users = split.n_users();
    let n_new = ((n_users as f64 * new_user_fraction).round() as usize).clamp(1.min(n_users), n_users);
    let mut rng = seeded_rng(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut new_users = index::sample(&mut rng, n_users, n_new).into_vec();
    new_users.sort_unstable();
    let mut is_new = vec![false; n_users];
    for &u in &new_users {
        is_new[u] = true;
    }

    let base_rows = (0..n_users)
        .map(|u| if is_new[u] { Vec::new() } else { split.train.row(u).cols.to_vec() })
        .collect();
    let base_train = CsrMatrix::from_binary_rows(base_rows, split.n_items())?;
    let eval_split = EvalSplit {
        train: split.train.clone(),
        test_relevant: (0..n_users)
            .map(|u| if is_new[u] { split.test_relevant[u].clone() } else { Vec::new() })
            .collect(),
        seed,
    };

    let start = Instant::now();
    let base = spec.fit(&base_train)?;
    let base_fit_seconds = start.elapsed().as_secs_f64();

    let (incorporate_seconds, incremental) = match (&base.params, spec) {
        (ModelParams::Latent(latent), ModelSpec::Als(cfg)) => {
            let start = Instant::now();
            let mut updated = latent.clone();
            for &u in &new_users {
                let items: Vec<usize> = split.train.row(u).cols.iter().map(|&i| i as usize).collect();
                updated.set_user(u, &fold_in_user(latent, cfg, &items)?);
            }
            let fold = start.elapsed().as_secs_f64();
            let score = time_scoring(&updated, &split.train, &new_users)?;
            (fold + score, evaluate_scorer(&updated, &eval_split, &[10])?)
        }
        _ => (
            time_scoring(&base, &split.train, &new_users)?,
            evaluate_scorer(&base, &eval_split, &[10])?,
        ),
    };

    let start = Instant::now();
    let full = spec.fit(&split.train)?;
    let refit = start.elapsed().as_secs_f64();
    let retrain_seconds = refit + time_scoring(&full, &split.train, &new_users)?;
    let retrained = evaluate_scorer(&full, &eval_split, &[10])?;

    let label = |mut r: MetricsReport| {
        r.model = kind.name().to_string();
        r.config = spec.config_echo();
        r
    };
    Ok(IncrementalOutcome::Measured(Box::new(IncrementalRecord {
        model: kind.name().to_string(),
        n_new_users: new_users.len(),
        base_fit_seconds,
        incorporate_seconds,
        retrain_seconds,
        incremental: label(incremental),
        retrained: label(retrained),
    })))
}
