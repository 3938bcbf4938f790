//! Ranking metrics at K, split aggregation and per-group MAP.
//!
//! `relevant` slices are always sorted ascending (as stored in
//! [`EvalSplit::test_relevant`]); `ranked` lists come from a recommender.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::EvalSplit;
use crate::models::{Recommender, Scorer, TrainedModel};
use crate::sparse::InteractionMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Precision,
    Recall,
    Ndcg,
    Map,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Precision, Metric::Recall, Metric::Ndcg, Metric::Map];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Precision => "precision",
            Metric::Recall => "recall",
            Metric::Ndcg => "ndcg",
            Metric::Map => "map",
        }
    }

    pub fn compute(self, ranked: &[u32], relevant: &[u32], k: usize) -> f64 {
        match self {
            Metric::Precision => precision_at_k(ranked, relevant, k),
            Metric::Recall => recall_at_k(ranked, relevant, k),
            Metric::Ndcg => ndcg_at_k(ranked, relevant, k),
            Metric::Map => map_at_k(ranked, relevant, k),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown metric `{s}`")))
    }
}

/// 1-based positions of relevant items within the top `k`.
fn hits<'a>(ranked: &'a [u32], relevant: &'a [u32], k: usize) -> impl Iterator<Item = usize> + 'a {
    ranked
        .iter()
        .take(k)
        .enumerate()
        .filter(move |(_, item)| relevant.binary_search(item).is_ok())
        .map(|(p, _)| p + 1)
}

fn discount(position: usize) -> f64 {
    1.0 / ((position + 1) as f64).log2()
}

pub fn precision_at_k(ranked: &[u32], relevant: &[u32], k: usize) -> f64 {
    if k == 0 {
        return 0.0;
    }
    hits(ranked, relevant, k).count() as f64 / k as f64
}

pub fn recall_at_k(ranked: &[u32], relevant: &[u32], k: usize) -> f64 {
    if relevant.is_empty() {
        return 0.0;
    }
    hits(ranked, relevant, k).count() as f64 / relevant.len() as f64
}

/// Binary-relevance NDCG with a `1 / log2(p + 1)` discount.
pub fn ndcg_at_k(ranked: &[u32], relevant: &[u32], k: usize) -> f64 {
    let ideal: f64 = (1..=relevant.len().min(k)).map(discount).sum();
    if ideal == 0.0 {
        return 0.0;
    }
    hits(ranked, relevant, k).map(discount).sum::<f64>() / ideal
}

/// Average precision at k, normalized by `min(|relevant|, k)`.
pub fn map_at_k(ranked: &[u32], relevant: &[u32], k: usize) -> f64 {
    let denom = relevant.len().min(k);
    if denom == 0 {
        return 0.0;
    }
    let total: f64 = hits(ranked, relevant, k)
        .enumerate()
        .map(|(n, p)| (n + 1) as f64 / p as f64)
        .sum();
    total / denom as f64
}

/// Timing fields filled in by the benchmark harness.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub fit_seconds: Option<f64>,
    pub peak_bytes: Option<u64>,
    pub latency_ms_per_1k: Option<f64>,
}

/// Metric means at each cutoff: `metric -> k -> value`.
pub type MetricTable = BTreeMap<Metric, BTreeMap<usize, f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub seed: u64,
    pub n_users_evaluated: usize,
    pub metrics: MetricTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: String,
    pub config: String,
    /// Unweighted mean of the per-split means.
    pub metrics: MetricTable,
    pub splits: Vec<SplitMetrics>,
    /// Users evaluated per split (the minimum when several splits are merged).
    pub n_users_evaluated: usize,
    /// AP@k per user group; `None` marks groups without evaluated users.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_map: Option<Vec<Option<f64>>>,
    #[serde(default)]
    pub timing: Timing,
}

impl MetricsReport {
    pub fn get(&self, metric: Metric, k: usize) -> Option<f64> {
        self.metrics.get(&metric)?.get(&k).copied()
    }

    /// Combines single-split reports of one model.
    pub fn aggregate(reports: &[MetricsReport]) -> Result<MetricsReport> {
        let first = reports
            .first()
            .ok_or_else(|| Error::InvalidConfig("nothing to aggregate".into()))?;
        let splits: Vec<SplitMetrics> = reports.iter().flat_map(|r| r.splits.clone()).collect();
        let mut metrics = MetricTable::new();
        for (metric, per_k) in &first.metrics {
            for &k in per_k.keys() {
                let values: Vec<f64> = splits
                    .iter()
                    .filter_map(|s| s.metrics.get(metric).and_then(|m| m.get(&k)).copied())
                    .collect();
                metrics
                    .entry(*metric)
                    .or_default()
                    .insert(k, mean(&values));
            }
        }
        let group_map = first.group_map.as_ref().map(|g| {
            (0..g.len())
                .map(|i| {
                    let present: Vec<f64> = reports
                        .iter()
                        .filter_map(|r| r.group_map.as_ref()?.get(i).copied().flatten())
                        .collect();
                    (!present.is_empty()).then(|| mean(&present))
                })
                .collect()
        });
        Ok(MetricsReport {
            model: first.model.clone(),
            config: first.config.clone(),
            metrics,
            n_users_evaluated: splits.iter().map(|s| s.n_users_evaluated).min().unwrap_or(0),
            splits,
            group_map,
            timing: first.timing.clone(),
        })
    }

    /// Flat rows `model,seed,metric,k,value`, one per split and cutoff, then
    /// the cross-split means with seed `mean`.
    pub fn csv_rows(&self) -> Vec<String> {
        let mut rows = Vec::new();
        for split in &self.splits {
            for (metric, per_k) in &split.metrics {
                for (k, v) in per_k {
                    rows.push(format!("{},{},{},{},{}", self.model, split.seed, metric, k, v));
                }
            }
        }
        for (metric, per_k) in &self.metrics {
            for (k, v) in per_k {
                rows.push(format!("{},mean,{},{},{}", self.model, metric, k, v));
            }
        }
        rows
    }

    pub const CSV_HEADER: &'static str = "model,seed,metric,k,value";

    pub fn to_csv(reports: &[MetricsReport]) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in reports {
            for row in r.csv_rows() {
                out.push_str(&row);
                out.push('\n');
            }
        }
        out
    }
}

/// Sequential sum in a fixed order, so means do not depend on thread count.
fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Top-`k` lists (seen items filtered) for the given users, in input order.
pub fn recommend_all<S: Scorer + ?Sized>(
    scorer: &S,
    train: &InteractionMatrix,
    users: &[usize],
    k: usize,
) -> Result<Vec<Vec<u32>>> {
    let rec = Recommender::new(scorer, train)?;
    users
        .par_iter()
        .map_init(
            || vec![0.0; scorer.n_items()],
            |buf, &u| rec.recommend_with(u, k, true, buf),
        )
        .collect()
}

fn check_split<S: Scorer + ?Sized>(scorer: &S, split: &EvalSplit) -> Result<()> {
    if scorer.n_items() != split.n_items() {
        return Err(Error::DimensionMismatch(format!(
            "model scores {} items but the split has {}",
            scorer.n_items(),
            split.n_items()
        )));
    }
    Ok(())
}

/// Evaluates any scorer on one split. Model name and config are left empty.
pub fn evaluate_scorer<S: Scorer + ?Sized>(
    scorer: &S,
    split: &EvalSplit,
    ks: &[usize],
) -> Result<MetricsReport> {
    check_split(scorer, split)?;
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::InvalidConfig("cutoffs must be a nonempty list of k >= 1".into()));
    }
    let users = split.evaluated_users();
    let k_max = *ks.iter().max().expect("nonempty");
    let lists = recommend_all(scorer, &split.train, &users, k_max)?;
    let mut metrics = MetricTable::new();
    for metric in Metric::ALL {
        for &k in ks {
            let values: Vec<f64> = users
                .iter()
                .zip(&lists)
                .map(|(&u, ranked)| metric.compute(ranked, &split.test_relevant[u], k))
                .collect();
            metrics.entry(metric).or_default().insert(k, mean(&values));
        }
    }
    Ok(MetricsReport {
        model: String::new(),
        config: String::new(),
        metrics: metrics.clone(),
        splits: vec![SplitMetrics {
            seed: split.seed,
            n_users_evaluated: users.len(),
            metrics,
        }],
        n_users_evaluated: users.len(),
        group_map: None,
        timing: Timing::default(),
    })
}

pub fn evaluate_model(model: &TrainedModel, split: &EvalSplit, ks: &[usize]) -> Result<MetricsReport> {
    let mut report = evaluate_scorer(model, split, ks)?;
    report.model = model.kind().name().to_string();
    report.config = model.spec.config_echo();
    Ok(report)
}

/// Users partitioned into equal-size blocks by training-profile length.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupAssignment {
    /// Group index per user.
    pub groups: Vec<usize>,
    pub n_groups: usize,
    /// Smallest and largest profile size within each group.
    pub profile_ranges: Vec<(usize, usize)>,
}

impl GroupAssignment {
    pub fn members(&self, group: usize) -> Vec<usize> {
        (0..self.groups.len()).filter(|&u| self.groups[u] == group).collect()
    }
}

/// Sorts users by profile size (ties by index) and cuts them into
/// `n_groups` contiguous blocks whose sizes differ by at most one.
pub fn group_users_by_profile(train: &InteractionMatrix, n_groups: usize) -> Result<GroupAssignment> {
    let n_users = train.n_rows();
    if n_groups == 0 || n_groups > n_users {
        return Err(Error::InvalidConfig(format!(
            "cannot form {n_groups} groups from {n_users} users"
        )));
    }
    let mut order: Vec<usize> = (0..n_users).collect();
    order.sort_by_key(|&u| (train.row_len(u), u));
    let mut groups = vec![0; n_users];
    let mut profile_ranges = vec![(usize::MAX, 0); n_groups];
    for (pos, &u) in order.iter().enumerate() {
        let g = pos * n_groups / n_users;
        groups[u] = g;
        let len = train.row_len(u);
        let range = &mut profile_ranges[g];
        range.0 = range.0.min(len);
        range.1 = range.1.max(len);
    }
    Ok(GroupAssignment {
        groups,
        n_groups,
        profile_ranges,
    })
}

/// Mean AP@k of each group's evaluated users.
pub fn map_per_group<S: Scorer + ?Sized>(
    scorer: &S,
    split: &EvalSplit,
    groups: &GroupAssignment,
    k: usize,
) -> Result<Vec<Option<f64>>> {
    check_split(scorer, split)?;
    if groups.groups.len() != split.n_users() {
        return Err(Error::DimensionMismatch(
            "group assignment does not cover the split's users".into(),
        ));
    }
    let users = split.evaluated_users();
    let lists = recommend_all(scorer, &split.train, &users, k)?;
    let mut per_group: Vec<Vec<f64>> = vec![Vec::new(); groups.n_groups];
    for (&u, ranked) in users.iter().zip(&lists) {
        per_group[groups.groups[u]].push(map_at_k(ranked, &split.test_relevant[u], k));
    }
    Ok(per_group
        .iter()
        .map(|v| (!v.is_empty()).then(|| mean(v)))
        .collect())
}
