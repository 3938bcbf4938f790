//! Item-item linear models: EASE-R (closed form) and SLIM / SLIM-ElasticNet
//! (per-column coordinate descent).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Recommender;
use crate::error::{Error, Result};
use crate::linalg::Cholesky;
use crate::sparse::{sparse_topk_product, CsrMatrix, InteractionMatrix, SparseWeights};

/// Coefficients with smaller magnitude are not stored.
pub const WEIGHT_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EaseConfig {
    pub lambda: f64,
    /// Largest item count for which the dense Gram matrix is built.
    pub max_items: usize,
}

impl Default for EaseConfig {
    fn default() -> Self {
        EaseConfig {
            lambda: 0.5,
            max_items: 50_000,
        }
    }
}

/// Dense `XᵀX` (row-major, items x items).
fn dense_gram(train: &InteractionMatrix) -> Vec<f64> {
    let n = train.n_cols();
    let mut gram = vec![0.0; n * n];
    for u in 0..train.n_rows() {
        let row = train.row(u);
        for (a, wa) in row.iter() {
            let dst = &mut gram[a * n..(a + 1) * n];
            for (b, wb) in row.iter() {
                dst[b] += wa * wb;
            }
        }
    }
    gram
}

/// EASE-R: `B = I - P diag(1/diag(P))` with `P = (XᵀX + λI)⁻¹`, diagonal forced to zero.
pub fn fit_ease(train: &InteractionMatrix, cfg: &EaseConfig) -> Result<SparseWeights> {
    if !(cfg.lambda > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "EASE lambda must be > 0, got {}",
            cfg.lambda
        )));
    }
    let n = train.n_cols();
    if n == 0 {
        return Err(Error::InvalidConfig("EASE needs at least one item".into()));
    }
    if n > cfg.max_items {
        return Err(Error::TooManyItems {
            n_items: n,
            cap: cfg.max_items,
        });
    }
    let mut gram = dense_gram(train);
    for i in 0..n {
        gram[i * n + i] += cfg.lambda;
    }
    let chol = Cholesky::factor(&gram, n).map_err(|e| {
        Error::Numeric(format!("EASE Gram matrix could not be inverted: {e}"))
    })?;
    drop(gram);
    let p = chol.inverse();
    let rows = (0..n)
        .into_par_iter()
        .map(|i| {
            let row = &p[i * n..(i + 1) * n];
            (0..n)
                .filter(|&j| j != i)
                .filter_map(|j| {
                    let b = -row[j] / p[j * n + j];
                    (b.abs() >= WEIGHT_EPSILON).then_some((j as u32, b))
                })
                .collect()
        })
        .collect();
    Ok(SparseWeights::from_sorted_rows(rows))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlimConfig {
    /// Overall regularization strength.
    pub alpha: f64,
    /// Share of `alpha` applied as L1; the rest is L2.
    pub l1_ratio: f64,
    pub max_iters: usize,
    /// Stop once a full sweep changes no coefficient by more than this.
    pub tol: f64,
    pub nonnegative: bool,
}

impl Default for SlimConfig {
    fn default() -> Self {
        SlimConfig {
            alpha: 1e-4,
            l1_ratio: 1.0,
            max_iters: 100,
            tol: 1e-4,
            nonnegative: true,
        }
    }
}

impl SlimConfig {
    /// The ElasticNet variant: same strength, half L1 and half L2.
    pub fn elastic_net() -> Self {
        SlimConfig {
            l1_ratio: 0.5,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !(0.0..=1.0).contains(&self.l1_ratio) {
            return Err(Error::InvalidConfig(format!(
                "SLIM needs alpha > 0 and l1_ratio in [0, 1], got alpha={} l1_ratio={}",
                self.alpha, self.l1_ratio
            )));
        }
        if !(self.tol > 0.0) || self.max_iters == 0 {
            return Err(Error::InvalidConfig("SLIM needs tol > 0 and max_iters >= 1".into()));
        }
        Ok(())
    }

    fn l1(&self) -> f64 {
        self.alpha * self.l1_ratio
    }

    fn l2(&self) -> f64 {
        self.alpha * (1.0 - self.l1_ratio)
    }
}

/// Sparse `XᵀX`, the only view of the data coordinate descent needs.
pub fn gram_matrix(train: &InteractionMatrix) -> CsrMatrix {
    sparse_topk_product(&train.transpose(), train, None).expect("XᵀX dimensions agree")
}

/// Result of one target column.
#[derive(Debug, Clone, PartialEq)]
pub struct SlimColumn {
    /// Nonzero coefficients, sorted by item.
    pub weights: Vec<(u32, f64)>,
    pub sweeps: usize,
    /// Objective after each sweep (empty unless tracing was requested).
    pub objective_trace: Vec<f64>,
}

/// Per-worker scratch space, reset between columns.
struct ColumnWorkspace {
    w: Vec<f64>,
    gw: Vec<f64>,
    target_col: Vec<f64>,
    candidates: Vec<u32>,
    /// Coefficients updated at least once in the current column.
    changed: Vec<u32>,
    was_changed: Vec<bool>,
}

impl ColumnWorkspace {
    fn new(n: usize) -> Self {
        ColumnWorkspace {
            w: vec![0.0; n],
            gw: vec![0.0; n],
            target_col: vec![0.0; n],
            candidates: Vec::new(),
            changed: Vec::new(),
            was_changed: vec![false; n],
        }
    }
}

fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

fn solve_column(
    gram: &CsrMatrix,
    diag: &[f64],
    target: usize,
    cfg: &SlimConfig,
    trace: bool,
    ws: &mut ColumnWorkspace,
) -> SlimColumn {
    let n = gram.n_cols();
    let (l1, l2) = (cfg.l1(), cfg.l2());
    for (k, g) in gram.row(target).iter() {
        ws.target_col[k] = g;
    }
    ws.candidates.clear();
    if cfg.nonnegative {
        // Items never co-occurring with the target have a non-positive
        // gradient for every w >= 0 and stay at zero.
        ws.candidates.extend(
            gram.row(target)
                .iter()
                .filter(|&(k, g)| k != target && g > 0.0)
                .map(|(k, _)| k as u32),
        );
    } else {
        ws.candidates
            .extend((0..n).filter(|&k| k != target && diag[k] > 0.0).map(|k| k as u32));
    }

    let objective = |ws: &ColumnWorkspace| {
        let mut value = 0.5 * diag[target];
        for &k in &ws.candidates {
            let (k, w) = (k as usize, ws.w[k as usize]);
            value += -w * ws.target_col[k] + 0.5 * w * ws.gw[k] + l1 * w.abs() + 0.5 * l2 * w * w;
        }
        value
    };

    let mut trace_values = Vec::new();
    let mut sweeps = 0;
    while sweeps < cfg.max_iters {
        sweeps += 1;
        let mut max_delta = 0.0f64;
        for &k in &ws.candidates {
            let k = k as usize;
            let old = ws.w[k];
            let rho = ws.target_col[k] - ws.gw[k] + diag[k] * old;
            let denom = diag[k] + l2;
            let mut new = if denom > 0.0 {
                soft_threshold(rho, l1) / denom
            } else {
                0.0
            };
            if cfg.nonnegative && new < 0.0 {
                new = 0.0;
            }
            let delta = new - old;
            if delta != 0.0 {
                if !ws.was_changed[k] {
                    ws.was_changed[k] = true;
                    ws.changed.push(k as u32);
                }
                ws.w[k] = new;
                for (l, g) in gram.row(k).iter() {
                    ws.gw[l] += delta * g;
                }
                max_delta = max_delta.max(delta.abs());
            }
        }
        if trace {
            trace_values.push(objective(ws));
        }
        if max_delta < cfg.tol {
            break;
        }
    }

    let mut weights: Vec<(u32, f64)> = ws
        .candidates
        .iter()
        .map(|&k| (k, ws.w[k as usize]))
        .filter(|&(_, w)| w.abs() >= WEIGHT_EPSILON)
        .collect();
    weights.sort_unstable_by_key(|&(k, _)| k);

    // Reset only what this column touched.
    for &k in &ws.changed {
        let k = k as usize;
        for (l, _) in gram.row(k).iter() {
            ws.gw[l] = 0.0;
        }
        ws.w[k] = 0.0;
        ws.was_changed[k] = false;
    }
    ws.changed.clear();
    for (k, _) in gram.row(target).iter() {
        ws.target_col[k] = 0.0;
    }

    SlimColumn {
        weights,
        sweeps,
        objective_trace: trace_values,
    }
}

fn gram_diagonal(gram: &CsrMatrix) -> Vec<f64> {
    (0..gram.n_rows()).map(|k| gram.get(k, k)).collect()
}

/// Solves the SLIM regression for a single target item, recording the
/// objective `½‖x_t − Xw‖² + α·ρ‖w‖₁ + ½α(1−ρ)‖w‖²` after every sweep.
pub fn fit_slim_column(train: &InteractionMatrix, target: usize, cfg: &SlimConfig) -> Result<SlimColumn> {
    cfg.validate()?;
    if target >= train.n_cols() {
        return Err(Error::IndexOutOfBounds {
            index: target,
            len: train.n_cols(),
        });
    }
    let gram = gram_matrix(train);
    let diag = gram_diagonal(&gram);
    let mut ws = ColumnWorkspace::new(gram.n_cols());
    Ok(solve_column(&gram, &diag, target, cfg, true, &mut ws))
}

/// SLIM weights plus the number of sweeps each column used.
#[derive(Debug, Clone)]
pub struct SlimFit {
    pub weights: SparseWeights,
    pub sweeps: Vec<usize>,
}

pub fn fit_slim_detailed(train: &InteractionMatrix, cfg: &SlimConfig) -> Result<SlimFit> {
    cfg.validate()?;
    let n = train.n_cols();
    let gram = gram_matrix(train);
    let diag = gram_diagonal(&gram);
    let columns: Vec<SlimColumn> = (0..n)
        .into_par_iter()
        .map_init(
            || ColumnWorkspace::new(n),
            |ws, j| solve_column(&gram, &diag, j, cfg, false, ws),
        )
        .collect();
    // Column j of the weight matrix holds target j's coefficients.
    let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
    let mut sweeps = Vec::with_capacity(n);
    for (j, col) in columns.into_iter().enumerate() {
        for (k, w) in col.weights {
            rows[k as usize].push((j as u32, w));
        }
        sweeps.push(col.sweeps);
    }
    Ok(SlimFit {
        weights: SparseWeights::from_sorted_rows(rows),
        sweeps,
    })
}

pub fn fit_slim(train: &InteractionMatrix, cfg: &SlimConfig) -> Result<SparseWeights> {
    fit_slim_detailed(train, cfg).map(|f| f.weights)
}

/// Top-k items for `user` from an item-item weight matrix.
pub fn score_item_model(
    model: &SparseWeights,
    train: &InteractionMatrix,
    user: usize,
    k: usize,
    filter_seen: bool,
) -> Result<Vec<u32>> {
    Recommender::new(model, train)?.recommend(user, k, filter_seen)
}
