//! Two-step random-walk item models (P3Alpha, RP3beta) and the popularity baseline.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::Scorer;
use crate::codec;
use crate::error::{Error, Result};
use crate::sparse::{product_rows, CsrMatrix, InteractionMatrix, SparseWeights};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkConfig {
    /// Elementwise exponent on both transition matrices.
    pub alpha: f64,
    /// Popularity penalty exponent on target items.
    pub beta: f64,
    pub topk: usize,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig {
            alpha: 0.6,
            beta: 0.4,
            topk: 100,
        }
    }
}

impl WalkConfig {
    /// Default P3Alpha configuration: the RP3beta defaults with `beta = 0`.
    pub fn p3alpha() -> Self {
        WalkConfig {
            beta: 0.0,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) || !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "walk exponents must be finite and non-negative (alpha={}, beta={})",
                self.alpha, self.beta
            )));
        }
        if self.topk == 0 {
            return Err(Error::InvalidConfig("topk must be at least 1".into()));
        }
        Ok(())
    }
}

/// Item→user and user→item transition matrices, each raised to `alpha`.
fn transitions(train: &InteractionMatrix, alpha: f64) -> (CsrMatrix, CsrMatrix) {
    let t_ui = train.row_normalized().map_values(|p| p.powf(alpha));
    let t_iu = train.transpose().row_normalized().map_values(|p| p.powf(alpha));
    (t_iu, t_ui)
}

/// The untruncated walk product `T_iu · T_ui` with the diagonal kept.
pub fn walk_product(train: &InteractionMatrix, alpha: f64) -> Result<CsrMatrix> {
    let (t_iu, t_ui) = transitions(train, alpha);
    crate::sparse_topk_product(&t_iu, &t_ui, None)
}

fn walk(train: &InteractionMatrix, alpha: f64, beta: f64, topk: usize) -> Result<SparseWeights> {
    let (t_iu, mut t_ui) = transitions(train, alpha);
    if beta != 0.0 {
        // Scaling the columns of T_ui scales the columns of the product.
        let pop = train.column_counts();
        t_ui = scale_columns(&t_ui, &pop, beta);
    }
    let rows = product_rows(&t_iu, &t_ui, Some(topk), true)?;
    Ok(SparseWeights::from_sorted_rows(rows))
}

fn scale_columns(m: &CsrMatrix, pop: &[usize], beta: f64) -> CsrMatrix {
    let penalty: Vec<f64> = pop
        .iter()
        .map(|&p| if p == 0 { 1.0 } else { (p as f64).powf(-beta) })
        .collect();
    let values: Vec<f64> = (0..m.n_rows())
        .flat_map(|r| {
            let penalty = &penalty;
            m.row(r).iter().map(move |(c, v)| v * penalty[c])
        })
        .collect();
    CsrMatrix::from_parts(
        m.n_rows(),
        m.n_cols(),
        m.row_offsets().to_vec(),
        m.col_indices().to_vec(),
        Some(values),
    )
    .expect("same pattern as a valid matrix")
}

/// P3Alpha item model; `cfg.beta` is ignored.
pub fn fit_p3alpha(train: &InteractionMatrix, cfg: &WalkConfig) -> Result<SparseWeights> {
    cfg.validate()?;
    walk(train, cfg.alpha, 0.0, cfg.topk)
}

/// RP3beta: the P3Alpha walk with each target column divided by `pop(j)^beta`.
pub fn fit_rp3beta(train: &InteractionMatrix, cfg: &WalkConfig) -> Result<SparseWeights> {
    cfg.validate()?;
    walk(train, cfg.alpha, cfg.beta, cfg.topk)
}

/// Items by descending training popularity, ties by lower index.
#[derive(Debug, Clone, PartialEq)]
pub struct PopularityRanking {
    order: Vec<u32>,
    counts: Vec<f64>,
}

impl PopularityRanking {
    pub fn from_counts(counts: Vec<f64>) -> Self {
        let mut order: Vec<u32> = (0..counts.len() as u32).collect();
        order.sort_by(|&a, &b| {
            counts[b as usize]
                .partial_cmp(&counts[a as usize])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        PopularityRanking { order, counts }
    }

    pub fn order(&self) -> &[u32] {
        &self.order
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn n_items(&self) -> usize {
        self.counts.len()
    }

    pub(crate) fn write_to(&self, w: &mut impl Write) -> Result<()> {
        codec::write_u64(w, self.counts.len() as u64)?;
        codec::write_f64s(w, &self.counts)
    }

    pub(crate) fn read_from(r: &mut impl Read) -> Result<Self> {
        let n = codec::read_u64(r)? as usize;
        if n > u32::MAX as usize {
            return Err(Error::Malformed("popularity table is too large".into()));
        }
        Ok(Self::from_counts(codec::read_f64s(r, n)?))
    }
}

impl Scorer for PopularityRanking {
    fn n_items(&self) -> usize {
        self.counts.len()
    }

    fn score_into(&self, _train: &InteractionMatrix, _user: usize, out: &mut [f64]) {
        out.copy_from_slice(&self.counts);
    }
}

pub fn fit_top_popular(train: &InteractionMatrix) -> PopularityRanking {
    PopularityRanking::from_counts(train.column_sums())
}
