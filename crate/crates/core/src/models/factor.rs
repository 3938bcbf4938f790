//! Latent-factor models: implicit-feedback ALS and positive-only FunkSVD.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Recommender, Scorer};
use crate::codec;
use crate::error::{Error, Result};
use crate::ingest::seeded_rng;
use crate::linalg::{dot, Cholesky};
use crate::sparse::{InteractionMatrix, RowView};

/// Half-width of the uniform initialization interval.
pub const INIT_SCALE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlsConfig {
    pub factors: usize,
    pub iterations: usize,
    pub reg: f64,
    /// Confidence is `1 + confidence_alpha * x_ui`.
    pub confidence_alpha: f64,
    pub seed: u64,
}

impl Default for AlsConfig {
    fn default() -> Self {
        AlsConfig {
            factors: 50,
            iterations: 20,
            reg: 0.01,
            confidence_alpha: 40.0,
            seed: 0,
        }
    }
}

impl AlsConfig {
    fn validate(&self) -> Result<()> {
        if self.factors == 0 || self.iterations == 0 {
            return Err(Error::InvalidConfig("ALS needs factors >= 1 and iterations >= 1".into()));
        }
        if !(self.reg > 0.0) || !(self.confidence_alpha >= 0.0) {
            return Err(Error::InvalidConfig(
                "ALS needs reg > 0 and confidence_alpha >= 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub factors: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub reg: f64,
    pub seed: u64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            factors: 50,
            epochs: 30,
            learning_rate: 0.01,
            reg: 0.02,
            seed: 0,
        }
    }
}

/// Dense user and item factor matrices (row-major) of a shared rank.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentModel {
    n_users: usize,
    n_items: usize,
    factors: usize,
    user_factors: Vec<f64>,
    item_factors: Vec<f64>,
}

impl LatentModel {
    pub fn new(
        n_users: usize,
        n_items: usize,
        factors: usize,
        user_factors: Vec<f64>,
        item_factors: Vec<f64>,
    ) -> Result<Self> {
        if user_factors.len() != n_users * factors || item_factors.len() != n_items * factors {
            return Err(Error::DimensionMismatch(
                "factor arrays do not match the stated dimensions".into(),
            ));
        }
        if user_factors.iter().chain(&item_factors).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("latent factors contain non-finite values".into()));
        }
        Ok(LatentModel {
            n_users,
            n_items,
            factors,
            user_factors,
            item_factors,
        })
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn factors(&self) -> usize {
        self.factors
    }

    pub fn user(&self, u: usize) -> &[f64] {
        &self.user_factors[u * self.factors..(u + 1) * self.factors]
    }

    pub fn item(&self, i: usize) -> &[f64] {
        &self.item_factors[i * self.factors..(i + 1) * self.factors]
    }

    pub fn user_factors(&self) -> &[f64] {
        &self.user_factors
    }

    pub fn item_factors(&self) -> &[f64] {
        &self.item_factors
    }

    pub fn predict(&self, u: usize, i: usize) -> f64 {
        dot(self.user(u), self.item(i))
    }

    /// Replaces one user's factor row (used after fold-in).
    pub fn set_user(&mut self, u: usize, factors: &[f64]) {
        let f = self.factors;
        self.user_factors[u * f..(u + 1) * f].copy_from_slice(factors);
    }

    /// Scores every item for an arbitrary user vector.
    pub fn score_vector(&self, user: &[f64], out: &mut [f64]) {
        for (i, s) in out.iter_mut().enumerate() {
            *s = dot(user, self.item(i));
        }
    }

    pub(crate) fn write_to(&self, w: &mut impl Write) -> Result<()> {
        codec::write_u64(w, self.n_users as u64)?;
        codec::write_u64(w, self.n_items as u64)?;
        codec::write_u64(w, self.factors as u64)?;
        codec::write_f64s(w, &self.user_factors)?;
        codec::write_f64s(w, &self.item_factors)
    }

    pub(crate) fn read_from(r: &mut impl Read) -> Result<Self> {
        let n_users = codec::read_u64(r)? as usize;
        let n_items = codec::read_u64(r)? as usize;
        let factors = codec::read_u64(r)? as usize;
        let total = (n_users + n_items).checked_mul(factors);
        if total.is_none_or(|t| t > 1 << 34) {
            return Err(Error::Malformed("latent model dimensions are implausible".into()));
        }
        let users = codec::read_f64s(r, n_users * factors)?;
        let items = codec::read_f64s(r, n_items * factors)?;
        Self::new(n_users, n_items, factors, users, items)
    }
}

impl Scorer for LatentModel {
    fn n_items(&self) -> usize {
        self.n_items
    }

    fn score_into(&self, _train: &InteractionMatrix, user: usize, out: &mut [f64]) {
        if user < self.n_users {
            self.score_vector(self.user(user), out);
        }
    }
}

fn random_factors(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-INIT_SCALE..=INIT_SCALE)).collect()
}

/// `Vᵀ V` for a row-major factor matrix.
fn factor_gram(factors: &[f64], f: usize) -> Vec<f64> {
    let mut gram = vec![0.0; f * f];
    for row in factors.chunks_exact(f) {
        for a in 0..f {
            let ra = row[a];
            if ra == 0.0 {
                continue;
            }
            let dst = &mut gram[a * f..(a + 1) * f];
            for (d, &rb) in dst.iter_mut().zip(row) {
                *d += ra * rb;
            }
        }
    }
    gram
}

/// Normal equations `A x = b` of one row's implicit least-squares problem:
/// `A = OᵀO + Σ (c_i − 1) o_i o_iᵀ + reg·I`, `b = Σ c_i o_i`.
pub fn als_normal_equations(
    gram: &[f64],
    other: &[f64],
    f: usize,
    row: RowView<'_>,
    cfg: &AlsConfig,
) -> (Vec<f64>, Vec<f64>) {
    let mut a = gram.to_vec();
    for d in 0..f {
        a[d * f + d] += cfg.reg;
    }
    let mut b = vec![0.0; f];
    for (i, x) in row.iter() {
        let conf = 1.0 + cfg.confidence_alpha * x;
        let v = &other[i * f..(i + 1) * f];
        let extra = conf - 1.0;
        for p in 0..f {
            let vp = v[p] * extra;
            let dst = &mut a[p * f..(p + 1) * f];
            for (dq, &vq) in dst.iter_mut().zip(v) {
                *dq += vp * vq;
            }
            b[p] += conf * v[p];
        }
    }
    (a, b)
}

fn als_solve_row(
    gram: &[f64],
    other: &[f64],
    f: usize,
    row: RowView<'_>,
    cfg: &AlsConfig,
) -> Result<Vec<f64>> {
    if row.is_empty() {
        return Ok(vec![0.0; f]);
    }
    let (a, mut b) = als_normal_equations(gram, other, f, row, cfg);
    let chol = Cholesky::factor(&a, f)
        .map_err(|e| Error::Numeric(format!("ALS row solve failed: {e}")))?;
    chol.solve_in_place(&mut b);
    Ok(b)
}

/// One half-round: solves every row of `rows` against the frozen `other` factors.
pub fn als_half_step(
    rows: &InteractionMatrix,
    other: &[f64],
    cfg: &AlsConfig,
) -> Result<Vec<f64>> {
    let f = cfg.factors;
    let gram = factor_gram(other, f);
    let solved: Vec<Vec<f64>> = (0..rows.n_rows())
        .into_par_iter()
        .map(|r| als_solve_row(&gram, other, f, rows.row(r), cfg))
        .collect::<Result<_>>()?;
    Ok(solved.concat())
}

/// `Σ_{u,i} c_ui (p_ui − uᵀv)² + reg (‖U‖² + ‖V‖²)` over all cells.
pub fn als_objective(train: &InteractionMatrix, model: &LatentModel, cfg: &AlsConfig) -> f64 {
    let f = model.factors;
    // Σ_all (uᵀv)² = Σ_u uᵀ (VᵀV) u; observed cells are then corrected.
    let gram = factor_gram(&model.item_factors, f);
    let mut total = 0.0;
    for u in 0..model.n_users {
        let uf = model.user(u);
        let mut quad = 0.0;
        for a in 0..f {
            quad += uf[a] * dot(&gram[a * f..(a + 1) * f], uf);
        }
        total += quad;
        for (i, x) in train.row(u).iter() {
            let pred = dot(uf, model.item(i));
            let conf = 1.0 + cfg.confidence_alpha * x;
            total += conf * (1.0 - pred).powi(2) - pred * pred;
        }
    }
    let norms: f64 = model
        .user_factors
        .iter()
        .chain(&model.item_factors)
        .map(|v| v * v)
        .sum();
    total + cfg.reg * norms
}

/// ALS with the per-round objective values.
pub fn fit_als_traced(train: &InteractionMatrix, cfg: &AlsConfig) -> Result<(LatentModel, Vec<f64>)> {
    cfg.validate()?;
    let (n_users, n_items, f) = (train.n_rows(), train.n_cols(), cfg.factors);
    let mut rng = seeded_rng(cfg.seed);
    let user_factors = random_factors(&mut rng, n_users * f);
    let item_factors = random_factors(&mut rng, n_items * f);
    let mut model = LatentModel::new(n_users, n_items, f, user_factors, item_factors)?;
    let by_item = train.transpose();
    let mut trace = Vec::with_capacity(cfg.iterations);
    for _ in 0..cfg.iterations {
        model.user_factors = als_half_step(train, &model.item_factors, cfg)?;
        model.item_factors = als_half_step(&by_item, &model.user_factors, cfg)?;
        trace.push(als_objective(train, &model, cfg));
    }
    Ok((model, trace))
}

pub fn fit_als(train: &InteractionMatrix, cfg: &AlsConfig) -> Result<LatentModel> {
    fit_als_traced(train, cfg).map(|(m, _)| m)
}

fn fold_in(
    other: &[f64],
    n_other: usize,
    f: usize,
    cfg: &AlsConfig,
    history: &[usize],
) -> Result<Vec<f64>> {
    if let Some(&bad) = history.iter().find(|&&i| i >= n_other) {
        return Err(Error::IndexOutOfBounds {
            index: bad,
            len: n_other,
        });
    }
    let row = crate::sparse::CsrMatrix::from_binary_rows(
        vec![history.iter().map(|&i| i as u32).collect()],
        n_other,
    )?;
    als_solve_row(&factor_gram(other, f), other, f, row.row(0), cfg)
}

/// Factor row for a new user with the given item history, solved against the
/// frozen item factors. An empty history yields the zero vector.
pub fn fold_in_user(model: &LatentModel, cfg: &AlsConfig, new_user_items: &[usize]) -> Result<Vec<f64>> {
    check_rank(model, cfg)?;
    fold_in(&model.item_factors, model.n_items, model.factors, cfg, new_user_items)
}

/// Mirror of [`fold_in_user`] for a new item consumed by the given users.
pub fn fold_in_item(model: &LatentModel, cfg: &AlsConfig, item_users: &[usize]) -> Result<Vec<f64>> {
    check_rank(model, cfg)?;
    fold_in(&model.user_factors, model.n_users, model.factors, cfg, item_users)
}

fn check_rank(model: &LatentModel, cfg: &AlsConfig) -> Result<()> {
    if model.factors != cfg.factors {
        return Err(Error::DimensionMismatch(format!(
            "model has {} factors, config {}",
            model.factors, cfg.factors
        )));
    }
    Ok(())
}

/// One simultaneous SGD step on an observed positive: `e = 1 − uᵀv`,
/// `u += lr (e v − reg u)`, `v += lr (e u − reg v)` using the old `u`.
pub fn sgd_step(u: &mut [f64], v: &mut [f64], learning_rate: f64, reg: f64) {
    let e = 1.0 - dot(u, v);
    for (ud, vd) in u.iter_mut().zip(v.iter_mut()) {
        let (uo, vo) = (*ud, *vd);
        *ud = uo + learning_rate * (e * vo - reg * uo);
        *vd = vo + learning_rate * (e * uo - reg * vo);
    }
}

/// FunkSVD trained by SGD over the observed positives only, without biases.
pub fn fit_funk_svd(train: &InteractionMatrix, cfg: &SgdConfig) -> Result<LatentModel> {
    if cfg.factors == 0 || cfg.epochs == 0 {
        return Err(Error::InvalidConfig("FunkSVD needs factors >= 1 and epochs >= 1".into()));
    }
    if !(cfg.learning_rate > 0.0) || !(cfg.reg >= 0.0) {
        return Err(Error::InvalidConfig("FunkSVD needs learning_rate > 0 and reg >= 0".into()));
    }
    let (n_users, n_items, f) = (train.n_rows(), train.n_cols(), cfg.factors);
    let mut rng = seeded_rng(cfg.seed);
    let mut users = random_factors(&mut rng, n_users * f);
    let mut items = random_factors(&mut rng, n_items * f);
    let mut positives: Vec<(u32, u32)> = (0..n_users)
        .flat_map(|u| train.row(u).cols.iter().map(move |&i| (u as u32, i)))
        .collect();
    for epoch in 0..cfg.epochs {
        positives.shuffle(&mut rng);
        for &(u, i) in &positives {
            let (u, i) = (u as usize, i as usize);
            sgd_step(
                &mut users[u * f..(u + 1) * f],
                &mut items[i * f..(i + 1) * f],
                cfg.learning_rate,
                cfg.reg,
            );
        }
        if users.iter().chain(&items).any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "FunkSVD diverged in epoch {}; use a smaller learning_rate",
                epoch + 1
            )));
        }
    }
    LatentModel::new(n_users, n_items, f, users, items)
}

/// Top-k items for `user` from a latent model.
pub fn score_latent(
    model: &LatentModel,
    train: &InteractionMatrix,
    user: usize,
    k: usize,
    filter_seen: bool,
) -> Result<Vec<u32>> {
    if user >= model.n_users {
        return Err(Error::IndexOutOfBounds {
            index: user,
            len: model.n_users,
        });
    }
    Recommender::new(model, train)?.recommend(user, k, filter_seen)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::CsrMatrix;

    fn binary(rows: &[&[u32]], n_items: usize) -> InteractionMatrix {
        CsrMatrix::from_binary_rows(rows.iter().map(|r| r.to_vec()).collect(), n_items).unwrap()
    }

    #[test]
    fn all_ones_is_fit_closely() {
        let x = binary(&[&[0, 1], &[0, 1]], 2);
        let cfg = AlsConfig {
            factors: 2,
            ..Default::default()
        };
        let m = fit_als(&x, &cfg).unwrap();
        for u in 0..2 {
            for i in 0..2 {
                assert!(m.predict(u, i) >= 0.9, "{}", m.predict(u, i));
            }
        }
    }

    #[test]
    fn zero_data_collapses() {
        let x = CsrMatrix::empty(3, 4);
        let cfg = AlsConfig {
            factors: 4,
            iterations: 1,
            ..Default::default()
        };
        let m = fit_als(&x, &cfg).unwrap();
        for u in 0..3 {
            for i in 0..4 {
                assert!(m.predict(u, i).abs() < 0.01);
            }
        }
    }

    #[test]
    fn objective_shortcut_matches_brute_force() {
        let x = binary(&[&[0, 2], &[1], &[0, 1, 3], &[]], 4);
        let cfg = AlsConfig {
            factors: 3,
            iterations: 2,
            ..Default::default()
        };
        let m = fit_als(&x, &cfg).unwrap();
        let mut brute = 0.0;
        for u in 0..4 {
            for i in 0..4 {
                let x_ui = x.get(u, i);
                let p = if x_ui > 0.0 { 1.0 } else { 0.0 };
                let c = 1.0 + cfg.confidence_alpha * x_ui;
                brute += c * (p - m.predict(u, i)).powi(2);
            }
        }
        brute += cfg.reg
            * m.user_factors()
                .iter()
                .chain(m.item_factors())
                .map(|v| v * v)
                .sum::<f64>();
        assert!((brute - als_objective(&x, &m, &cfg)).abs() < 1e-9 * brute.max(1.0));
    }

    #[test]
    fn fold_in_empty_history_is_zero() {
        let x = binary(&[&[0, 1], &[1, 2]], 3);
        let cfg = AlsConfig {
            factors: 2,
            iterations: 3,
            ..Default::default()
        };
        let m = fit_als(&x, &cfg).unwrap();
        assert_eq!(fold_in_user(&m, &cfg, &[]).unwrap(), vec![0.0, 0.0]);
        assert!(fold_in_user(&m, &cfg, &[3]).is_err());
        assert_eq!(fold_in_item(&m, &cfg, &[]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn fold_in_prefers_own_item() {
        // two orthogonal item factors
        let m = LatentModel::new(0, 2, 2, vec![], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let cfg = AlsConfig {
            factors: 2,
            ..Default::default()
        };
        let a = fold_in_user(&m, &cfg, &[0]).unwrap();
        let b = fold_in_user(&m, &cfg, &[1]).unwrap();
        assert!(dot(&a, m.item(0)) > dot(&a, m.item(1)));
        assert!(dot(&b, m.item(1)) > dot(&b, m.item(0)));
    }

    #[test]
    fn latent_ranking_by_dot_product() {
        let m = LatentModel::new(1, 3, 1, vec![2.0], vec![3.0, 1.0, 2.0]).unwrap();
        let x = CsrMatrix::empty(1, 3);
        assert_eq!(score_latent(&m, &x, 0, 3, true).unwrap(), vec![0, 2, 1]);
        let tie = LatentModel::new(1, 3, 1, vec![1.0], vec![1.0, 2.0, 2.0]).unwrap();
        assert_eq!(score_latent(&tie, &x, 0, 2, true).unwrap(), vec![1, 2]);
        assert!(score_latent(&m, &x, 1, 3, true).is_err());
    }

    #[test]
    fn zero_user_vector_falls_back_to_popularity() {
        let m = LatentModel::new(2, 3, 1, vec![0.0, 1.0], vec![3.0, 1.0, 2.0]).unwrap();
        let x = binary(&[&[], &[2]], 3);
        assert_eq!(score_latent(&m, &x, 0, 3, true).unwrap(), vec![2, 0, 1]);
    }

    #[test]
    fn funk_svd_single_interaction_converges() {
        let x = binary(&[&[0]], 1);
        let cfg = SgdConfig {
            factors: 1,
            epochs: 5000,
            ..Default::default()
        };
        let m = fit_funk_svd(&x, &cfg).unwrap();
        assert!((m.predict(0, 0) - 1.0).abs() < 0.05, "{}", m.predict(0, 0));
    }

    #[test]
    fn funk_svd_zero_data_keeps_init_and_is_deterministic() {
        let cfg = SgdConfig {
            factors: 3,
            epochs: 4,
            seed: 11,
            ..Default::default()
        };
        let empty = CsrMatrix::empty(2, 3);
        let m = fit_funk_svd(&empty, &cfg).unwrap();
        let mut rng = seeded_rng(11);
        let users = random_factors(&mut rng, 6);
        let items = random_factors(&mut rng, 9);
        assert_eq!(m.user_factors(), &users[..]);
        assert_eq!(m.item_factors(), &items[..]);

        let x = binary(&[&[0, 1], &[2]], 3);
        assert_eq!(fit_funk_svd(&x, &cfg).unwrap(), fit_funk_svd(&x, &cfg).unwrap());
    }

    #[test]
    fn funk_svd_divergence_is_reported() {
        let x = binary(&[&[0, 1], &[0, 1]], 2);
        let cfg = SgdConfig {
            factors: 2,
            epochs: 50,
            learning_rate: 50.0,
            ..Default::default()
        };
        assert!(matches!(fit_funk_svd(&x, &cfg), Err(Error::Numeric(_))));
    }
}
