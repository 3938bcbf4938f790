//! Synthetic rating data with planted item clusters.
//!
//! Items are split into equal contiguous clusters and every user belongs to
//! one. Most of a user's positive ratings come from their own cluster; the
//! rest come from a global popularity distribution, so a popularity ranking
//! is a meaningful but beatable baseline. Users' profile lengths follow a
//! power law, and low ratings are sprinkled in as noise for binarization to
//! remove.

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{remap_ids, seeded_rng, Dataset, Preprocessing, RawRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub n_clusters: usize,
    /// Target number of positive (rating >= 4) interactions.
    pub n_interactions: usize,
    /// Probability that a positive is drawn from the user's own cluster.
    pub in_cluster: f64,
    /// Zipf exponent of item popularity, within clusters and globally.
    pub item_skew: f64,
    /// Power-law exponent of user activity.
    pub profile_skew: f64,
    /// Low ratings added per positive.
    pub noise_ratio: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_users: 5_000,
            n_items: 2_000,
            n_clusters: 20,
            n_interactions: 100_000,
            in_cluster: 0.8,
            item_skew: 0.8,
            profile_skew: 0.6,
            noise_ratio: 0.1,
            seed: 0,
        }
    }
}

/// Smallest profile handed to any user, so k-core filtering keeps them.
const MIN_PROFILE: usize = 6;

impl SyntheticConfig {
    /// Scales users, items and interactions together from the defaults.
    pub fn with_interactions(n_interactions: usize, seed: u64) -> Self {
        let base = SyntheticConfig::default();
        let scale = n_interactions as f64 / base.n_interactions as f64;
        SyntheticConfig {
            n_users: ((base.n_users as f64 * scale) as usize).max(base.n_clusters),
            n_items: ((base.n_items as f64 * scale.sqrt()) as usize).max(base.n_clusters * 10),
            n_interactions,
            seed,
            ..base
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_clusters == 0 || self.n_items < self.n_clusters || self.n_users == 0 {
            return Err(Error::InvalidConfig(
                "synthetic data needs users, and at least one item per cluster".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.in_cluster) || self.noise_ratio < 0.0 {
            return Err(Error::InvalidConfig(
                "in_cluster must be a probability and noise_ratio non-negative".into(),
            ));
        }
        let cluster_size = self.n_items / self.n_clusters;
        if self.n_interactions > self.n_users * cluster_size {
            return Err(Error::InvalidConfig(format!(
                "{} interactions do not fit {} users with clusters of {} items",
                self.n_interactions, self.n_users, cluster_size
            )));
        }
        Ok(())
    }

    pub fn cluster_of_item(&self, item: usize) -> usize {
        (item / (self.n_items / self.n_clusters)).min(self.n_clusters - 1)
    }
}

fn zipf_weights(n: usize, exponent: f64) -> Vec<f64> {
    (1..=n).map(|r| (r as f64).powf(-exponent)).collect()
}

/// Per-user positive counts summing to (about) `cfg.n_interactions`.
fn profile_quotas(cfg: &SyntheticConfig, rng: &mut impl Rng) -> Vec<usize> {
    let cap = (cfg.n_items / cfg.n_clusters).max(MIN_PROFILE);
    let mut weights = zipf_weights(cfg.n_users, cfg.profile_skew);
    weights.shuffle(rng);
    let total: f64 = weights.iter().sum();
    let floor = MIN_PROFILE.min(cap);
    let spare = cfg.n_interactions.saturating_sub(floor * cfg.n_users) as f64;
    weights
        .iter()
        .map(|w| (floor + (spare * w / total).round() as usize).min(cap))
        .collect()
}

/// Raw ratings drawn from the planted-cluster model. External ids are
/// 1-based numbers; item id `n + 1` belongs to cluster `n / cluster_size`.
pub fn generate_ratings(cfg: &SyntheticConfig) -> Result<Vec<RawRecord>> {
    cfg.validate()?;
    let mut rng = seeded_rng(cfg.seed);
    let cluster_size = cfg.n_items / cfg.n_clusters;
    let local = WeightedIndex::new(zipf_weights(cluster_size, cfg.item_skew))
        .expect("cluster weights are positive");
    let global = WeightedIndex::new(zipf_weights(cfg.n_items, cfg.item_skew))
        .expect("item weights are positive");
    // Globally popular items are scattered over clusters.
    let mut global_rank: Vec<usize> = (0..cfg.n_items).collect();
    global_rank.shuffle(&mut rng);
    let within: Vec<Vec<usize>> = (0..cfg.n_clusters)
        .map(|c| {
            let mut items: Vec<usize> = (c * cluster_size..(c + 1) * cluster_size).collect();
            items.shuffle(&mut rng);
            items
        })
        .collect();

    let quotas = profile_quotas(cfg, &mut rng);
    let mut records = Vec::with_capacity(cfg.n_interactions + cfg.n_interactions / 8);
    let mut taken = vec![false; cfg.n_items];
    let mut profile = Vec::new();
    let mut clock = 978_300_000i64;
    for (u, &quota) in quotas.iter().enumerate() {
        let cluster = rng.gen_range(0..cfg.n_clusters);
        let user = (u + 1).to_string();
        profile.clear();
        let mut attempts = 0;
        while profile.len() < quota && attempts < quota * 50 {
            attempts += 1;
            let item = if rng.gen_bool(cfg.in_cluster) {
                within[cluster][local.sample(&mut rng)]
            } else {
                global_rank[global.sample(&mut rng)]
            };
            if !taken[item] {
                taken[item] = true;
                profile.push(item);
            }
        }
        let n_noise = (quota as f64 * cfg.noise_ratio).round() as usize;
        let mut noise = Vec::with_capacity(n_noise);
        for _ in 0..n_noise {
            let item = rng.gen_range(0..cfg.n_items);
            if !taken[item] {
                taken[item] = true;
                noise.push(item);
            }
        }
        for &item in &noise {
            clock += 1;
            let rating = rng.gen_range(1..=3) as f64;
            records.push(RawRecord::new(user.clone(), (item + 1).to_string(), rating, clock));
        }
        for &item in &profile {
            clock += 1;
            let rating = if rng.gen_bool(0.5) { 5.0 } else { 4.0 };
            records.push(RawRecord::new(user.clone(), (item + 1).to_string(), rating, clock));
        }
        for &item in profile.iter().chain(&noise) {
            taken[item] = false;
        }
    }
    Ok(records)
}

/// Generated ratings after the default preprocessing (5-core, binarize at 4).
pub fn synthetic_dataset(cfg: &SyntheticConfig) -> Result<Dataset> {
    Preprocessing::default().apply(&remap_ids(&generate_ratings(cfg)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SyntheticConfig {
        SyntheticConfig {
            n_users: 200,
            n_items: 100,
            n_clusters: 5,
            n_interactions: 2_000,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic_by_seed() {
        let cfg = small();
        assert_eq!(generate_ratings(&cfg).unwrap(), generate_ratings(&cfg).unwrap());
        let other = SyntheticConfig { seed: 1, ..small() };
        assert_ne!(generate_ratings(&cfg).unwrap(), generate_ratings(&other).unwrap());
    }

    #[test]
    fn size_and_structure() {
        let cfg = small();
        let records = generate_ratings(&cfg).unwrap();
        let positives: Vec<_> = records.iter().filter(|r| r.rating >= 4.0).collect();
        let n = positives.len() as f64;
        assert!((n - 2_000.0).abs() < 200.0, "{n}");
        let mut pairs: Vec<_> = records.iter().map(|r| (&r.user, &r.item)).collect();
        pairs.sort();
        pairs.dedup();
        assert_eq!(pairs.len(), records.len());
        let d = synthetic_dataset(&cfg).unwrap();
        assert!(d.is_binarized());
        assert!(d.len() > 1_500);
    }

    #[test]
    fn rejects_impossible_configs() {
        let cfg = SyntheticConfig {
            n_interactions: 1_000_000,
            ..small()
        };
        assert!(generate_ratings(&cfg).is_err());
        let cfg = SyntheticConfig {
            n_clusters: 0,
            ..small()
        };
        assert!(generate_ratings(&cfg).is_err());
    }
}
