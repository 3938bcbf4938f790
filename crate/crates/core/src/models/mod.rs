//! Recommendation models and the shared ranking rules.
//!
//! Every model scores all items for a user. [`Recommender`] turns scores into
//! a top-k list: seen items are filtered, positive scores rank first
//! (descending, ties to the lower item index), then zero-score items in
//! global popularity order, then negative scores. Lists therefore always
//! reach length k when enough unseen items exist.

pub mod factor;
pub mod graph;
pub mod linear;

use std::cmp::Ordering;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::codec;
use crate::error::{Error, Result};
use crate::sparse::{InteractionMatrix, SparseWeights};

pub use factor::{
    fit_als, fit_funk_svd, fold_in_item, fold_in_user, score_latent, AlsConfig, LatentModel,
    SgdConfig,
};
pub use graph::{fit_p3alpha, fit_rp3beta, fit_top_popular, PopularityRanking, WalkConfig};
pub use linear::{fit_ease, fit_slim, score_item_model, EaseConfig, SlimConfig};

/// Anything that can score every item for a user.
pub trait Scorer: Send + Sync {
    fn n_items(&self) -> usize;

    /// Fills `out` (length `n_items`, zeroed by the caller) with item scores.
    fn score_into(&self, train: &InteractionMatrix, user: usize, out: &mut [f64]);
}

impl Scorer for SparseWeights {
    fn n_items(&self) -> usize {
        SparseWeights::n_items(self)
    }

    fn score_into(&self, train: &InteractionMatrix, user: usize, out: &mut [f64]) {
        for (item, x) in train.row(user).iter() {
            for (target, w) in self.row(item).iter() {
                out[target] += x * w;
            }
        }
    }
}

/// Orders candidates by descending score, then ascending item index.
fn by_score(a: &(u32, f64), b: &(u32, f64)) -> Ordering {
    b.1.partial_cmp(&a.1)
        .unwrap_or(Ordering::Equal)
        .then(a.0.cmp(&b.0))
}

fn top_sorted(mut candidates: Vec<(u32, f64)>, k: usize) -> Vec<(u32, f64)> {
    if candidates.len() > k && k > 0 {
        candidates.select_nth_unstable_by(k - 1, by_score);
        candidates.truncate(k);
    }
    candidates.sort_unstable_by(by_score);
    candidates
}

/// Ranks the items of a score vector. `scores` is consumed as scratch space.
pub fn rank_scores(
    scores: &mut [f64],
    seen: &[u32],
    popularity: &PopularityRanking,
    k: usize,
    filter_seen: bool,
) -> Vec<u32> {
    if filter_seen {
        for &s in seen {
            scores[s as usize] = f64::NAN;
        }
    }
    let mut positive = Vec::new();
    let mut negative = Vec::new();
    for (i, &s) in scores.iter().enumerate() {
        if s > 0.0 {
            positive.push((i as u32, s));
        } else if s < 0.0 {
            negative.push((i as u32, s));
        }
    }
    let mut out: Vec<u32> = top_sorted(positive, k).into_iter().map(|(i, _)| i).collect();
    if out.len() < k {
        for &item in popularity.order() {
            if out.len() == k {
                break;
            }
            if scores[item as usize] == 0.0 {
                out.push(item);
            }
        }
    }
    if out.len() < k {
        let need = k - out.len();
        out.extend(top_sorted(negative, need).into_iter().map(|(i, _)| i));
    }
    out
}

/// A scorer bound to the training matrix it ranks against.
pub struct Recommender<'a, S: Scorer + ?Sized> {
    scorer: &'a S,
    train: &'a InteractionMatrix,
    popularity: PopularityRanking,
}

impl<'a, S: Scorer + ?Sized> Recommender<'a, S> {
    pub fn new(scorer: &'a S, train: &'a InteractionMatrix) -> Result<Self> {
        if scorer.n_items() != train.n_cols() {
            return Err(Error::DimensionMismatch(format!(
                "model scores {} items but the interaction matrix has {}",
                scorer.n_items(),
                train.n_cols()
            )));
        }
        Ok(Recommender {
            scorer,
            train,
            popularity: fit_top_popular(train),
        })
    }

    pub fn train(&self) -> &InteractionMatrix {
        self.train
    }

    pub fn popularity(&self) -> &PopularityRanking {
        &self.popularity
    }

    pub fn recommend(&self, user: usize, k: usize, filter_seen: bool) -> Result<Vec<u32>> {
        let mut buf = vec![0.0; self.scorer.n_items()];
        self.recommend_with(user, k, filter_seen, &mut buf)
    }

    /// Like [`Recommender::recommend`] with a caller-owned score buffer.
    pub fn recommend_with(
        &self,
        user: usize,
        k: usize,
        filter_seen: bool,
        buf: &mut [f64],
    ) -> Result<Vec<u32>> {
        if user >= self.train.n_rows() {
            return Err(Error::IndexOutOfBounds {
                index: user,
                len: self.train.n_rows(),
            });
        }
        buf.iter_mut().for_each(|s| *s = 0.0);
        self.scorer.score_into(self.train, user, buf);
        Ok(rank_scores(
            buf,
            self.train.row(user).cols,
            &self.popularity,
            k,
            filter_seen,
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    EaseR,
    Slim,
    SlimEnet,
    Als,
    FunkSvd,
    #[serde(rename = "p3alpha")]
    P3Alpha,
    #[serde(rename = "rp3beta")]
    Rp3Beta,
    TopPop,
}

impl ModelKind {
    pub const ALL: [ModelKind; 8] = [
        ModelKind::EaseR,
        ModelKind::Slim,
        ModelKind::SlimEnet,
        ModelKind::Als,
        ModelKind::FunkSvd,
        ModelKind::P3Alpha,
        ModelKind::Rp3Beta,
        ModelKind::TopPop,
    ];

    /// Command-line name.
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::EaseR => "ease-r",
            ModelKind::Slim => "slim",
            ModelKind::SlimEnet => "slim-enet",
            ModelKind::Als => "als",
            ModelKind::FunkSvd => "funk-svd",
            ModelKind::P3Alpha => "p3alpha",
            ModelKind::Rp3Beta => "rp3beta",
            ModelKind::TopPop => "top-pop",
        }
    }

    /// Name used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::EaseR => "EASE-R",
            ModelKind::Slim => "SLIM",
            ModelKind::SlimEnet => "SLIM-ENet",
            ModelKind::Als => "ALS (MF)",
            ModelKind::FunkSvd => "FunkSVD",
            ModelKind::P3Alpha => "P3Alpha",
            ModelKind::Rp3Beta => "RP3beta",
            ModelKind::TopPop => "TopPop",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = ModelKind::ALL.iter().map(|k| k.name()).collect();
                Error::InvalidConfig(format!("unknown model `{s}` (expected one of {})", names.join(", ")))
            })
    }
}

/// A model kind together with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum ModelSpec {
    EaseR(EaseConfig),
    Slim(SlimConfig),
    SlimEnet(SlimConfig),
    Als(AlsConfig),
    FunkSvd(SgdConfig),
    #[serde(rename = "p3alpha")]
    P3Alpha(WalkConfig),
    #[serde(rename = "rp3beta")]
    Rp3Beta(WalkConfig),
    TopPop,
}

impl ModelSpec {
    /// The published default configuration for `kind`.
    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::EaseR => ModelSpec::EaseR(EaseConfig::default()),
            ModelKind::Slim => ModelSpec::Slim(SlimConfig::default()),
            ModelKind::SlimEnet => ModelSpec::SlimEnet(SlimConfig::elastic_net()),
            ModelKind::Als => ModelSpec::Als(AlsConfig::default()),
            ModelKind::FunkSvd => ModelSpec::FunkSvd(SgdConfig::default()),
            ModelKind::P3Alpha => ModelSpec::P3Alpha(WalkConfig::p3alpha()),
            ModelKind::Rp3Beta => ModelSpec::Rp3Beta(WalkConfig::default()),
            ModelKind::TopPop => ModelSpec::TopPop,
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            ModelSpec::EaseR(_) => ModelKind::EaseR,
            ModelSpec::Slim(_) => ModelKind::Slim,
            ModelSpec::SlimEnet(_) => ModelKind::SlimEnet,
            ModelSpec::Als(_) => ModelKind::Als,
            ModelSpec::FunkSvd(_) => ModelKind::FunkSvd,
            ModelSpec::P3Alpha(_) => ModelKind::P3Alpha,
            ModelSpec::Rp3Beta(_) => ModelKind::Rp3Beta,
            ModelSpec::TopPop => ModelKind::TopPop,
        }
    }

    pub fn config_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("configs serialize")
    }

    /// `key=value` pairs of the hyperparameters, e.g. `alpha=0.6 beta=0.4 topk=100`.
    pub fn config_echo(&self) -> String {
        let mut parts = vec![format!("model={}", self.kind())];
        if let serde_json::Value::Object(map) = self.config_json() {
            for (k, v) in map {
                if k != "model" {
                    parts.push(format!("{k}={v}"));
                }
            }
        }
        parts.join(" ")
    }

    /// Replaces the seed of seeded models; others are unchanged.
    pub fn with_seed(mut self, seed: u64) -> Self {
        match &mut self {
            ModelSpec::Als(c) => c.seed = seed,
            ModelSpec::FunkSvd(c) => c.seed = seed,
            _ => {}
        }
        self
    }

    pub fn fit(&self, train: &InteractionMatrix) -> Result<TrainedModel> {
        let params = match self {
            ModelSpec::EaseR(c) => ModelParams::Item(fit_ease(train, c)?),
            ModelSpec::Slim(c) | ModelSpec::SlimEnet(c) => ModelParams::Item(fit_slim(train, c)?),
            ModelSpec::Als(c) => ModelParams::Latent(fit_als(train, c)?),
            ModelSpec::FunkSvd(c) => ModelParams::Latent(fit_funk_svd(train, c)?),
            ModelSpec::P3Alpha(c) => ModelParams::Item(fit_p3alpha(train, c)?),
            ModelSpec::Rp3Beta(c) => ModelParams::Item(fit_rp3beta(train, c)?),
            ModelSpec::TopPop => ModelParams::Popularity(fit_top_popular(train)),
        };
        Ok(TrainedModel {
            spec: self.clone(),
            params,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelParams {
    Item(SparseWeights),
    Latent(LatentModel),
    Popularity(PopularityRanking),
}

/// A fitted model and the configuration that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub spec: ModelSpec,
    pub params: ModelParams,
}

impl Scorer for TrainedModel {
    fn n_items(&self) -> usize {
        match &self.params {
            ModelParams::Item(w) => w.n_items(),
            ModelParams::Latent(m) => m.n_items(),
            ModelParams::Popularity(p) => p.n_items(),
        }
    }

    fn score_into(&self, train: &InteractionMatrix, user: usize, out: &mut [f64]) {
        match &self.params {
            ModelParams::Item(w) => w.score_into(train, user, out),
            ModelParams::Latent(m) => m.score_into(train, user, out),
            ModelParams::Popularity(p) => p.score_into(train, user, out),
        }
    }
}

const MODEL_MAGIC: &[u8; 7] = b"RBMODEL";
const MODEL_VERSION: u8 = 1;

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        self.spec.kind()
    }

    /// Header (magic, version, JSON config) followed by the parameter payload:
    /// item models reuse the matrix layout, latent models store dims then
    /// row-major factors, popularity stores the ranked item order.
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MODEL_MAGIC)?;
        w.write_all(&[MODEL_VERSION])?;
        codec::write_bytes(w, self.kind().name().as_bytes())?;
        codec::write_bytes(w, serde_json::to_string(&self.spec)?.as_bytes())?;
        match &self.params {
            ModelParams::Item(weights) => codec::write_matrix(weights.as_csr(), w),
            ModelParams::Latent(m) => m.write_to(w),
            ModelParams::Popularity(p) => p.write_to(w),
        }
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 7];
        r.read_exact(&mut magic)?;
        if &magic != MODEL_MAGIC {
            return Err(Error::Malformed("not a model file (bad magic)".into()));
        }
        let mut version = [0u8; 1];
        r.read_exact(&mut version)?;
        if version[0] != MODEL_VERSION {
            return Err(Error::Malformed(format!("unsupported model version {}", version[0])));
        }
        let kind_bytes = codec::read_bytes(r, 64)?;
        let kind: ModelKind = String::from_utf8_lossy(&kind_bytes).parse()?;
        let spec: ModelSpec = serde_json::from_slice(&codec::read_bytes(r, 1 << 20)?)?;
        if spec.kind() != kind {
            return Err(Error::Malformed("model header and config disagree".into()));
        }
        let params = match kind {
            ModelKind::Als | ModelKind::FunkSvd => ModelParams::Latent(LatentModel::read_from(r)?),
            ModelKind::TopPop => ModelParams::Popularity(PopularityRanking::read_from(r)?),
            _ => ModelParams::Item(SparseWeights::from_csr(codec::read_matrix(r)?)?),
        };
        Ok(TrainedModel { spec, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::file(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush().map_err(|e| Error::file(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
        Self::read_from(&mut std::io::BufReader::new(file))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::CsrMatrix;

    struct Fixed(Vec<f64>);

    impl Scorer for Fixed {
        fn n_items(&self) -> usize {
            self.0.len()
        }
        fn score_into(&self, _: &InteractionMatrix, _: usize, out: &mut [f64]) {
            out.copy_from_slice(&self.0);
        }
    }

    #[test]
    fn ties_go_to_lower_index() {
        let train = CsrMatrix::empty(1, 6);
        let s = Fixed(vec![0.0, 0.0, 0.0, 2.0, 1.0, 2.0]);
        let rec = Recommender::new(&s, &train).unwrap();
        assert_eq!(rec.recommend(0, 2, true).unwrap(), vec![3, 5]);
    }

    #[test]
    fn padding_uses_popularity_and_skips_seen() {
        // item popularity: 2 > 1 > 0 = 3
        let train = CsrMatrix::from_binary_rows(vec![vec![2], vec![1, 2], vec![1, 2]], 4).unwrap();
        let s = Fixed(vec![0.0, 0.0, 0.0, 0.5]);
        let rec = Recommender::new(&s, &train).unwrap();
        assert_eq!(rec.recommend(0, 3, true).unwrap(), vec![3, 1, 0]);
        assert_eq!(rec.recommend(0, 4, false).unwrap(), vec![3, 2, 1, 0]);
        // only three unseen items exist
        assert_eq!(rec.recommend(0, 10, true).unwrap().len(), 3);
    }

    #[test]
    fn negative_scores_rank_last() {
        let train = CsrMatrix::empty(1, 3);
        let s = Fixed(vec![-1.0, 0.0, -0.5]);
        let rec = Recommender::new(&s, &train).unwrap();
        assert_eq!(rec.recommend(0, 3, true).unwrap(), vec![1, 2, 0]);
    }

    #[test]
    fn dimension_and_bounds_errors() {
        let train = CsrMatrix::empty(1, 3);
        assert!(Recommender::new(&Fixed(vec![0.0; 2]), &train).is_err());
        let s = Fixed(vec![0.0; 3]);
        let rec = Recommender::new(&s, &train).unwrap();
        assert!(matches!(rec.recommend(1, 1, true), Err(Error::IndexOutOfBounds { .. })));
    }

    #[test]
    fn kind_names_round_trip() {
        for k in ModelKind::ALL {
            assert_eq!(k.name().parse::<ModelKind>().unwrap(), k);
        }
        assert!("nosuch".parse::<ModelKind>().is_err());
    }

    #[test]
    fn rp3beta_echo_shows_defaults() {
        let echo = ModelSpec::default_for(ModelKind::Rp3Beta).config_echo();
        assert_eq!(echo, "model=rp3beta alpha=0.6 beta=0.4 topk=100");
    }

    #[test]
    fn trained_models_round_trip() {
        let train = CsrMatrix::from_binary_rows(
            vec![vec![0, 1], vec![1, 2], vec![0, 2, 3], vec![3]],
            4,
        )
        .unwrap();
        for kind in ModelKind::ALL {
            let spec = match ModelSpec::default_for(kind) {
                ModelSpec::Als(c) => ModelSpec::Als(AlsConfig { factors: 3, iterations: 2, ..c }),
                ModelSpec::FunkSvd(c) => ModelSpec::FunkSvd(SgdConfig { factors: 3, epochs: 2, ..c }),
                s => s,
            };
            let model = spec.fit(&train).unwrap();
            let mut bytes = Vec::new();
            model.write_to(&mut bytes).unwrap();
            let back = TrainedModel::read_from(&mut &bytes[..]).unwrap();
            assert_eq!(back, model, "{kind}");
        }
    }
}
