use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{seeded_rng, Dataset};
use crate::codec;
use crate::error::{Error, Result};
use crate::sparse::{CsrMatrix, InteractionMatrix};

/// A binary training matrix plus each user's held-out relevant items.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSplit {
    pub train: InteractionMatrix,
    /// Per user, sorted item indices held out for evaluation.
    pub test_relevant: Vec<Vec<u32>>,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct SplitMeta {
    seed: u64,
    n_users: usize,
    n_items: usize,
}

impl EvalSplit {
    pub fn n_users(&self) -> usize {
        self.train.n_rows()
    }

    pub fn n_items(&self) -> usize {
        self.train.n_cols()
    }

    /// Users with a nonempty test set, in index order.
    pub fn evaluated_users(&self) -> Vec<usize> {
        (0..self.test_relevant.len())
            .filter(|&u| !self.test_relevant[u].is_empty())
            .collect()
    }

    pub fn test_matrix(&self) -> InteractionMatrix {
        CsrMatrix::from_binary_rows(self.test_relevant.clone(), self.n_items())
            .expect("test items are in range")
    }

    /// Writes `train.rbcsr`, `test.rbcsr` and `split.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
        codec::save_matrix(&self.train, &dir.join("train.rbcsr"))?;
        codec::save_matrix(&self.test_matrix(), &dir.join("test.rbcsr"))?;
        let meta = SplitMeta {
            seed: self.seed,
            n_users: self.n_users(),
            n_items: self.n_items(),
        };
        let path = dir.join("split.json");
        fs::write(&path, serde_json::to_string_pretty(&meta)?).map_err(|e| Error::file(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("split.json");
        let meta: SplitMeta =
            serde_json::from_str(&fs::read_to_string(&path).map_err(|e| Error::file(&path, e))?)?;
        let train = codec::load_matrix(&dir.join("train.rbcsr"))?;
        let test = codec::load_matrix(&dir.join("test.rbcsr"))?;
        if train.n_rows() != meta.n_users
            || train.n_cols() != meta.n_items
            || test.n_rows() != meta.n_users
            || test.n_cols() != meta.n_items
        {
            return Err(Error::Malformed(format!(
                "split in {} has inconsistent dimensions",
                dir.display()
            )));
        }
        let test_relevant = (0..test.n_rows()).map(|u| test.row(u).cols.to_vec()).collect();
        Ok(EvalSplit {
            train,
            test_relevant,
            seed: meta.seed,
        })
    }
}

/// Number of a user's `n` interactions that go to training.
pub(crate) fn train_count(n: usize, train_ratio: f64) -> usize {
    (((n as f64) * train_ratio + 1e-9).floor() as usize).clamp(1.min(n), n)
}

/// Per-user random holdout.
///
/// Each user's items (in ascending index order) are shuffled by a ChaCha8
/// generator seeded with `seed`; the first `max(1, floor(n * train_ratio))`
/// go to training and the rest are held out.
pub fn holdout_split(d: &Dataset, train_ratio: f64, seed: u64) -> Result<EvalSplit> {
    if !(train_ratio > 0.0 && train_ratio < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "train ratio must lie in (0, 1), got {train_ratio}"
        )));
    }
    let mut per_user: Vec<Vec<u32>> = vec![Vec::new(); d.n_users()];
    for x in d.interactions() {
        per_user[x.user as usize].push(x.item);
    }
    let mut rng = seeded_rng(seed);
    let mut train_rows = Vec::with_capacity(per_user.len());
    let mut test_relevant = Vec::with_capacity(per_user.len());
    for mut items in per_user {
        items.sort_unstable();
        items.dedup();
        items.shuffle(&mut rng);
        let n_train = train_count(items.len(), train_ratio);
        let mut test = items.split_off(n_train);
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
