//! Rating ingestion and preprocessing.
//!
//! The pipeline order is parse, remap, k-core filter, binarize. Every
//! downstream step is a pure function of its input and seed.

mod parse;
mod split;

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::codec;
use crate::error::{Error, Result};
use crate::sparse::{CsrMatrix, InteractionMatrix};

pub use parse::{parse_ratings, InputFormat, RawRecord, MOVIELENS_HEADER};
pub use split::{holdout_split, EvalSplit};
pub(crate) use split::train_count;

/// Seeded generator used for every split and sample in this crate (ChaCha8).
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Bidirectional map between external IDs and dense indices.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdLookup {
    ids: Vec<String>,
    index: HashMap<String, u32>,
}

impl IdLookup {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn index_of(&self, external: &str) -> Option<usize> {
        self.index.get(external).map(|&i| i as usize)
    }

    pub fn external(&self, index: usize) -> Option<&str> {
        self.ids.get(index).map(String::as_str)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    fn intern(&mut self, external: &str) -> u32 {
        if let Some(&i) = self.index.get(external) {
            return i;
        }
        let i = self.ids.len() as u32;
        self.ids.push(external.to_string());
        self.index.insert(external.to_string(), i);
        i
    }

    fn from_ids(ids: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i as u32).is_some() {
                return Err(Error::Malformed(format!("duplicate external id `{id}`")));
            }
        }
        Ok(IdLookup { ids, index })
    }

    /// Writes `dense_index<TAB>external_id` lines.
    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for (i, id) in self.ids.iter().enumerate() {
            out.push_str(&format!("{i}\t{id}\n"));
        }
        fs::write(path, out).map_err(|e| Error::file(path, e))
    }

    pub fn read_tsv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        let mut ids = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let bad = || Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                message: "expected `dense_index<TAB>external_id`".into(),
            };
            let (idx, id) = line.split_once('\t').ok_or_else(bad)?;
            if idx.parse::<usize>().map_err(|_| bad())? != ids.len() {
                return Err(bad());
            }
            ids.push(id.to_string());
        }
        Self::from_ids(ids)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interaction {
    pub user: u32,
    pub item: u32,
    pub rating: f64,
    pub timestamp: i64,
}

/// Densely indexed rating tuples plus the external-ID tables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    interactions: Vec<Interaction>,
    users: IdLookup,
    items: IdLookup,
    binarized: bool,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.interactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interactions.is_empty()
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn interactions(&self) -> &[Interaction] {
        &self.interactions
    }

    /// True once [`binarize`] has run; ratings are then implicit-feedback indicators.
    pub fn is_binarized(&self) -> bool {
        self.binarized
    }

    pub fn user_lookup(&self) -> &IdLookup {
        &self.users
    }

    pub fn item_lookup(&self) -> &IdLookup {
        &self.items
    }

    /// Rating-weighted user x item matrix.
    pub fn to_matrix(&self) -> Result<InteractionMatrix> {
        let records: Vec<_> = self
            .interactions
            .iter()
            .map(|x| (x.user as usize, x.item as usize, x.rating.max(0.0)))
            .collect();
        CsrMatrix::build(&records, self.n_users(), self.n_items())
    }

    /// Binary user x item matrix (ratings ignored).
    pub fn to_binary_matrix(&self) -> InteractionMatrix {
        let mut rows = vec![Vec::new(); self.n_users()];
        for x in &self.interactions {
            rows[x.user as usize].push(x.item);
        }
        CsrMatrix::from_binary_rows(rows, self.n_items()).expect("dataset indices are in range")
    }

    /// Rebuilds a dataset from a rating matrix and lookup tables. Timestamps are not
    /// stored in the matrix and come back as zero.
    pub fn from_matrix(m: &CsrMatrix, users: IdLookup, items: IdLookup) -> Result<Self> {
        if m.n_rows() != users.len() || m.n_cols() != items.len() {
            return Err(Error::DimensionMismatch(format!(
                "matrix is {}x{} but lookups have {} users and {} items",
                m.n_rows(),
                m.n_cols(),
                users.len(),
                items.len()
            )));
        }
        let mut interactions = Vec::with_capacity(m.nnz());
        for u in 0..m.n_rows() {
            for (i, w) in m.row(u).iter() {
                interactions.push(Interaction {
                    user: u as u32,
                    item: i as u32,
                    rating: w,
                    timestamp: 0,
                });
            }
        }
        Ok(Dataset {
            interactions,
            users,
            items,
            binarized: false,
        })
    }

    /// Writes `interactions.rbcsr`, `users.tsv`, `items.tsv` and a `binarized`
    /// marker file (present only for binarized data) into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
        codec::save_matrix(&self.to_matrix()?, &dir.join("interactions.rbcsr"))?;
        self.users.write_tsv(&dir.join("users.tsv"))?;
        self.items.write_tsv(&dir.join("items.tsv"))?;
        let marker = dir.join("binarized");
        if self.binarized {
            fs::write(&marker, b"").map_err(|e| Error::file(&marker, e))?;
        } else if marker.exists() {
            fs::remove_file(&marker).map_err(|e| Error::file(&marker, e))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let m = codec::load_matrix(&dir.join("interactions.rbcsr"))?;
        let users = IdLookup::read_tsv(&dir.join("users.tsv"))?;
        let items = IdLookup::read_tsv(&dir.join("items.tsv"))?;
        let mut d = Self::from_matrix(&m, users, items)?;
        d.binarized = dir.join("binarized").exists();
        Ok(d)
    }

    /// Keeps the listed interactions and re-densifies indices, preserving the
    /// relative order of surviving users and items.
    fn compact(&self, keep: impl Iterator<Item = usize>) -> Dataset {
        let kept: Vec<Interaction> = keep.map(|i| self.interactions[i]).collect();
        let mut user_alive = vec![false; self.n_users()];
        let mut item_alive = vec![false; self.n_items()];
        for x in &kept {
            user_alive[x.user as usize] = true;
            item_alive[x.item as usize] = true;
        }
        let remap = |alive: &[bool], lookup: &IdLookup| {
            let mut new_index = vec![u32::MAX; alive.len()];
            let mut ids = Vec::new();
            for (old, &a) in alive.iter().enumerate() {
                if a {
                    new_index[old] = ids.len() as u32;
                    ids.push(lookup.ids[old].clone());
                }
            }
            (new_index, IdLookup::from_ids(ids).expect("ids were unique"))
        };
        let (user_map, users) = remap(&user_alive, &self.users);
        let (item_map, items) = remap(&item_alive, &self.items);
        let interactions = kept
            .into_iter()
            .map(|x| Interaction {
                user: user_map[x.user as usize],
                item: item_map[x.item as usize],
                ..x
            })
            .collect();
        Dataset {
            interactions,
            users,
            items,
            binarized: self.binarized,
        }
    }
}

/// Assigns dense indices in first-appearance order; repeated (user, item)
/// pairs keep the position of their first record and the values of the last.
pub fn remap_ids(records: &[RawRecord]) -> Dataset {
    let mut users = IdLookup::default();
    let mut items = IdLookup::default();
    let mut position: HashMap<(u32, u32), usize> = HashMap::new();
    let mut interactions: Vec<Interaction> = Vec::with_capacity(records.len());
    for r in records {
        let user = users.intern(&r.user);
        let item = items.intern(&r.item);
        let x = Interaction {
            user,
            item,
            rating: r.rating,
            timestamp: r.timestamp,
        };
        match position.get(&(user, item)) {
            Some(&p) => interactions[p] = x,
            None => {
                position.insert((user, item), interactions.len());
                interactions.push(x);
            }
        }
    }
    Dataset {
        interactions,
        users,
        items,
        binarized: false,
    }
}

/// Iteratively drops users and items with fewer than `min_interactions`
/// interactions until none remain below the threshold.
pub fn kcore_filter(d: &Dataset, min_interactions: usize) -> Result<Dataset> {
    if min_interactions == 0 {
        return Err(Error::InvalidConfig("min_interactions must be >= 1".into()));
    }
    let n_users = d.n_users();
    let mut user_deg = vec![0usize; n_users];
    let mut item_deg = vec![0usize; d.n_items()];
    let mut by_user: Vec<Vec<usize>> = vec![Vec::new(); n_users];
    let mut by_item: Vec<Vec<usize>> = vec![Vec::new(); d.n_items()];
    for (i, x) in d.interactions.iter().enumerate() {
        user_deg[x.user as usize] += 1;
        item_deg[x.item as usize] += 1;
        by_user[x.user as usize].push(i);
        by_item[x.item as usize].push(i);
    }
    let mut alive = vec![true; d.len()];
    // Nodes are numbered users first, then items.
    let mut removed = vec![false; n_users + d.n_items()];
    let mut queue: Vec<usize> = (0..n_users)
        .filter(|&u| user_deg[u] < min_interactions)
        .chain((0..d.n_items()).filter(|&i| item_deg[i] < min_interactions).map(|i| i + n_users))
        .collect();
    for &node in &queue {
        removed[node] = true;
    }
    while let Some(node) = queue.pop() {
        let edges = if node < n_users {
            &by_user[node]
        } else {
            &by_item[node - n_users]
        };
        for &e in edges {
            if !alive[e] {
                continue;
            }
            alive[e] = false;
            let x = d.interactions[e];
            let (u, i) = (x.user as usize, x.item as usize);
            user_deg[u] -= 1;
            item_deg[i] -= 1;
            if !removed[u] && user_deg[u] < min_interactions {
                removed[u] = true;
                queue.push(u);
            }
            if !removed[n_users + i] && item_deg[i] < min_interactions {
                removed[n_users + i] = true;
                queue.push(n_users + i);
            }
        }
    }
    Ok(d.compact((0..d.len()).filter(|&e| alive[e])))
}

/// Keeps interactions rated at least `threshold`, rewritten to rating 1.0.
///
/// Already-binarized datasets are returned unchanged.
pub fn binarize(d: &Dataset, threshold: f64) -> Dataset {
    if d.binarized {
        return d.clone();
    }
    let mut out = d.compact((0..d.len()).filter(|&e| d.interactions[e].rating >= threshold));
    for x in &mut out.interactions {
        x.rating = 1.0;
    }
    out.binarized = true;
    out
}

/// Uniform sample of exactly `n_interactions` interactions without replacement.
pub fn subsample(d: &Dataset, n_interactions: usize, seed: u64) -> Result<Dataset> {
    if n_interactions > d.len() {
        return Err(Error::SampleTooLarge {
            requested: n_interactions,
            available: d.len(),
        });
    }
    let mut rng = seeded_rng(seed);
    let mut picked = rand::seq::index::sample(&mut rng, d.len(), n_interactions).into_vec();
    picked.sort_unstable();
    Ok(d.compact(picked.into_iter()))
}

/// Preprocessing applied before fitting: k-core filter then optional binarization.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Preprocessing {
    pub min_interactions: usize,
    pub binarize_threshold: Option<f64>,
}

impl Default for Preprocessing {
    fn default() -> Self {
        Preprocessing {
            min_interactions: 5,
            binarize_threshold: Some(4.0),
        }
    }
}

impl Preprocessing {
    pub fn apply(&self, d: &Dataset) -> Result<Dataset> {
        let filtered = kcore_filter(d, self.min_interactions)?;
        Ok(match self.binarize_threshold {
            Some(t) => binarize(&filtered, t),
            None => filtered,
        })
    }
}

/// Writes records as a MovieLens-style CSV (header included).
pub fn write_movielens_csv(records: &[RawRecord], path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::file(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(w, "{MOVIELENS_HEADER}")?;
    for r in records {
        writeln!(w, "{},{},{:.1},{}", r.user, r.item, r.rating, r.timestamp)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(u: &str, i: &str, r: f64) -> RawRecord {
        RawRecord::new(u, i, r, 0)
    }

    fn pairs(d: &Dataset) -> Vec<(String, String)> {
        let mut v: Vec<_> = d
            .interactions()
            .iter()
            .map(|x| {
                (
                    d.user_lookup().external(x.user as usize).unwrap().to_string(),
                    d.item_lookup().external(x.item as usize).unwrap().to_string(),
                )
            })
            .collect();
        v.sort();
        v
    }

    #[test]
    fn remap_empty_and_order() {
        let d = remap_ids(&[]);
        assert_eq!((d.n_users(), d.n_items()), (0, 0));

        let d = remap_ids(&[rec("42", "A", 1.0), rec("7", "B", 1.0), rec("42", "C", 1.0)]);
        assert_eq!(d.user_lookup().index_of("42"), Some(0));
        assert_eq!(d.user_lookup().index_of("7"), Some(1));
        assert_eq!(d.n_users(), 2);
    }

    #[test]
    fn remap_last_write_wins() {
        let d = remap_ids(&[rec("42", "A", 3.0), rec("42", "A", 5.0)]);
        assert_eq!(d.len(), 1);
        assert_eq!(d.interactions()[0].rating, 5.0);
    }

    #[test]
    fn kcore_stable_example() {
        let d = remap_ids(&[
            rec("u1", "i1", 1.0),
            rec("u1", "i2", 1.0),
            rec("u2", "i1", 1.0),
            rec("u2", "i2", 1.0),
            rec("u3", "i1", 1.0),
        ]);
        let f = kcore_filter(&d, 2).unwrap();
        assert_eq!((f.n_users(), f.n_items(), f.len()), (2, 2, 4));
        assert_eq!(f.user_lookup().index_of("u3"), None);
    }

    #[test]
    fn kcore_cascade_to_empty() {
        let d = remap_ids(&[rec("u1", "i1", 1.0), rec("u1", "i2", 1.0), rec("u2", "i2", 1.0)]);
        let f = kcore_filter(&d, 2).unwrap();
        assert!(f.is_empty());
        assert_eq!((f.n_users(), f.n_items()), (0, 0));
    }

    #[test]
    fn kcore_fixpoint_is_identity() {
        let recs: Vec<_> = (0..5)
            .flat_map(|u| (0..5).map(move |i| rec(&u.to_string(), &i.to_string(), 1.0)))
            .collect();
        let d = remap_ids(&recs);
        assert_eq!(kcore_filter(&d, 5).unwrap(), d);
        assert!(kcore_filter(&d, 0).is_err());
    }

    #[test]
    fn binarize_cases() {
        let d = remap_ids(&[rec("a", "x", 3.5), rec("a", "y", 4.0), rec("b", "z", 4.5)]);
        let b = binarize(&d, 4.0);
        assert_eq!(
            pairs(&b),
            vec![("a".into(), "y".into()), ("b".into(), "z".into())]
        );
        assert!(b.interactions().iter().all(|x| x.rating == 1.0));

        let all5 = remap_ids(&[rec("a", "x", 5.0), rec("b", "x", 5.0)]);
        assert_eq!(binarize(&all5, 4.0).len(), 2);
        let all1 = remap_ids(&[rec("a", "x", 1.0), rec("b", "x", 1.0)]);
        let e = binarize(&all1, 4.0);
        assert!(e.is_empty() && e.n_users() == 0 && e.n_items() == 0);
    }

    #[test]
    fn subsample_cases() {
        let recs: Vec<_> = (0..10)
            .map(|i| rec(&(i % 3).to_string(), &i.to_string(), 1.0))
            .collect();
        let d = remap_ids(&recs);
        assert_eq!(subsample(&d, 10, 1).unwrap(), d);
        assert!(subsample(&d, 0, 1).unwrap().is_empty());
        assert_eq!(subsample(&d, 5, 3).unwrap(), subsample(&d, 5, 3).unwrap());
        assert_eq!(subsample(&d, 5, 3).unwrap().len(), 5);
        assert!(matches!(
            subsample(&d, 11, 1),
            Err(Error::SampleTooLarge { requested: 11, available: 10 })
        ));
    }

    #[test]
    fn dataset_round_trip_through_files() {
        let d = remap_ids(&[rec("a", "x", 3.5), rec("a", "y", 4.0), rec("b", "x", 1.0)]);
        let dir = tempfile::tempdir().unwrap();
        d.save(dir.path()).unwrap();
        let back = Dataset::load(dir.path()).unwrap();
        assert_eq!(pairs(&back), pairs(&d));
        assert_eq!(back.user_lookup(), d.user_lookup());
        let lookup = std::fs::read_to_string(dir.path().join("items.tsv")).unwrap();
        assert_eq!(lookup, "0\tx\n1\ty\n");
    }

    fn dataset_strategy() -> impl Strategy<Value = Dataset> {
        prop::collection::vec((0u8..25, 0u8..20, 1u8..=5), 0..300).prop_map(|v| {
            let recs: Vec<_> = v
                .into_iter()
                .map(|(u, i, r)| rec(&format!("u{u}"), &format!("i{i}"), r as f64))
                .collect();
            remap_ids(&recs)
        })
    }

    proptest! {
        #[test]
        fn kcore_min_degree_and_idempotent(d in dataset_strategy(), k in 1usize..6) {
            let f = kcore_filter(&d, k).unwrap();
            let m = f.to_binary_matrix();
            for u in 0..m.n_rows() {
                prop_assert!(m.row_len(u) >= k);
            }
            for c in m.column_counts() {
                prop_assert!(c >= k);
            }
            prop_assert_eq!(kcore_filter(&f, k).unwrap(), f);
        }

        #[test]
        fn binarize_idempotent(d in dataset_strategy()) {
            let b = binarize(&d, 4.0);
            prop_assert_eq!(binarize(&b, 4.0), b);
        }
    }
}
