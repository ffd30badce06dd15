//! Deterministic holdout splits and k-fold partitions.
//!
//! All functions are generic over [`Partitionable`], implemented for both the
//! explicit [`Dataset`] and the implicit [`ImplicitDataset`].

mod cache;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{Dataset, ImplicitDataset, UserIdx};
use crate::error::SplitError;
use crate::scalar::round_half_up;

pub use cache::{cache_split, load_or_create_split, load_split, CacheMeta};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitStrategy {
    Global,
    PerUser,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub strategy: SplitStrategy,
    pub train_fraction: f64,
    pub seed: u64,
    /// Per-user only: users with fewer interactions are dropped before splitting.
    pub min_interactions_per_user: usize,
    /// Per-user only: floor on each surviving user's test share.
    pub min_test_items_per_user: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            strategy: SplitStrategy::Global,
            train_fraction: 0.8,
            seed: 0,
            min_interactions_per_user: 10,
            min_test_items_per_user: 2,
        }
    }
}

impl SplitConfig {
    pub fn global(seed: u64) -> Self {
        SplitConfig {
            seed,
            ..Default::default()
        }
    }

    pub fn per_user(seed: u64, min_interactions: usize, min_test: usize) -> Self {
        SplitConfig {
            strategy: SplitStrategy::PerUser,
            seed,
            min_interactions_per_user: min_interactions,
            min_test_items_per_user: min_test,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), SplitError> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(SplitError::Config(format!(
                "train_fraction {} not in (0, 1)",
                self.train_fraction
            )));
        }
        if self.strategy == SplitStrategy::PerUser
            && (self.min_interactions_per_user < 1 || self.min_test_items_per_user < 1)
        {
            return Err(SplitError::Config("per-user minimums must be at least 1".into()));
        }
        Ok(())
    }
}

/// Interaction collections that can be partitioned row-wise.
pub trait Partitionable: Clone + Sized {
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn user_of(&self, row: usize) -> UserIdx;
    fn user_capacity(&self) -> usize;
    /// Rows at `rows`, in the given order, sharing this collection's vocabularies.
    fn subset(&self, rows: &[usize]) -> Self;
    /// Canonical TSV rendering with external ids; the split checksum hashes this.
    fn to_tsv(&self) -> String;
    fn cache_meta(&self) -> CacheMeta;
    fn from_tsv_pair(meta: &CacheMeta, train: &str, test: &str) -> Result<(Self, Self), SplitError>;
}

/// A holdout partition with a digest of its exact contents.
#[derive(Debug, Clone)]
pub struct TrainTestSplit<D> {
    pub train: D,
    pub test: D,
    pub config: SplitConfig,
    pub checksum: String,
}

impl<D: Partitionable> TrainTestSplit<D> {
    pub fn new(train: D, test: D, config: SplitConfig) -> Self {
        let checksum = checksum_of(&train.to_tsv(), &test.to_tsv());
        TrainTestSplit {
            train,
            test,
            config,
            checksum,
        }
    }
}

pub(crate) fn checksum_of(train_tsv: &str, test_tsv: &str) -> String {
    let mut h = Sha256::new();
    h.update(train_tsv.as_bytes());
    h.update([0u8]);
    h.update(test_tsv.as_bytes());
    hex::encode(h.finalize())
}

/// One training/validation pair inside a [`FoldSet`].
#[derive(Debug, Clone)]
pub struct Fold<D> {
    pub train: D,
    pub validation: D,
}

#[derive(Debug, Clone)]
pub struct FoldSet<D> {
    pub k: usize,
    pub folds: Vec<Fold<D>>,
}

fn complement(n: usize, taken: &[usize]) -> Vec<usize> {
    let mut mark = vec![false; n];
    for &t in taken {
        mark[t] = true;
    }
    (0..n).filter(|&r| !mark[r]).collect()
}

/// Row indices grouped by user, each group in row order; users ascending.
fn rows_by_user<D: Partitionable>(d: &D) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); d.user_capacity()];
    for r in 0..d.len() {
        out[d.user_of(r) as usize].push(r);
    }
    out
}

/// Shuffles all rows and sends the first `round(train_fraction · n)` to training.
pub fn global_random_split<D: Partitionable>(
    d: &D,
    cfg: &SplitConfig,
) -> Result<TrainTestSplit<D>, SplitError> {
    cfg.validate()?;
    let n = d.len();
    if n < 2 {
        return Err(SplitError::TooFew { needed: 2, have: n });
    }
    let mut rows: Vec<usize> = (0..n).collect();
    rows.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let n_train = round_half_up(cfg.train_fraction * n as f64).clamp(1, n - 1);
    let mut train = rows[..n_train].to_vec();
    let mut test = rows[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok(TrainTestSplit::new(
        d.subset(&train),
        d.subset(&test),
        SplitConfig {
            strategy: SplitStrategy::Global,
            ..*cfg
        },
    ))
}

/// Drops users below the interaction minimum, then holds out
/// `max(round((1 − train_fraction) · n), min_test)` shuffled rows of each user,
/// never all of them.
pub fn per_user_split<D: Partitionable>(
    d: &D,
    cfg: &SplitConfig,
) -> Result<TrainTestSplit<D>, SplitError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut survivors = 0usize;
    for mut rows in rows_by_user(d) {
        let n = rows.len();
        if n == 0 || n < cfg.min_interactions_per_user {
            continue;
        }
        survivors += 1;
        rows.shuffle(&mut rng);
        let want = round_half_up((1.0 - cfg.train_fraction) * n as f64).max(cfg.min_test_items_per_user);
        let n_test = want.min(n - 1);
        test.extend_from_slice(&rows[..n_test]);
        train.extend_from_slice(&rows[n_test..]);
    }
    if survivors == 0 {
        return Err(SplitError::NoEligibleUsers(cfg.min_interactions_per_user));
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(TrainTestSplit::new(
        d.subset(&train),
        d.subset(&test),
        SplitConfig {
            strategy: SplitStrategy::PerUser,
            ..*cfg
        },
    ))
}

/// Interaction-level k-fold: shuffled rows dealt round-robin into `k` folds.
pub fn kfold_global<D: Partitionable>(train: &D, k: usize, seed: u64) -> Result<FoldSet<D>, SplitError> {
    if k < 2 {
        return Err(SplitError::Config(format!("k = {k} must be at least 2")));
    }
    let n = train.len();
    if k > n {
        return Err(SplitError::TooFew { needed: k, have: n });
    }
    let mut rows: Vec<usize> = (0..n).collect();
    rows.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut parts = vec![Vec::new(); k];
    for (j, r) in rows.into_iter().enumerate() {
        parts[j % k].push(r);
    }
    let folds = parts
        .into_iter()
        .map(|mut val| {
            val.sort_unstable();
            let rest = complement(n, &val);
            Fold {
                train: train.subset(&rest),
                validation: train.subset(&val),
            }
        })
        .collect();
    Ok(FoldSet { k, folds })
}

/// Minimum interactions for a user to take part in per-user cross-validation.
pub const CV_MIN_USER_INTERACTIONS: usize = 5;

/// User-level k-fold: in every fold each eligible user (≥ `min_user` rows) holds
/// out `max(round(holdout · n), 1)` of their rows, taken as consecutive chunks of
/// one shuffled order so successive folds rotate through the user's items.
/// Ineligible users stay entirely in training.
pub fn kfold_per_user<D: Partitionable>(
    train: &D,
    k: usize,
    seed: u64,
    holdout: f64,
    min_user: usize,
) -> Result<FoldSet<D>, SplitError> {
    if k < 2 {
        return Err(SplitError::Config(format!("k = {k} must be at least 2")));
    }
    if !(holdout > 0.0 && holdout < 1.0) {
        return Err(SplitError::Config(format!("holdout fraction {holdout} not in (0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parts = vec![Vec::new(); k];
    let mut eligible = 0usize;
    for mut rows in rows_by_user(train) {
        let n = rows.len();
        if n == 0 || n < min_user.max(2) {
            continue;
        }
        eligible += 1;
        rows.shuffle(&mut rng);
        let m = round_half_up(holdout * n as f64).clamp(1, n - 1);
        for (f, part) in parts.iter_mut().enumerate() {
            part.extend((0..m).map(|j| rows[(f * m + j) % n]));
        }
    }
    if eligible == 0 {
        return Err(SplitError::NoEligibleUsers(min_user));
    }
    let n = train.len();
    let folds = parts
        .into_iter()
        .map(|mut val| {
            val.sort_unstable();
            val.dedup();
            let rest = complement(n, &val);
            Fold {
                train: train.subset(&rest),
                validation: train.subset(&val),
            }
        })
        .collect();
    Ok(FoldSet { k, folds })
}

impl Partitionable for Dataset {
    fn len(&self) -> usize {
        Dataset::len(self)
    }

    fn user_of(&self, row: usize) -> UserIdx {
        self.interactions()[row].user
    }

    fn user_capacity(&self) -> usize {
        Dataset::user_capacity(self)
    }

    fn subset(&self, rows: &[usize]) -> Self {
        let xs = self.interactions();
        self.with_interactions(rows.iter().map(|&r| xs[r]).collect())
    }

    fn to_tsv(&self) -> String {
        let mut s = String::with_capacity(self.len() * 24);
        let ts = self.has_timestamps();
        s.push_str(if ts { "user\titem\trating\ttimestamp\n" } else { "user\titem\trating\n" });
        for x in self.interactions() {
            s.push_str(self.users().id(x.user));
            s.push('\t');
            s.push_str(self.items().id(x.item));
            s.push('\t');
            s.push_str(&x.rating.to_string());
            if ts {
                s.push('\t');
                if let Some(t) = x.timestamp {
                    s.push_str(&t.to_string());
                }
            }
            s.push('\n');
        }
        s
    }

    fn cache_meta(&self) -> CacheMeta {
        CacheMeta {
            kind: cache::Kind::Explicit,
            name: self.name().to_owned(),
            scale: Some(self.scale()),
            threshold: None,
        }
    }

    fn from_tsv_pair(meta: &CacheMeta, train: &str, test: &str) -> Result<(Self, Self), SplitError> {
        cache::explicit_from_tsv(meta, train, test)
    }
}

impl Partitionable for ImplicitDataset {
    fn len(&self) -> usize {
        ImplicitDataset::len(self)
    }

    fn user_of(&self, row: usize) -> UserIdx {
        self.positives()[row].0
    }

    fn user_capacity(&self) -> usize {
        ImplicitDataset::user_capacity(self)
    }

    fn subset(&self, rows: &[usize]) -> Self {
        let xs = self.positives();
        self.with_positives(rows.iter().map(|&r| xs[r]).collect())
    }

    fn to_tsv(&self) -> String {
        let mut s = String::with_capacity(self.len() * 12);
        s.push_str("user\titem\n");
        for &(u, i) in self.positives() {
            s.push_str(self.users().id(u));
            s.push('\t');
            s.push_str(self.items().id(i));
            s.push('\n');
        }
        s
    }

    fn cache_meta(&self) -> CacheMeta {
        CacheMeta {
            kind: cache::Kind::Implicit,
            name: self.name().to_owned(),
            scale: None,
            threshold: Some(self.threshold()),
        }
    }

    fn from_tsv_pair(meta: &CacheMeta, train: &str, test: &str) -> Result<(Self, Self), SplitError> {
        cache::implicit_from_tsv(meta, train, test)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, RatingScale, SyntheticConfig};
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn line(n: usize) -> Dataset {
        Dataset::from_triples(
            "line",
            RatingScale::new(1.0, 5.0).unwrap(),
            (0..n).map(|k| (format!("u{}", k % 3), format!("i{k}"), 3.0)),
        )
    }

    fn pairs(d: &Dataset) -> HashSet<(String, String)> {
        d.interactions()
            .iter()
            .map(|x| (d.users().id(x.user).to_owned(), d.items().id(x.item).to_owned()))
            .collect()
    }

    fn user_with(n_items: usize, user: &str) -> Vec<(String, String, f64)> {
        (0..n_items).map(|k| (user.to_owned(), format!("{user}-i{k}"), 4.0)).collect()
    }

    #[test]
    fn global_split_ten_rows() {
        let d = line(10);
        let s = global_random_split(&d, &SplitConfig::global(0)).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (8, 2));
        let again = global_random_split(&d, &SplitConfig::global(0)).unwrap();
        assert_eq!(s.checksum, again.checksum);
        assert!(matches!(
            global_random_split(&line(1), &SplitConfig::global(0)),
            Err(SplitError::TooFew { .. })
        ));
    }

    #[test]
    fn seeds_change_partition() {
        let d = line(100);
        let a = global_random_split(&d, &SplitConfig::global(0)).unwrap();
        let b = global_random_split(&d, &SplitConfig::global(1)).unwrap();
        assert_ne!(pairs(&a.test), pairs(&b.test));
    }

    #[test]
    fn per_user_thresholds() {
        let mut rows = user_with(9, "small");
        rows.extend(user_with(10, "big"));
        let d = Dataset::from_triples("pu", RatingScale::new(1.0, 5.0).unwrap(), rows);
        let s = per_user_split(&d, &SplitConfig::per_user(0, 10, 2)).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (8, 2));
        assert!(pairs(&s.train).iter().all(|(u, _)| u == "big"));
        assert!(matches!(
            per_user_split(&d, &SplitConfig::per_user(0, 11, 2)),
            Err(SplitError::NoEligibleUsers(11))
        ));
    }

    #[test]
    fn per_user_uniform_counts() {
        // Each of 6 users has n = 7 items: test share max(round(1.4), 1) = 1 each.
        let rows: Vec<_> = (0..6).flat_map(|u| user_with(7, &format!("u{u}"))).collect();
        let d = Dataset::from_triples("pu", RatingScale::new(1.0, 5.0).unwrap(), rows);
        let s = per_user_split(&d, &SplitConfig::per_user(3, 1, 1)).unwrap();
        assert_eq!(s.test.len(), 6);
        // n = 13: round(2.6) = 3 each.
        let rows: Vec<_> = (0..4).flat_map(|u| user_with(13, &format!("u{u}"))).collect();
        let d = Dataset::from_triples("pu", RatingScale::new(1.0, 5.0).unwrap(), rows);
        let s = per_user_split(&d, &SplitConfig::per_user(3, 1, 1)).unwrap();
        assert_eq!(s.test.len(), 12);
    }

    #[test]
    fn kfold_sizes() {
        let f = kfold_global(&line(10), 5, 0).unwrap();
        assert!(f.folds.iter().all(|f| f.validation.len() == 2 && f.train.len() == 8));
        let f = kfold_global(&line(3), 2, 0).unwrap();
        let mut sizes: Vec<_> = f.folds.iter().map(|f| f.validation.len()).collect();
        sizes.sort();
        assert_eq!(sizes, vec![1, 2]);
        assert!(kfold_global(&line(3), 4, 0).is_err());
        assert!(kfold_global(&line(3), 1, 0).is_err());
    }

    #[test]
    fn kfold_union_is_train() {
        let d = line(23);
        let f = kfold_global(&d, 5, 9).unwrap();
        let mut all = HashSet::new();
        for fold in &f.folds {
            for p in pairs(&fold.validation) {
                assert!(all.insert(p), "validation folds overlap");
            }
            assert!(pairs(&fold.train).is_disjoint(&pairs(&fold.validation)));
        }
        assert_eq!(all, pairs(&d));
    }

    #[test]
    fn kfold_per_user_holds_out_fifth() {
        let mut pos: Vec<(String, String)> = (0..4).map(|k| ("few".into(), format!("f{k}"))).collect();
        pos.extend((0..10).map(|k| ("many".into(), format!("m{k}"))));
        let d = ImplicitDataset::from_pairs("imp", pos);
        let folds = kfold_per_user(&d, 5, 0, 0.2, CV_MIN_USER_INTERACTIONS).unwrap();
        let few = d.users().get("few").unwrap();
        let mut seen = HashSet::new();
        for f in &folds.folds {
            assert_eq!(f.validation.len(), 2);
            assert!(f.validation.positives().iter().all(|&(u, _)| u != few));
            assert_eq!(f.train.len(), 12);
            seen.extend(f.validation.positives().iter().copied());
        }
        assert_eq!(seen.len(), 10, "ten items rotate through five folds");
        let tiny = ImplicitDataset::from_pairs("t", [("a", "x")]);
        assert!(matches!(
            kfold_per_user(&tiny, 5, 0, 0.2, 5),
            Err(SplitError::NoEligibleUsers(5))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn split_invariants(seed in 0u64..1000, data_seed in 0u64..50, per_user in any::<bool>()) {
            let d = generate_synthetic(&SyntheticConfig {
                seed: data_seed,
                n_users: 12,
                n_items: 15,
                density: 0.5,
                ..Default::default()
            }).unwrap();
            let cfg = if per_user { SplitConfig::per_user(seed, 3, 1) } else { SplitConfig::global(seed) };
            let s = if per_user { per_user_split(&d, &cfg) } else { global_random_split(&d, &cfg) }.unwrap();
            let (tr, te) = (pairs(&s.train), pairs(&s.test));
            prop_assert!(tr.is_disjoint(&te));
            prop_assert!(tr.union(&te).all(|p| pairs(&d).contains(p)));
            if per_user {
                let train_users: HashSet<_> = tr.iter().map(|p| p.0.clone()).collect();
                prop_assert!(te.iter().all(|p| train_users.contains(&p.0)));
            } else {
                prop_assert_eq!(tr.len() + te.len(), d.len());
                prop_assert!((tr.len() as f64 - 0.8 * d.len() as f64).abs() <= 1.0);
            }
            let again = if per_user { per_user_split(&d, &cfg) } else { global_random_split(&d, &cfg) }.unwrap();
            prop_assert_eq!(s.checksum, again.checksum);
        }
    }
}
