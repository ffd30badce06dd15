//! Implicit-feedback scorers and top-N evaluation.
//!
//! A [`RankingScorer`] is fitted on an [`ImplicitDataset`] and scores any
//! `(user, item)` pair; [`recommend`] turns a score vector into a ranked list,
//! excluding the user's training items and breaking ties by item index.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{ImplicitDataset, ItemIdx, UserIdx};
use crate::error::{MetricError, ModelError};
use crate::metrics::{ranking_scores_with, IdealCutoff, RankedRelevance, RankingScores, UserAveraging};
use crate::scalar::Scalar;

mod als;
mod baselines;
mod bpr;
mod knn;
mod lmf;

pub use als::{Als, AlsConfig};
pub use baselines::{PopularScorer, RandomScorer, UserMeanScorer};
pub use bpr::{Bpr, BprConfig};
pub use knn::{ItemKnn, KnnConfig, UserKnn};
pub use lmf::{LogisticMf, LogisticMfConfig};

/// Implicit-feedback model contract.
pub trait RankingScorer<T: Scalar>: Send + Sync {
    fn name(&self) -> &str;

    fn fit(&mut self, train: &ImplicitDataset) -> Result<(), ModelError>;

    fn score(&self, user: UserIdx, item: ItemIdx) -> Result<T, ModelError>;

    /// Scores of every item index `0..out.len()` for `user`.
    fn score_all(&self, user: UserIdx, out: &mut [T]) -> Result<(), ModelError> {
        for (i, s) in out.iter_mut().enumerate() {
            *s = self.score(user, i as ItemIdx)?;
        }
        Ok(())
    }

    /// Arithmetic operations spent by the last `fit`.
    fn ops(&self) -> u64;

    /// Rough cost of one [`score_all`](Self::score_all) call.
    fn score_ops(&self) -> u64;
}

/// Descending-score order with ties broken by ascending item index.
#[inline]
pub fn rank_order<T: Scalar>(a: (ItemIdx, T), b: (ItemIdx, T)) -> std::cmp::Ordering {
    b.1.partial_cmp(&a.1)
        .unwrap_or_else(|| a.1.is_nan().cmp(&b.1.is_nan()))
        .then(a.0.cmp(&b.0))
}

/// The `n` best candidates by score. `seen` (sorted ascending) is excluded.
pub fn recommend<T: Scalar>(scores: &[T], n: usize, candidates: &[ItemIdx], seen: &[ItemIdx]) -> Vec<(ItemIdx, T)> {
    let mut pool: Vec<(ItemIdx, T)> = candidates
        .iter()
        .filter(|i| seen.binary_search(i).is_err())
        .map(|&i| (i, scores[i as usize]))
        .collect();
    let n = n.min(pool.len());
    if n == 0 {
        return Vec::new();
    }
    if n < pool.len() {
        pool.select_nth_unstable_by(n - 1, |a, b| rank_order(*a, *b));
        pool.truncate(n);
    }
    pool.sort_by(|a, b| rank_order(*a, *b));
    pool
}

/// Top-`n` over the whole catalogue for one user.
pub fn recommend_for<T: Scalar>(
    model: &dyn RankingScorer<T>,
    user: UserIdx,
    n: usize,
    n_items: usize,
    seen: &[ItemIdx],
) -> Result<Vec<(ItemIdx, T)>, ModelError> {
    let mut scores = vec![T::zero(); n_items];
    model.score_all(user, &mut scores)?;
    let all: Vec<ItemIdx> = (0..n_items as ItemIdx).collect();
    Ok(recommend(&scores, n, &all, seen))
}

/// Evaluation settings for the ranking pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RankingEval {
    /// Cut-off for NDCG and the recommendation-list length.
    pub k: usize,
    pub persistence: f64,
    pub averaging: UserAveraging,
    /// Normalise NDCG by every relevant test item, not just the first `k`.
    pub ideal: IdealCutoff,
}

impl Default for RankingEval {
    fn default() -> Self {
        RankingEval {
            k: 10,
            persistence: 0.8,
            averaging: UserAveraging::IncludeEmpty,
            ideal: IdealCutoff::AllRelevant,
        }
    }
}

/// One user's evaluated list.
#[derive(Debug, Clone, PartialEq)]
pub struct UserRanking<T> {
    pub user: UserIdx,
    pub items: Vec<(ItemIdx, T)>,
    pub relevance: RankedRelevance,
}

/// Per-user lists plus the averaged metrics.
#[derive(Debug, Clone)]
pub struct RankingReport<T> {
    pub scores: RankingScores<T>,
    pub users: Vec<UserRanking<T>>,
}

/// Users with at least one positive in `train` or `test`, ascending. When the
/// split was made on ratings, pass the split's own user set instead so users
/// whose held-out ratings are all below threshold still count.
pub fn evaluation_users(train: &ImplicitDataset, test: &ImplicitDataset) -> Vec<UserIdx> {
    let mut seen = vec![false; train.user_capacity().max(test.user_capacity())];
    for &(u, _) in train.positives().iter().chain(test.positives()) {
        seen[u as usize] = true;
    }
    (0..seen.len() as UserIdx).filter(|&u| seen[u as usize]).collect()
}

/// Ranks the full catalogue for each of `users` with `scores_for`, excluding
/// their training positives, then computes NDCG@k, RBP and RecipRank against
/// `test`.
pub fn evaluate_with<T, F>(
    train: &ImplicitDataset,
    test: &ImplicitDataset,
    users: &[UserIdx],
    cfg: &RankingEval,
    mut scores_for: F,
) -> Result<RankingReport<T>, ModelError>
where
    T: Scalar,
    F: FnMut(UserIdx, &mut [T]) -> Result<(), ModelError>,
{
    let n_items = train.item_capacity().max(test.item_capacity());
    let all: Vec<ItemIdx> = (0..n_items as ItemIdx).collect();
    let tr = train.by_user();
    let te = test.by_user();
    let none = Vec::new();
    let mut buf = vec![T::zero(); n_items];
    let mut out = Vec::with_capacity(users.len());
    for &u in users {
        let seen = tr.get(u as usize).unwrap_or(&none);
        let rel = te.get(u as usize).unwrap_or(&none);
        scores_for(u, &mut buf)?;
        let items = recommend(&buf, cfg.k, &all, seen);
        let flags = items.iter().map(|(i, _)| rel.binary_search(i).is_ok()).collect();
        out.push(UserRanking {
            user: u,
            items,
            relevance: RankedRelevance::new(flags, rel.len()),
        });
    }
    let lists: Vec<RankedRelevance> = out.iter().map(|u| u.relevance.clone()).collect();
    let scores = ranking_scores_with(&lists, cfg.k, T::of(cfg.persistence), cfg.averaging, cfg.ideal).map_err(|e| match e {
        MetricError::Empty => ModelError::Precondition("no users to evaluate".into()),
        MetricError::Parameter(p) => ModelError::Config(p),
    })?;
    Ok(RankingReport { scores, users: out })
}

/// [`evaluate_with`] using a fitted scorer.
pub fn evaluate<T: Scalar>(
    model: &dyn RankingScorer<T>,
    train: &ImplicitDataset,
    test: &ImplicitDataset,
    cfg: &RankingEval,
) -> Result<RankingReport<T>, ModelError> {
    let users = evaluation_users(train, test);
    evaluate_with(train, test, &users, cfg, |u, out| model.score_all(u, out))
}

/// Writes `user, rank, item, score` rows using external ids.
pub fn write_top_n_tsv<T: Scalar>(
    report: &RankingReport<T>,
    train: &ImplicitDataset,
    path: &Path,
) -> std::io::Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "user\trank\titem\tscore")?;
    for u in &report.users {
        for (rank, (i, s)) in u.items.iter().enumerate() {
            writeln!(
                w,
                "{}\t{}\t{}\t{}",
                train.users().id(u.user),
                rank + 1,
                train.items().id(*i),
                s
            )?;
        }
    }
    w.flush()
}

/// Writes per-user `user, ndcg, rbp, recip_rank` rows for debugging.
pub fn write_per_user_tsv<T: Scalar>(
    report: &RankingReport<T>,
    train: &ImplicitDataset,
    cfg: &RankingEval,
    path: &Path,
) -> std::io::Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "user\tndcg\trbp\trecip_rank")?;
    for u in &report.users {
        let r = &u.relevance;
        let ndcg: f64 = crate::metrics::ndcg_with(r, cfg.k, cfg.ideal);
        let rbp = crate::metrics::rbp(r, cfg.persistence).unwrap_or(f64::NAN);
        let rr = r.first_relevant_rank().map_or(0.0, |k| 1.0 / k as f64);
        writeln!(w, "{}\t{ndcg}\t{rbp}\t{rr}", train.users().id(u.user))?;
    }
    w.flush()
}

/// Guard against a positive-less training set.
pub(crate) fn non_empty(train: &ImplicitDataset) -> Result<(), ModelError> {
    if train.is_empty() {
        Err(ModelError::EmptyTrain)
    } else {
        Ok(())
    }
}

/// Names of the single-model ranking scorers, in canonical order.
pub const RANKING_MODEL_NAMES: [&str; 8] = [
    "random",
    "popular",
    "user_mean",
    "als",
    "bpr",
    "logistic_mf",
    "item_knn",
    "user_knn",
];

/// Per-model hyperparameters as they appear in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum RankingModelConfig {
    Random {
        #[serde(default)]
        seed: u64,
    },
    Popular,
    UserMean {
        #[serde(default)]
        seed: u64,
    },
    Als(AlsConfig),
    Bpr(BprConfig),
    LogisticMf(LogisticMfConfig),
    ItemKnn(KnnConfig),
    UserKnn(KnnConfig),
}

impl RankingModelConfig {
    pub fn default_for(name: &str, seed: u64) -> Option<Self> {
        Some(match name {
            "random" => Self::Random { seed },
            "popular" => Self::Popular,
            "user_mean" => Self::UserMean { seed },
            "als" => Self::Als(AlsConfig { seed, ..Default::default() }),
            "bpr" => Self::Bpr(BprConfig { seed, ..Default::default() }),
            "logistic_mf" => Self::LogisticMf(LogisticMfConfig { seed, ..Default::default() }),
            "item_knn" => Self::ItemKnn(KnnConfig::default()),
            "user_knn" => Self::UserKnn(KnnConfig::default()),
            _ => return None,
        })
    }

    pub fn build<T: Scalar>(&self) -> Box<dyn RankingScorer<T>> {
        match self {
            Self::Random { seed } => Box::new(RandomScorer::new(*seed)),
            Self::Popular => Box::new(PopularScorer::new()),
            Self::UserMean { seed } => Box::new(UserMeanScorer::new(*seed)),
            Self::Als(c) => Box::new(Als::new(*c)),
            Self::Bpr(c) => Box::new(Bpr::new(*c)),
            Self::LogisticMf(c) => Box::new(LogisticMf::new(*c)),
            Self::ItemKnn(c) => Box::new(ItemKnn::new(*c)),
            Self::UserKnn(c) => Box::new(UserKnn::new(*c)),
        }
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use crate::data::ImplicitDataset;

    pub fn implicit(pairs: &[(&str, &str)]) -> ImplicitDataset {
        ImplicitDataset::from_pairs("toy", pairs.iter().copied())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recommend_orders_and_excludes() {
        let scores = [0.5f64, 0.9, 0.9, 0.1, 0.7];
        let all = [0, 1, 2, 3, 4];
        let top = recommend(&scores, 3, &all, &[4]);
        assert_eq!(top.iter().map(|x| x.0).collect::<Vec<_>>(), vec![1, 2, 0]);
        assert_eq!(recommend(&scores, 10, &all, &[0, 1, 2, 3, 4]), vec![]);
        let full = recommend(&scores, 10, &all, &[]);
        assert_eq!(full.len(), 5);
    }

    #[test]
    fn nan_scores_sink() {
        let scores = [f64::NAN, 0.2, 0.1];
        let top = recommend(&scores, 3, &[0, 1, 2], &[]);
        assert_eq!(top[0].0, 1);
        assert_eq!(top[2].0, 0);
    }
}
