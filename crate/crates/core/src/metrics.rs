//! Rating and ranking accuracy metrics, plus fold/user aggregation.

use serde::{Deserialize, Serialize};

use crate::error::MetricError;
use crate::scalar::Scalar;

/// An observed rating and the model's estimate of it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionPair<T> {
    pub actual: T,
    pub predicted: T,
}

impl<T> PredictionPair<T> {
    pub fn new(actual: T, predicted: T) -> Self {
        PredictionPair { actual, predicted }
    }
}

/// Root mean squared error.
pub fn rmse<T: Scalar>(pairs: &[PredictionPair<T>]) -> Result<T, MetricError> {
    if pairs.is_empty() {
        return Err(MetricError::Empty);
    }
    let sse: T = pairs
        .iter()
        .map(|p| {
            let e = p.actual - p.predicted;
            e * e
        })
        .sum();
    Ok((sse / T::of_usize(pairs.len())).sqrt())
}

/// Binary relevance of one user's recommendation list, top first, plus the number
/// of relevant items the user has in the test set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankedRelevance {
    pub relevance: Vec<bool>,
    pub total_relevant: usize,
}

impl RankedRelevance {
    pub fn new(relevance: Vec<bool>, total_relevant: usize) -> Self {
        let hits = relevance.iter().filter(|r| **r).count();
        RankedRelevance {
            relevance,
            total_relevant: total_relevant.max(hits),
        }
    }

    /// 1-based position of the first relevant entry.
    pub fn first_relevant_rank(&self) -> Option<usize> {
        self.relevance.iter().position(|r| *r).map(|p| p + 1)
    }
}

#[inline]
fn discount<T: Scalar>(rank: usize) -> T {
    T::one() / T::of_usize(rank + 1).log2()
}

/// How many positions the ideal list behind IDCG gets.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IdealCutoff {
    /// `min(k, total_relevant)` hits, so a perfect top-k list scores 1.
    #[default]
    AtK,
    /// Every relevant test item, even beyond `k`. Users with more than `k`
    /// relevant items can then never reach 1.
    AllRelevant,
}

/// `DCG@k / IDCG@k` with gain `rel_i / log2(i + 1)`. The ideal list places
/// `min(k, total_relevant)` hits on top; a user without relevant items scores 0.
pub fn ndcg_at_k<T: Scalar>(r: &RankedRelevance, k: usize) -> T {
    ndcg_with(r, k, IdealCutoff::AtK)
}

/// [`ndcg_at_k`] with a choice of ideal-list length.
pub fn ndcg_with<T: Scalar>(r: &RankedRelevance, k: usize, ideal: IdealCutoff) -> T {
    let ideal_hits = match ideal {
        IdealCutoff::AtK => r.total_relevant.min(k),
        IdealCutoff::AllRelevant => r.total_relevant,
    };
    if ideal_hits == 0 {
        return T::zero();
    }
    let dcg: T = r
        .relevance
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, rel)| **rel)
        .map(|(i, _)| discount::<T>(i + 1))
        .sum();
    let idcg: T = (1..=ideal_hits).map(discount::<T>).sum();
    dcg / idcg
}

/// Rank-biased precision `(1 − p) Σ p^{i−1} rel_i` over the whole list.
pub fn rbp<T: Scalar>(r: &RankedRelevance, persistence: T) -> Result<T, MetricError> {
    if !(persistence > T::zero() && persistence < T::one()) {
        return Err(MetricError::Parameter(format!(
            "persistence {persistence} not in (0, 1)"
        )));
    }
    let mut weight = T::one();
    let mut acc = T::zero();
    for rel in &r.relevance {
        if *rel {
            acc += weight;
        }
        weight *= persistence;
    }
    Ok((T::one() - persistence) * acc)
}

/// Mean over users of `1 / rank_u`; users whose list holds no relevant item add 0.
pub fn reciprocal_rank<T: Scalar>(first_relevant: &[Option<usize>]) -> Result<T, MetricError> {
    if first_relevant.is_empty() {
        return Err(MetricError::Empty);
    }
    let total: T = first_relevant
        .iter()
        .map(|r| match r {
            Some(rank) if *rank >= 1 => T::one() / T::of_usize(*rank),
            _ => T::zero(),
        })
        .sum();
    Ok(total / T::of_usize(first_relevant.len()))
}

/// Mean and population standard deviation of per-fold (or per-user) values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary<T> {
    pub mean: T,
    pub std: T,
    pub values: Vec<T>,
}

pub fn summarize<T: Scalar>(values: &[T]) -> Result<MetricSummary<T>, MetricError> {
    if values.is_empty() {
        return Err(MetricError::Empty);
    }
    let n = T::of_usize(values.len());
    let mean = values.iter().copied().sum::<T>() / n;
    let var = values
        .iter()
        .map(|v| {
            let d = *v - mean;
            d * d
        })
        .sum::<T>()
        / n;
    Ok(MetricSummary {
        mean,
        std: var.max(T::zero()).sqrt(),
        values: values.to_vec(),
    })
}

/// How users without any relevant test item enter ranking-metric averages.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UserAveraging {
    /// They score 0 and stay in the denominator.
    #[default]
    IncludeEmpty,
    /// They are left out of the average entirely.
    ExcludeEmpty,
}

/// Averaged ranking metrics over a user population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankingScores<T> {
    pub ndcg: T,
    pub rbp: T,
    pub recip_rank: T,
    pub users: usize,
}

/// NDCG@k, RBP and RecipRank averaged over the given per-user relevance lists.
pub fn ranking_scores<T: Scalar>(
    lists: &[RankedRelevance],
    k: usize,
    persistence: T,
    averaging: UserAveraging,
) -> Result<RankingScores<T>, MetricError> {
    ranking_scores_with(lists, k, persistence, averaging, IdealCutoff::AtK)
}

/// [`ranking_scores`] with a choice of NDCG ideal-list length.
pub fn ranking_scores_with<T: Scalar>(
    lists: &[RankedRelevance],
    k: usize,
    persistence: T,
    averaging: UserAveraging,
    ideal: IdealCutoff,
) -> Result<RankingScores<T>, MetricError> {
    let used: Vec<&RankedRelevance> = match averaging {
        UserAveraging::IncludeEmpty => lists.iter().collect(),
        UserAveraging::ExcludeEmpty => lists.iter().filter(|r| r.total_relevant > 0).collect(),
    };
    if used.is_empty() {
        return Err(MetricError::Empty);
    }
    let n = T::of_usize(used.len());
    let mut ndcg = T::zero();
    let mut rb = T::zero();
    for r in &used {
        ndcg += ndcg_with::<T>(r, k, ideal);
        rb += rbp(r, persistence)?;
    }
    let firsts: Vec<Option<usize>> = used.iter().map(|r| r.first_relevant_rank()).collect();
    Ok(RankingScores {
        ndcg: ndcg / n,
        rbp: rb / n,
        recip_rank: reciprocal_rank(&firsts)?,
        users: used.len(),
    })
}
