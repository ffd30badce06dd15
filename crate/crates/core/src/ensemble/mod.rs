//! Combining several base models into one, for both pipelines.
//!
//! The pure combination rules live here as free functions so they can be
//! checked in isolation; [`RatingEnsemble`] and [`RankingEnsemble`] wire them
//! to fitted bases.

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::scalar::Scalar;

mod ranking;
mod rating;

pub use ranking::RankingEnsemble;
pub use rating::RatingEnsemble;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    Rating,
    Ranking,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Average,
    Weighted,
    Stacking,
    RankFusion,
    TopPerformers,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Average => "average",
            Strategy::Weighted => "weighted",
            Strategy::Stacking => "stacking",
            Strategy::RankFusion => "rank_fusion",
            Strategy::TopPerformers => "top_performers",
        }
    }

    pub fn supports(self, pipeline: Pipeline) -> bool {
        !matches!(
            (self, pipeline),
            (Strategy::Stacking, Pipeline::Ranking) | (Strategy::RankFusion, Pipeline::Rating)
        )
    }
}

/// Strategy-specific knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetaParams {
    /// Share of the training set kept for fitting bases when learning weights.
    pub holdout_train_fraction: f64,
    /// Reciprocal-rank-fusion constant.
    pub rrf_c: f64,
    pub seed: u64,
}

impl Default for MetaParams {
    fn default() -> Self {
        MetaParams {
            holdout_train_fraction: 0.75,
            rrf_c: 60.0,
            seed: 0,
        }
    }
}

/// Declarative description of an ensemble, as found in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub pipeline: Pipeline,
    pub strategy: Strategy,
    #[serde(default)]
    pub base_models: Vec<String>,
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    #[serde(default)]
    pub meta_params: MetaParams,
}

impl EnsembleSpec {
    /// The default base list for a pipeline/strategy pair.
    pub fn new(pipeline: Pipeline, strategy: Strategy) -> Self {
        let bases: &[&str] = match (pipeline, strategy) {
            (Pipeline::Rating, Strategy::TopPerformers) => &["svd", "svdpp"],
            (Pipeline::Rating, _) => &["svd", "svdpp", "nmf", "knn_baseline"],
            (Pipeline::Ranking, Strategy::TopPerformers) => &["als", "item_knn"],
            (Pipeline::Ranking, _) => &["als", "bpr", "item_knn", "user_knn"],
        };
        EnsembleSpec {
            pipeline,
            strategy,
            base_models: bases.iter().map(|s| s.to_string()).collect(),
            weights: None,
            meta_params: MetaParams::default(),
        }
    }

    /// Display name used in result records, e.g. `ensemble_average`.
    pub fn name(&self) -> String {
        format!("ensemble_{}", self.strategy.as_str())
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.base_models.is_empty() {
            return Err(ModelError::Config("ensemble needs at least one base model".into()));
        }
        if !self.strategy.supports(self.pipeline) {
            return Err(ModelError::Config(format!(
                "strategy {} is not available for the {:?} pipeline",
                self.strategy.as_str(),
                self.pipeline
            )));
        }
        if let Some(w) = &self.weights {
            validate_weights(w, self.base_models.len())?;
        }
        let m = &self.meta_params;
        if !(m.holdout_train_fraction > 0.0 && m.holdout_train_fraction < 1.0) {
            return Err(ModelError::Config(format!(
                "holdout_train_fraction {} not in (0, 1)",
                m.holdout_train_fraction
            )));
        }
        if !(m.rrf_c >= 0.0) {
            return Err(ModelError::Config(format!("rrf_c {} must be non-negative", m.rrf_c)));
        }
        Ok(())
    }
}

/// Non-negative, one per base, summing to 1 within 1e-9.
pub fn validate_weights(w: &[f64], n: usize) -> Result<(), ModelError> {
    if w.len() != n {
        return Err(ModelError::Config(format!("{} weights for {n} base models", w.len())));
    }
    if w.iter().any(|x| !(*x >= 0.0)) {
        return Err(ModelError::Config(format!("weights must be non-negative: {w:?}")));
    }
    let s: f64 = w.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(ModelError::Config(format!("weights sum to {s}, not 1")));
    }
    Ok(())
}

/// Scales to sum 1; all-zero input becomes uniform.
pub fn normalize_weights<T: Scalar>(w: &[T]) -> Vec<T> {
    let s: T = w.iter().copied().sum();
    if s > T::zero() {
        w.iter().map(|&x| x / s).collect()
    } else {
        vec![T::one() / T::of_usize(w.len()); w.len()]
    }
}

/// Arithmetic mean, kept inside `[min, max]` of the inputs despite rounding.
pub fn average<T: Scalar>(preds: &[T]) -> T {
    let (mut lo, mut hi) = (preds[0], preds[0]);
    let mut s = T::zero();
    for &p in preds {
        s += p;
        lo = lo.min(p);
        hi = hi.max(p);
    }
    (s / T::of_usize(preds.len())).max(lo).min(hi)
}

/// `Σ w_m · p_m`. Uniform weights take the [`average`] path so both agree
/// bit for bit.
pub fn weighted<T: Scalar>(preds: &[T], weights: &[T]) -> T {
    debug_assert_eq!(preds.len(), weights.len());
    if weights.iter().all(|&w| w == weights[0]) {
        return average(preds);
    }
    preds.iter().zip(weights).map(|(&p, &w)| p * w).sum()
}

/// Min–max scales `scores` to `[0, 1]` in place; a constant vector maps to 0.5.
pub fn min_max_normalize<T: Scalar>(scores: &mut [T]) {
    let Some(&first) = scores.first() else {
        return;
    };
    let (lo, hi) = scores.iter().fold((first, first), |(l, h), &s| (l.min(s), h.max(s)));
    let span = hi - lo;
    if !(span > T::zero()) || !span.is_finite() {
        scores.iter_mut().for_each(|s| *s = T::of(0.5));
        return;
    }
    scores.iter_mut().for_each(|s| *s = (*s - lo) / span);
}

/// 1-based ranks of `scores` (descending, ties by position).
pub fn ranks<T: Scalar>(scores: &[T]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| crate::ranking::rank_order((a as u32, scores[a]), (b as u32, scores[b])));
    let mut r = vec![0; scores.len()];
    for (pos, &i) in order.iter().enumerate() {
        r[i] = pos + 1;
    }
    r
}

/// Reciprocal rank fusion: `Σ_m 1 / (c + rank_m(i))` over aligned score lists.
pub fn reciprocal_rank_fusion<T: Scalar>(lists: &[Vec<T>], c: T) -> Vec<T> {
    let n = lists.first().map_or(0, Vec::len);
    let mut fused = vec![T::zero(); n];
    for l in lists {
        for (f, r) in fused.iter_mut().zip(ranks(l)) {
            *f += T::one() / (c + T::of_usize(r));
        }
    }
    fused
}

pub(crate) fn wrap_base(model: &str) -> impl FnOnce(ModelError) -> ModelError + '_ {
    move |e| ModelError::Base {
        model: model.to_owned(),
        source: Box::new(e),
    }
}
