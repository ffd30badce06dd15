//! Explicit-rating predictors.
//!
//! Every model implements [`RatingPredictor`]: fit on a training [`Dataset`],
//! then predict any `(user, item)` index pair, including ones absent from the
//! training data. Predictions are always clamped to the training rating scale.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, ItemIdx, UserIdx};
use crate::error::ModelError;
use crate::metrics::PredictionPair;
use crate::scalar::{clamp, Scalar};

mod baseline;
mod co_clustering;
mod knn;
mod mf;
mod nmf;
mod slope_one;

pub use baseline::{BiasBaseline, BiasConfig, GlobalMean, RandomConfig, RandomDistribution, RandomPredictor};
pub use co_clustering::{CoClustering, CoClusteringConfig};
pub use knn::{KnnBaseline, KnnBaselineConfig};
pub use mf::{Svd, SvdConfig, SvdPp, SvdPpConfig};
pub use nmf::{Nmf, NmfConfig};
pub use slope_one::SlopeOne;

/// Default similarity-matrix memory budget: 4 GiB.
pub const DEFAULT_MEMORY_BUDGET: u64 = 4 << 30;

/// Explicit-feedback model contract.
pub trait RatingPredictor<T: Scalar>: Send + Sync {
    fn name(&self) -> &str;

    fn fit(&mut self, train: &Dataset) -> Result<(), ModelError>;

    /// Estimated rating, clamped to the training scale.
    fn predict(&self, user: UserIdx, item: ItemIdx) -> Result<T, ModelError>;

    /// Arithmetic operations spent by the last `fit` (an energy proxy).
    fn ops(&self) -> u64;

    /// Rough arithmetic cost of a single `predict` call.
    fn predict_ops(&self) -> u64 {
        1
    }
}

/// Predicts every interaction of `test`.
pub fn predict_pairs<T: Scalar>(
    model: &dyn RatingPredictor<T>,
    test: &Dataset,
) -> Result<Vec<PredictionPair<T>>, ModelError> {
    test.interactions()
        .iter()
        .map(|x| Ok(PredictionPair::new(T::of(x.rating), model.predict(x.user, x.item)?)))
        .collect()
}

/// Guard for models that allocate a dense `n × n` matrix of `T`.
pub fn check_capacity<T>(n: usize, budget: u64) -> Result<(), ModelError> {
    let required = (n as u64)
        .saturating_mul(n as u64)
        .saturating_mul(std::mem::size_of::<T>() as u64);
    if required > budget {
        return Err(ModelError::Capacity { required, budget });
    }
    Ok(())
}

/// Quantities every model needs from its training set.
#[derive(Debug, Clone)]
pub(crate) struct TrainView<T> {
    pub lo: T,
    pub hi: T,
    pub mu: T,
    pub by_user: Vec<Vec<(ItemIdx, T)>>,
    pub by_item: Vec<Vec<(UserIdx, T)>>,
    pub n: usize,
}

impl<T: Scalar> TrainView<T> {
    pub fn new(train: &Dataset) -> Result<Self, ModelError> {
        if train.is_empty() {
            return Err(ModelError::EmptyTrain);
        }
        let conv = |v: Vec<Vec<(u32, f64)>>| -> Vec<Vec<(u32, T)>> {
            v.into_iter()
                .map(|row| row.into_iter().map(|(k, r)| (k, T::of(r))).collect())
                .collect()
        };
        let scale = train.scale();
        Ok(TrainView {
            lo: T::of(scale.min),
            hi: T::of(scale.max),
            mu: T::of(train.mean_rating().unwrap_or(0.0)),
            by_user: conv(train.by_user()),
            by_item: conv(train.by_item()),
            n: train.len(),
        })
    }

    #[inline]
    pub fn clamp(&self, v: T) -> T {
        clamp(v, self.lo, self.hi)
    }

    /// Flat `(user, item, rating)` triples in user-major order.
    pub fn triples(&self) -> impl Iterator<Item = (UserIdx, ItemIdx, T)> + '_ {
        self.by_user
            .iter()
            .enumerate()
            .flat_map(|(u, row)| row.iter().map(move |&(i, r)| (u as UserIdx, i, r)))
    }
}

/// Helper to turn a missing fit into the typed error.
#[inline]
pub(crate) fn fitted<S>(s: &Option<S>) -> Result<&S, ModelError> {
    s.as_ref().ok_or(ModelError::NotFitted)
}

/// Names of the single-model rating predictors, in canonical order.
pub const RATING_MODEL_NAMES: [&str; 9] = [
    "global_mean",
    "random",
    "bias_baseline",
    "svd",
    "svdpp",
    "nmf",
    "knn_baseline",
    "slope_one",
    "co_clustering",
];

/// Per-model hyperparameters as they appear in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum RatingModelConfig {
    GlobalMean,
    Random(RandomConfig),
    BiasBaseline(BiasConfig),
    Svd(SvdConfig),
    Svdpp(SvdPpConfig),
    Nmf(NmfConfig),
    KnnBaseline(KnnBaselineConfig),
    SlopeOne {
        #[serde(default = "default_budget")]
        memory_budget: u64,
    },
    CoClustering(CoClusteringConfig),
}

fn default_budget() -> u64 {
    DEFAULT_MEMORY_BUDGET
}

impl RatingModelConfig {
    /// Default hyperparameters for a named model, with `seed` applied.
    pub fn default_for(name: &str, seed: u64) -> Option<Self> {
        Some(match name {
            "global_mean" => Self::GlobalMean,
            "random" => Self::Random(RandomConfig { seed, ..Default::default() }),
            "bias_baseline" => Self::BiasBaseline(BiasConfig::default()),
            "svd" => Self::Svd(SvdConfig { seed, ..Default::default() }),
            "svdpp" => Self::Svdpp(SvdPpConfig { seed, ..Default::default() }),
            "nmf" => Self::Nmf(NmfConfig { seed, ..Default::default() }),
            "knn_baseline" => Self::KnnBaseline(KnnBaselineConfig::default()),
            "slope_one" => Self::SlopeOne {
                memory_budget: DEFAULT_MEMORY_BUDGET,
            },
            "co_clustering" => Self::CoClustering(CoClusteringConfig { seed, ..Default::default() }),
            _ => return None,
        })
    }

    pub fn build<T: Scalar>(&self) -> Box<dyn RatingPredictor<T>> {
        match self {
            Self::GlobalMean => Box::new(GlobalMean::new()),
            Self::Random(c) => Box::new(RandomPredictor::new(*c)),
            Self::BiasBaseline(c) => Box::new(BiasBaseline::new(*c)),
            Self::Svd(c) => Box::new(Svd::new(*c)),
            Self::Svdpp(c) => Box::new(SvdPp::new(*c)),
            Self::Nmf(c) => Box::new(Nmf::new(*c)),
            Self::KnnBaseline(c) => Box::new(KnnBaseline::new(*c)),
            Self::SlopeOne { memory_budget } => Box::new(SlopeOne::with_budget(*memory_budget)),
            Self::CoClustering(c) => Box::new(CoClustering::new(*c)),
        }
    }
}
