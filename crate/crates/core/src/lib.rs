//! Recommender benchmarking core: datasets, splits, metrics, rating and
//! ranking models, and ensembles. Everything numeric is generic over
//! [`Scalar`] (`f32` or `f64`); the aliases below fix it to `f64`.

// `!(x > 0.0)` deliberately rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod ensemble;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod ranking;
pub mod rating;
pub mod rng;
pub mod scalar;
pub mod split;

pub use scalar::Scalar;

pub type GlobalMean = rating::GlobalMean<f64>;
pub type RandomPredictor = rating::RandomPredictor<f64>;
pub type BiasBaseline = rating::BiasBaseline<f64>;
pub type Svd = rating::Svd<f64>;
pub type SvdPp = rating::SvdPp<f64>;
pub type Nmf = rating::Nmf<f64>;
pub type KnnBaseline = rating::KnnBaseline<f64>;
pub type SlopeOne = rating::SlopeOne<f64>;
pub type CoClustering = rating::CoClustering<f64>;
pub type Als = ranking::Als<f64>;
pub type Bpr = ranking::Bpr<f64>;
pub type LogisticMf = ranking::LogisticMf<f64>;
pub type ItemKnn = ranking::ItemKnn<f64>;
pub type UserKnn = ranking::UserKnn<f64>;
pub type RatingEnsemble = ensemble::RatingEnsemble<f64>;
pub type RankingEnsemble = ensemble::RankingEnsemble<f64>;
