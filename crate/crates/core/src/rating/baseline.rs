use serde::{Deserialize, Serialize};

use super::{fitted, RatingPredictor, TrainView};
use crate::data::{Dataset, ItemIdx, UserIdx};
use crate::error::ModelError;
use crate::rng::{hash_normal, hash_unit};
use crate::scalar::Scalar;

/// Predicts the training mean everywhere.
#[derive(Debug, Clone, Default)]
pub struct GlobalMean<T> {
    state: Option<(T, u64)>,
}

impl<T: Scalar> GlobalMean<T> {
    pub fn new() -> Self {
        GlobalMean { state: None }
    }
}

impl<T: Scalar> RatingPredictor<T> for GlobalMean<T> {
    fn name(&self) -> &str {
        "global_mean"
    }

    fn fit(&mut self, train: &Dataset) -> Result<(), ModelError> {
        let v = TrainView::<T>::new(train)?;
        self.state = Some((v.clamp(v.mu), v.n as u64));
        Ok(())
    }

    fn predict(&self, _: UserIdx, _: ItemIdx) -> Result<T, ModelError> {
        Ok(fitted(&self.state)?.0)
    }

    fn ops(&self) -> u64 {
        self.state.map_or(0, |s| s.1)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RandomDistribution {
    /// `N(μ, σ)` fitted on the training ratings, clamped to the scale.
    #[default]
    Normal,
    /// Uniform over `[min, max]`.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RandomConfig {
    pub seed: u64,
    pub distribution: RandomDistribution,
}

impl Default for RandomConfig {
    fn default() -> Self {
        RandomConfig {
            seed: 0,
            distribution: RandomDistribution::Normal,
        }
    }
}

/// Random ratings. Each `(user, item)` pair maps to a fixed draw, so the
/// prediction stream is reproducible regardless of query order.
#[derive(Debug, Clone)]
pub struct RandomPredictor<T> {
    cfg: RandomConfig,
    state: Option<RandomState<T>>,
}

#[derive(Debug, Clone)]
struct RandomState<T> {
    lo: T,
    hi: T,
    mu: f64,
    sigma: f64,
    n: u64,
}

impl<T: Scalar> RandomPredictor<T> {
    pub fn new(cfg: RandomConfig) -> Self {
        RandomPredictor { cfg, state: None }
    }
}

impl<T: Scalar> RatingPredictor<T> for RandomPredictor<T> {
    fn name(&self) -> &str {
        "random"
    }

    fn fit(&mut self, train: &Dataset) -> Result<(), ModelError> {
        let scale = train.scale();
        let n = train.len();
        let (mu, sigma) = if n == 0 {
            ((scale.min + scale.max) / 2.0, 0.0)
        } else {
            let mu = train.mean_rating().unwrap_or(0.0);
            let var = train.interactions().iter().map(|x| (x.rating - mu).powi(2)).sum::<f64>() / n as f64;
            (mu, var.sqrt())
        };
        self.state = Some(RandomState {
            lo: T::of(scale.min),
            hi: T::of(scale.max),
            mu,
            sigma,
            n: n as u64,
        });
        Ok(())
    }

    fn predict(&self, user: UserIdx, item: ItemIdx) -> Result<T, ModelError> {
        let s = fitted(&self.state)?;
        let (u, i) = (user as u64, item as u64);
        let v = match self.cfg.distribution {
            RandomDistribution::Normal => T::of(s.mu + s.sigma * hash_normal(self.cfg.seed, u, i)),
            RandomDistribution::Uniform => s.lo + (s.hi - s.lo) * T::of(hash_unit(self.cfg.seed, u, i)),
        };
        Ok(crate::scalar::clamp(v, s.lo, s.hi))
    }

    fn ops(&self) -> u64 {
        self.state.as_ref().map_or(0, |s| 2 * s.n)
    }

    fn predict_ops(&self) -> u64 {
        8
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BiasConfig {
    pub reg_user: f64,
    pub reg_item: f64,
    pub epochs: usize,
}

impl Default for BiasConfig {
    fn default() -> Self {
        BiasConfig {
            reg_user: 15.0,
            reg_item: 10.0,
            epochs: 10,
        }
    }
}

/// Fitted `μ + b_u + b_i` terms, shared with the neighbourhood model.
#[derive(Debug, Clone)]
pub(crate) struct Biases<T> {
    pub mu: T,
    pub bu: Vec<T>,
    pub bi: Vec<T>,
}

impl<T: Scalar> Biases<T> {
    /// Alternating regularised least squares: each half-step is the exact
    /// minimiser over one side with the other held fixed.
    pub fn fit(v: &TrainView<T>, cfg: &BiasConfig) -> Self {
        let mu = v.mu;
        let mut bu = vec![T::zero(); v.by_user.len()];
        let mut bi = vec![T::zero(); v.by_item.len()];
        let (reg_u, reg_i) = (T::of(cfg.reg_user), T::of(cfg.reg_item));
        for _ in 0..cfg.epochs {
            for (u, row) in v.by_user.iter().enumerate() {
                if row.is_empty() {
                    continue;
                }
                let s: T = row.iter().map(|&(i, r)| r - mu - bi[i as usize]).sum();
                bu[u] = s / (reg_u + T::of_usize(row.len()));
            }
            for (i, col) in v.by_item.iter().enumerate() {
                if col.is_empty() {
                    continue;
                }
                let s: T = col.iter().map(|&(u, r)| r - mu - bu[u as usize]).sum();
                bi[i] = s / (reg_i + T::of_usize(col.len()));
            }
        }
        Biases { mu, bu, bi }
    }

    /// Unclamped baseline; unseen ids contribute zero bias.
    #[inline]
    pub fn estimate(&self, u: UserIdx, i: ItemIdx) -> T {
        self.mu
            + self.bu.get(u as usize).copied().unwrap_or_else(T::zero)
            + self.bi.get(i as usize).copied().unwrap_or_else(T::zero)
    }
}

/// `μ + b_u + b_i`.
#[derive(Debug, Clone)]
pub struct BiasBaseline<T> {
    cfg: BiasConfig,
    state: Option<(TrainBounds<T>, Biases<T>)>,
    ops: u64,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct TrainBounds<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: Scalar> BiasBaseline<T> {
    pub fn new(cfg: BiasConfig) -> Self {
        BiasBaseline { cfg, state: None, ops: 0 }
    }

    pub fn user_bias(&self, u: UserIdx) -> Option<T> {
        self.state.as_ref().and_then(|s| s.1.bu.get(u as usize).copied())
    }

    pub fn item_bias(&self, i: ItemIdx) -> Option<T> {
        self.state.as_ref().and_then(|s| s.1.bi.get(i as usize).copied())
    }

    pub fn global_mean(&self) -> Option<T> {
        self.state.as_ref().map(|s| s.1.mu)
    }
}

impl<T: Scalar> RatingPredictor<T> for BiasBaseline<T> {
    fn name(&self) -> &str {
        "bias_baseline"
    }

    fn fit(&mut self, train: &Dataset) -> Result<(), ModelError> {
        let v = TrainView::<T>::new(train)?;
        let b = Biases::fit(&v, &self.cfg);
        self.ops = (v.n as u64) * (1 + 2 * 3 * self.cfg.epochs as u64);
        self.state = Some((TrainBounds { lo: v.lo, hi: v.hi }, b));
        Ok(())
    }

    fn predict(&self, u: UserIdx, i: ItemIdx) -> Result<T, ModelError> {
        let (bounds, b) = fitted(&self.state)?;
        Ok(crate::scalar::clamp(b.estimate(u, i), bounds.lo, bounds.hi))
    }

    fn ops(&self) -> u64 {
        self.ops
    }

    fn predict_ops(&self) -> u64 {
        3
    }
}
