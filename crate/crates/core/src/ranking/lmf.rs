use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{non_empty, RankingScorer};
use crate::data::{ImplicitDataset, ItemIdx, UserIdx};
use crate::error::ModelError;
use crate::rng;
use crate::scalar::{dot, sigmoid, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticMfConfig {
    pub factors: usize,
    pub epochs: usize,
    pub lr: f64,
    pub reg: f64,
    /// Sampled negatives per positive and epoch.
    pub negatives: usize,
    pub init_std: f64,
    pub seed: u64,
}

impl Default for LogisticMfConfig {
    fn default() -> Self {
        LogisticMfConfig {
            factors: 50,
            epochs: 30,
            lr: 0.05,
            reg: 0.6,
            negatives: 30,
            init_std: 0.1,
            seed: 0,
        }
    }
}

/// Interaction probability `σ(p_u·q_i + b_u + b_i)`, fitted by SGD on the
/// positives plus uniformly sampled unobserved pairs. Scores are logits.
#[derive(Debug, Clone)]
pub struct LogisticMf<T> {
    cfg: LogisticMfConfig,
    state: Option<LmfState<T>>,
}

#[derive(Debug, Clone)]
struct LmfState<T> {
    p: Vec<T>,
    q: Vec<T>,
    bu: Vec<T>,
    bi: Vec<T>,
    ops: u64,
}

/// Regularised log-likelihood of one labelled pair.
#[cfg(test)]
pub(crate) fn pair_objective<T: Scalar>(pu: &[T], qi: &[T], bu: T, bi: T, label: bool, reg: T) -> T {
    let s = dot(pu, qi) + bu + bi;
    let ll = if label { crate::scalar::ln_sigmoid(s) } else { crate::scalar::ln_sigmoid(-s) };
    ll - reg * T::of(0.5) * (dot(pu, pu) + dot(qi, qi) + bu * bu + bi * bi)
}

/// Gradient of [`pair_objective`]: `(∂pu, ∂qi, ∂bu, ∂bi)`.
pub(crate) fn pair_gradient<T: Scalar>(pu: &[T], qi: &[T], bu: T, bi: T, label: bool, reg: T) -> (Vec<T>, Vec<T>, T, T) {
    let s = dot(pu, qi) + bu + bi;
    let y = if label { T::one() } else { T::zero() };
    let g = y - sigmoid(s);
    let dp = pu.iter().zip(qi).map(|(&p, &q)| g * q - reg * p).collect();
    let dq = pu.iter().zip(qi).map(|(&p, &q)| g * p - reg * q).collect();
    (dp, dq, g - reg * bu, g - reg * bi)
}

impl<T: Scalar> LogisticMf<T> {
    pub fn new(cfg: LogisticMfConfig) -> Self {
        LogisticMf { cfg, state: None }
    }

    /// Interaction probability for a pair.
    pub fn probability(&self, u: UserIdx, i: ItemIdx) -> Result<T, ModelError> {
        self.score(u, i).map(sigmoid)
    }
}

impl<T: Scalar> RankingScorer<T> for LogisticMf<T> {
    fn name(&self) -> &str {
        "logistic_mf"
    }

    fn fit(&mut self, train: &ImplicitDataset) -> Result<(), ModelError> {
        non_empty(train)?;
        let c = self.cfg;
        if c.factors == 0 || c.lr <= 0.0 || c.reg < 0.0 {
            return Err(ModelError::Config(format!("bad logistic MF settings {c:?}")));
        }
        let f = c.factors;
        let by_user = train.by_user();
        let (nu, ni) = (by_user.len(), train.item_capacity());
        let normal = Normal::new(0.0, c.init_std).map_err(|e| ModelError::Config(e.to_string()))?;
        let mut init = rng::stream(c.seed, rng::INIT);
        let mut p: Vec<T> = (0..nu * f).map(|_| T::of(normal.sample(&mut init))).collect();
        let mut q: Vec<T> = (0..ni * f).map(|_| T::of(normal.sample(&mut init))).collect();
        let mut bu = vec![T::zero(); nu];
        let mut bi = vec![T::zero(); ni];
        let mut order: Vec<(UserIdx, ItemIdx)> = train.positives().to_vec();
        let mut shuffle = rng::stream(c.seed, rng::ORDER);
        let mut sampler = rng::stream(c.seed, rng::SAMPLE);
        let (lr, reg) = (T::of(c.lr), T::of(c.reg));
        let mut ops = 0u64;

        let mut step = |u: usize, i: usize, label: bool, p: &mut [T], q: &mut [T], bu: &mut [T], bi: &mut [T]| {
            let (dp, dq, dbu, dbi) = pair_gradient(&p[u * f..(u + 1) * f], &q[i * f..(i + 1) * f], bu[u], bi[i], label, reg);
            for k in 0..f {
                p[u * f + k] += lr * dp[k];
                q[i * f + k] += lr * dq[k];
            }
            bu[u] += lr * dbu;
            bi[i] += lr * dbi;
            ops += 8 * f as u64 + 10;
        };
        for _ in 0..c.epochs {
            order.shuffle(&mut shuffle);
            for &(u, i) in &order {
                let u = u as usize;
                step(u, i as usize, true, &mut p, &mut q, &mut bu, &mut bi);
                let seen = &by_user[u];
                if seen.len() >= ni {
                    continue;
                }
                for _ in 0..c.negatives {
                    let j = loop {
                        let j = sampler.random_range(0..ni as ItemIdx);
                        if seen.binary_search(&j).is_err() {
                            break j;
                        }
                    };
                    step(u, j as usize, false, &mut p, &mut q, &mut bu, &mut bi);
                }
            }
        }
        self.state = Some(LmfState { p, q, bu, bi, ops });
        Ok(())
    }

    fn score(&self, u: UserIdx, i: ItemIdx) -> Result<T, ModelError> {
        let s = self.state.as_ref().ok_or(ModelError::NotFitted)?;
        let f = self.cfg.factors;
        let (u, i) = (u as usize, i as usize);
        let Some(&b_i) = s.bi.get(i) else {
            return Ok(T::zero());
        };
        Ok(match s.p.get(u * f..(u + 1) * f) {
            Some(pu) => dot(pu, &s.q[i * f..(i + 1) * f]) + s.bu[u] + b_i,
            None => b_i,
        })
    }

    fn ops(&self) -> u64 {
        self.state.as_ref().map_or(0, |s| s.ops)
    }

    fn score_ops(&self) -> u64 {
        self.state.as_ref().map_or(0, |s| (s.q.len() * 2) as u64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ranking::testutil::implicit;

    #[test]
    fn gradient_matches_finite_differences() {
        let h = 1e-6;
        let f = 4;
        for seed in 0..20u64 {
            let mut r = rng::stream(seed, 7);
            let flat: Vec<f64> = (0..2 * f + 2).map(|_| r.random_range(-1.5..1.5)).collect();
            let label = seed % 2 == 0;
            let reg = 0.05;
            let obj = |v: &[f64]| pair_objective(&v[..f], &v[f..2 * f], v[2 * f], v[2 * f + 1], label, reg);
            let (dp, dq, dbu, dbi) = pair_gradient(&flat[..f], &flat[f..2 * f], flat[2 * f], flat[2 * f + 1], label, reg);
            let analytic: Vec<f64> = dp.into_iter().chain(dq).chain([dbu, dbi]).collect();
            for k in 0..flat.len() {
                let (mut hi, mut lo) = (flat.clone(), flat.clone());
                hi[k] += h;
                lo[k] -= h;
                let numeric = (obj(&hi) - obj(&lo)) / (2.0 * h);
                let rel = (numeric - analytic[k]).abs() / analytic[k].abs().max(1e-3);
                assert!(rel < 1e-4, "seed {seed} coord {k}: {numeric} vs {}", analytic[k]);
            }
        }
    }

    #[test]
    fn probabilities_are_open_unit_interval() {
        let d = implicit(&[("u", "a"), ("u", "b"), ("v", "b"), ("w", "c"), ("w", "a")]);
        let mut m = LogisticMf::<f64>::new(LogisticMfConfig { factors: 3, epochs: 50, reg: 0.01, negatives: 1, ..Default::default() });
        m.fit(&d).unwrap();
        for u in 0..3 {
            for i in 0..3 {
                let pr = m.probability(u, i).unwrap();
                assert!(pr > 0.0 && pr < 1.0);
            }
        }
        // observed pairs end up likelier than the unobserved one for `v`
        assert!(m.probability(1, 1).unwrap() > m.probability(1, 2).unwrap());
    }
}
