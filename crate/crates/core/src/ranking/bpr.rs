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
pub struct BprConfig {
    pub factors: usize,
    pub epochs: usize,
    pub lr: f64,
    pub reg: f64,
    pub init_std: f64,
    pub seed: u64,
}

impl Default for BprConfig {
    fn default() -> Self {
        BprConfig {
            factors: 50,
            epochs: 30,
            lr: 0.05,
            reg: 0.01,
            init_std: 0.1,
            seed: 0,
        }
    }
}

/// Pairwise ranking factorisation `x_ui = p_u·q_i + b_i` trained by SGD on
/// sampled `(user, positive, negative)` triples.
#[derive(Debug, Clone)]
pub struct Bpr<T> {
    cfg: BprConfig,
    state: Option<BprState<T>>,
}

#[derive(Debug, Clone)]
struct BprState<T> {
    p: Vec<T>,
    q: Vec<T>,
    b: Vec<T>,
    ops: u64,
}

/// Regularised per-triple objective `ln σ(x_ui − x_uj) − reg/2 ‖θ‖²`.
#[cfg(test)]
pub(crate) fn triple_objective<T: Scalar>(pu: &[T], qi: &[T], qj: &[T], bi: T, bj: T, reg: T) -> T {
    let x = dot(pu, qi) - dot(pu, qj) + bi - bj;
    let norm = dot(pu, pu) + dot(qi, qi) + dot(qj, qj) + bi * bi + bj * bj;
    crate::scalar::ln_sigmoid(x) - reg * T::of(0.5) * norm
}

/// Gradient of [`triple_objective`]: `(∂pu, ∂qi, ∂qj, ∂bi, ∂bj)`.
pub(crate) fn triple_gradient<T: Scalar>(
    pu: &[T],
    qi: &[T],
    qj: &[T],
    bi: T,
    bj: T,
    reg: T,
) -> (Vec<T>, Vec<T>, Vec<T>, T, T) {
    let x = dot(pu, qi) - dot(pu, qj) + bi - bj;
    let g = sigmoid(-x);
    let f = pu.len();
    let mut dp = vec![T::zero(); f];
    let mut di = vec![T::zero(); f];
    let mut dj = vec![T::zero(); f];
    for k in 0..f {
        dp[k] = g * (qi[k] - qj[k]) - reg * pu[k];
        di[k] = g * pu[k] - reg * qi[k];
        dj[k] = -g * pu[k] - reg * qj[k];
    }
    (dp, di, dj, g - reg * bi, -g - reg * bj)
}

impl<T: Scalar> Bpr<T> {
    pub fn new(cfg: BprConfig) -> Self {
        Bpr { cfg, state: None }
    }
}

impl<T: Scalar> RankingScorer<T> for Bpr<T> {
    fn name(&self) -> &str {
        "bpr"
    }

    fn fit(&mut self, train: &ImplicitDataset) -> Result<(), ModelError> {
        non_empty(train)?;
        let c = self.cfg;
        if c.factors == 0 || c.lr <= 0.0 || c.reg < 0.0 {
            return Err(ModelError::Config(format!("bad BPR settings {c:?}")));
        }
        let f = c.factors;
        let by_user = train.by_user();
        let (nu, ni) = (by_user.len(), train.item_capacity());
        let normal = Normal::new(0.0, c.init_std).map_err(|e| ModelError::Config(e.to_string()))?;
        let mut init = rng::stream(c.seed, rng::INIT);
        let mut p: Vec<T> = (0..nu * f).map(|_| T::of(normal.sample(&mut init))).collect();
        let mut q: Vec<T> = (0..ni * f).map(|_| T::of(normal.sample(&mut init))).collect();
        let mut b = vec![T::zero(); ni];

        // Users whose positives cover the whole catalogue have no negatives.
        let pool: Vec<(UserIdx, ItemIdx)> = train
            .positives()
            .iter()
            .copied()
            .filter(|&(u, _)| by_user[u as usize].len() < ni)
            .collect();
        if pool.is_empty() {
            return Err(ModelError::Precondition("no user has a negative item to sample".into()));
        }
        let mut sampler = rng::stream(c.seed, rng::SAMPLE);
        let (lr, reg) = (T::of(c.lr), T::of(c.reg));
        let mut ops = 0u64;
        for _ in 0..c.epochs {
            for _ in 0..pool.len() {
                let (u, i) = pool[sampler.random_range(0..pool.len())];
                let seen = &by_user[u as usize];
                let j = loop {
                    let j = sampler.random_range(0..ni as ItemIdx);
                    if seen.binary_search(&j).is_err() {
                        break j;
                    }
                };
                let (u, i, j) = (u as usize, i as usize, j as usize);
                let pu = &p[u * f..(u + 1) * f];
                let (dp, di, dj, dbi, dbj) =
                    triple_gradient(pu, &q[i * f..(i + 1) * f], &q[j * f..(j + 1) * f], b[i], b[j], reg);
                for k in 0..f {
                    p[u * f + k] += lr * dp[k];
                    q[i * f + k] += lr * di[k];
                    q[j * f + k] += lr * dj[k];
                }
                b[i] += lr * dbi;
                b[j] += lr * dbj;
                ops += 12 * f as u64 + 10;
            }
        }
        self.state = Some(BprState { p, q, b, ops });
        Ok(())
    }

    fn score(&self, u: UserIdx, i: ItemIdx) -> Result<T, ModelError> {
        let s = self.state.as_ref().ok_or(ModelError::NotFitted)?;
        let f = self.cfg.factors;
        let (u, i) = (u as usize, i as usize);
        let Some(&bi) = s.b.get(i) else {
            return Ok(T::zero());
        };
        Ok(match s.p.get(u * f..(u + 1) * f) {
            Some(pu) => dot(pu, &s.q[i * f..(i + 1) * f]) + bi,
            None => bi,
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

    fn params(seed: u64, f: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>, f64, f64) {
        let mut r = rng::stream(seed, 7);
        let mut v = |n: usize| -> Vec<f64> { (0..n).map(|_| r.random_range(-1.0..1.0)).collect() };
        let (pu, qi, qj) = (v(f), v(f), v(f));
        let bs = v(2);
        (pu, qi, qj, bs[0], bs[1])
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let h = 1e-6;
        for seed in 0..20 {
            let f = 5;
            let (pu, qi, qj, bi, bj) = params(seed, f);
            let reg = 0.03;
            let (dp, di, dj, dbi, dbj) = triple_gradient(&pu, &qi, &qj, bi, bj, reg);
            let analytic: Vec<f64> = dp.iter().chain(&di).chain(&dj).copied().chain([dbi, dbj]).collect();
            let flat: Vec<f64> = pu.iter().chain(&qi).chain(&qj).copied().chain([bi, bj]).collect();
            let obj = |v: &[f64]| {
                triple_objective(&v[0..f], &v[f..2 * f], &v[2 * f..3 * f], v[3 * f], v[3 * f + 1], reg)
            };
            for k in 0..flat.len() {
                let mut hi = flat.clone();
                let mut lo = flat.clone();
                hi[k] += h;
                lo[k] -= h;
                let numeric = (obj(&hi) - obj(&lo)) / (2.0 * h);
                let rel = (numeric - analytic[k]).abs() / analytic[k].abs().max(1e-3);
                assert!(rel < 1e-4, "seed {seed} coord {k}: {numeric} vs {}", analytic[k]);
            }
        }
    }

    #[test]
    fn learns_the_liked_item() {
        let d = implicit(&[("u", "a"), ("v", "b"), ("w", "a")]);
        let mut m = Bpr::<f64>::new(BprConfig { factors: 4, epochs: 200, ..Default::default() });
        m.fit(&d).unwrap();
        let sa: f64 = m.score(0, 0).unwrap();
        let sb: f64 = m.score(0, 1).unwrap();
        assert!(sa > sb, "{sa} <= {sb}");
    }

    #[test]
    fn saturated_users_are_skipped() {
        // `u` likes everything and so is never sampled; `v` still trains.
        let d = implicit(&[("u", "a"), ("u", "b"), ("v", "a")]);
        let mut m = Bpr::<f64>::new(BprConfig { factors: 2, epochs: 5, ..Default::default() });
        m.fit(&d).unwrap();
        let all = implicit(&[("u", "a")]);
        assert!(matches!(m.fit(&all), Err(ModelError::Precondition(_))));
    }

    #[test]
    fn seeded_runs_match() {
        let d = implicit(&[("u", "a"), ("v", "b"), ("w", "a"), ("w", "c")]);
        let mut a = Bpr::<f32>::new(BprConfig { factors: 3, epochs: 10, ..Default::default() });
        let mut b = a.clone();
        a.fit(&d).unwrap();
        b.fit(&d).unwrap();
        for i in 0..3 {
            assert_eq!(a.score(2, i).unwrap(), b.score(2, i).unwrap());
        }
    }
}
