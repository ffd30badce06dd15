//! Biased matrix factorisation (SVD) and its implicit-feedback extension (SVD++),
//! both trained by SGD over a shuffled user-major visiting order.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{fitted, RatingPredictor, TrainView};
use crate::data::{Dataset, ItemIdx, UserIdx};
use crate::error::ModelError;
use crate::rng;
use crate::scalar::{dot, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvdConfig {
    pub factors: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub regularization: f64,
    pub init_mean: f64,
    pub init_std: f64,
    pub seed: u64,
}

impl Default for SvdConfig {
    fn default() -> Self {
        SvdConfig {
            factors: 100,
            epochs: 20,
            learning_rate: 0.005,
            regularization: 0.02,
            init_mean: 0.0,
            init_std: 0.1,
            seed: 0,
        }
    }
}

/// SVD++ settings. Defaults differ from [`SvdConfig`]: fewer factors and a
/// larger step, as in the reference library.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvdPpConfig {
    pub factors: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub regularization: f64,
    pub init_mean: f64,
    pub init_std: f64,
    pub seed: u64,
    /// Apply the implicit-factor updates once per user batch instead of after
    /// every rating. Same result up to rounding, far fewer operations.
    pub batched_implicit: bool,
}

impl Default for SvdPpConfig {
    fn default() -> Self {
        SvdPpConfig {
            factors: 20,
            epochs: 20,
            learning_rate: 0.007,
            regularization: 0.02,
            init_mean: 0.0,
            init_std: 0.1,
            seed: 0,
            batched_implicit: false,
        }
    }
}

impl SvdPpConfig {
    fn base(&self) -> SvdConfig {
        SvdConfig {
            factors: self.factors,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            regularization: self.regularization,
            init_mean: self.init_mean,
            init_std: self.init_std,
            seed: self.seed,
        }
    }
}

impl From<SvdConfig> for SvdPpConfig {
    fn from(c: SvdConfig) -> Self {
        SvdPpConfig {
            factors: c.factors,
            epochs: c.epochs,
            learning_rate: c.learning_rate,
            regularization: c.regularization,
            init_mean: c.init_mean,
            init_std: c.init_std,
            seed: c.seed,
            batched_implicit: false,
        }
    }
}

impl SvdConfig {
    fn validate(&self) -> Result<(), ModelError> {
        if self.factors == 0 {
            return Err(ModelError::Config("factors must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || self.regularization < 0.0 || self.init_std < 0.0 {
            return Err(ModelError::Config(format!("bad SGD settings {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Factors<T> {
    lo: T,
    hi: T,
    mu: T,
    bu: Vec<T>,
    bi: Vec<T>,
    /// Effective user vectors: `p_u` (SVD) or `p_u + |N(u)|^{-1/2} Σ y_j` (SVD++).
    z: Vec<T>,
    q: Vec<T>,
    y: Option<Vec<T>>,
    known_u: Vec<bool>,
    known_i: Vec<bool>,
    f: usize,
    ops: u64,
}

impl<T: Scalar> Factors<T> {
    fn predict(&self, u: UserIdx, i: ItemIdx) -> T {
        let (u, i) = (u as usize, i as usize);
        let ku = self.known_u.get(u).copied().unwrap_or(false);
        let ki = self.known_i.get(i).copied().unwrap_or(false);
        let mut est = self.mu;
        if ku {
            est += self.bu[u];
        }
        if ki {
            est += self.bi[i];
        }
        if ku && ki {
            let f = self.f;
            est += dot(&self.z[u * f..(u + 1) * f], &self.q[i * f..(i + 1) * f]);
        }
        crate::scalar::clamp(est, self.lo, self.hi)
    }
}

fn draw<T: Scalar>(rng: &mut impl rand::Rng, dist: &Normal<f64>, n: usize) -> Vec<T> {
    (0..n).map(|_| T::of(dist.sample(rng))).collect()
}

/// Which flavour of the factor model to train.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Implicit {
    None,
    /// Textbook SVD++: every `y_j`, `j ∈ N(u)`, is updated after each rating.
    Learned,
    /// Same updates, applied lazily per user batch.
    Batched,
    /// `Y ≡ 0` and never updated.
    Frozen,
}

fn train<T: Scalar>(v: &TrainView<T>, cfg: &SvdConfig, mode: Implicit) -> Result<Factors<T>, ModelError> {
    cfg.validate()?;
    let (nu, ni, f) = (v.by_user.len(), v.by_item.len(), cfg.factors);
    let dist = Normal::new(cfg.init_mean, cfg.init_std).map_err(|e| ModelError::Config(e.to_string()))?;
    let mut init = rng::stream(cfg.seed, rng::INIT);
    let mut p: Vec<T> = draw(&mut init, &dist, nu * f);
    let mut q: Vec<T> = draw(&mut init, &dist, ni * f);
    let mut y: Option<Vec<T>> = match mode {
        Implicit::None => None,
        Implicit::Learned | Implicit::Batched => Some(draw(&mut init, &dist, ni * f)),
        Implicit::Frozen => Some(vec![T::zero(); ni * f]),
    };
    let mut order = rng::stream(cfg.seed, rng::ORDER);

    let (lr, reg) = (T::of(cfg.learning_rate), T::of(cfg.regularization));
    let decay = T::one() - lr * reg;
    let mu = v.mu;
    let mut bu = vec![T::zero(); nu];
    let mut bi = vec![T::zero(); ni];
    let mut users: Vec<usize> = (0..nu).filter(|&u| !v.by_user[u].is_empty()).collect();
    let mut imp = vec![T::zero(); f];
    let mut s0 = vec![T::zero(); f];
    let mut shift = vec![T::zero(); f];
    let mut q_old = vec![T::zero(); f];
    let mut ops = 0u64;

    for _ in 0..cfg.epochs {
        users.shuffle(&mut order);
        for &u in &users {
            let mut row = v.by_user[u].clone();
            row.shuffle(&mut order);
            let n_u = row.len();
            let norm = T::one() / T::of_usize(n_u).sqrt();
            let nt = T::of_usize(n_u);
            // Every y_j with j ∈ N(u) receives the same update for each of u's
            // ratings, so y_j = a·y_j⁰ + shift holds throughout the batch.
            let mut a = T::one();
            let lazy = mode == Implicit::Batched || mode == Implicit::Frozen;
            if let (Some(y), true) = (&y, lazy) {
                s0.iter_mut().for_each(|s| *s = T::zero());
                for &(j, _) in &row {
                    let yj = &y[j as usize * f..(j as usize + 1) * f];
                    for k in 0..f {
                        s0[k] += yj[k];
                    }
                }
                shift.iter_mut().for_each(|s| *s = T::zero());
                ops += (n_u * f) as u64;
            }
            for &(i, r) in &row {
                let i = i as usize;
                let pu = &mut p[u * f..(u + 1) * f];
                let qi = &mut q[i * f..(i + 1) * f];
                if mode == Implicit::Learned {
                    let y = y.as_ref().expect("implicit factors");
                    imp.copy_from_slice(pu);
                    for &(j, _) in &row {
                        let yj = &y[j as usize * f..(j as usize + 1) * f];
                        for k in 0..f {
                            imp[k] += norm * yj[k];
                        }
                    }
                } else if lazy {
                    for k in 0..f {
                        imp[k] = pu[k] + norm * (a * s0[k] + nt * shift[k]);
                    }
                } else {
                    imp.copy_from_slice(pu);
                }
                let err = r - (mu + bu[u] + bi[i] + dot(qi, &imp));
                bu[u] = bu[u] + lr * (err - reg * bu[u]);
                bi[i] = bi[i] + lr * (err - reg * bi[i]);
                let batched = mode == Implicit::Batched;
                let g = lr * err * norm;
                for k in 0..f {
                    let (puf, qif) = (pu[k], qi[k]);
                    q_old[k] = qif;
                    pu[k] += lr * (err * qif - reg * puf);
                    qi[k] += lr * (err * imp[k] - reg * qif);
                    if batched {
                        shift[k] = decay * shift[k] + g * qif;
                    }
                }
                if batched {
                    a *= decay;
                }
                ops += (4 * f + 10) as u64;
                match mode {
                    Implicit::Learned => {
                        let y = y.as_mut().expect("implicit factors");
                        for &(j, _) in &row {
                            let yj = &mut y[j as usize * f..(j as usize + 1) * f];
                            for k in 0..f {
                                yj[k] += lr * (err * q_old[k] * norm - reg * yj[k]);
                            }
                        }
                        ops += (4 * n_u * f) as u64;
                    }
                    Implicit::Batched | Implicit::Frozen => ops += (3 * f) as u64,
                    Implicit::None => {}
                }
            }
            if let (Some(y), Implicit::Batched) = (&mut y, mode) {
                for &(j, _) in &row {
                    let yj = &mut y[j as usize * f..(j as usize + 1) * f];
                    for k in 0..f {
                        yj[k] = a * yj[k] + shift[k];
                    }
                }
                ops += (n_u * f) as u64;
            }
        }
    }

    // Fold the implicit term into the user vectors once training is done.
    let mut z = p;
    if let Some(y) = &y {
        for (u, row) in v.by_user.iter().enumerate() {
            if row.is_empty() {
                continue;
            }
            let norm = T::one() / T::of_usize(row.len()).sqrt();
            for &(j, _) in row {
                for k in 0..f {
                    z[u * f + k] += norm * y[j as usize * f + k];
                }
            }
        }
    }
    Ok(Factors {
        lo: v.lo,
        hi: v.hi,
        mu,
        bu,
        bi,
        z,
        q,
        y,
        known_u: v.by_user.iter().map(|r| !r.is_empty()).collect(),
        known_i: v.by_item.iter().map(|c| !c.is_empty()).collect(),
        f,
        ops,
    })
}

/// `μ + b_u + b_i + p_u · q_i`.
#[derive(Debug, Clone)]
pub struct Svd<T> {
    cfg: SvdConfig,
    state: Option<Factors<T>>,
}

impl<T: Scalar> Svd<T> {
    pub fn new(cfg: SvdConfig) -> Self {
        Svd { cfg, state: None }
    }

    /// Learned user bias, for inspection.
    pub fn user_bias(&self, u: UserIdx) -> Option<T> {
        self.state.as_ref().and_then(|s| s.bu.get(u as usize).copied())
    }
}

impl<T: Scalar> RatingPredictor<T> for Svd<T> {
    fn name(&self) -> &str {
        "svd"
    }

    fn fit(&mut self, train: &Dataset) -> Result<(), ModelError> {
        let v = TrainView::new(train)?;
        self.state = Some(self::train(&v, &self.cfg, Implicit::None)?);
        Ok(())
    }

    fn predict(&self, u: UserIdx, i: ItemIdx) -> Result<T, ModelError> {
        Ok(fitted(&self.state)?.predict(u, i))
    }

    fn ops(&self) -> u64 {
        self.state.as_ref().map_or(0, |s| s.ops)
    }

    fn predict_ops(&self) -> u64 {
        2 * self.cfg.factors as u64 + 4
    }
}

/// `μ + b_u + b_i + q_i · (p_u + |N(u)|^{-1/2} Σ_{j ∈ N(u)} y_j)`.
#[derive(Debug, Clone)]
pub struct SvdPp<T> {
    cfg: SvdPpConfig,
    freeze_implicit: bool,
    state: Option<Factors<T>>,
}

impl<T: Scalar> SvdPp<T> {
    pub fn new(cfg: SvdPpConfig) -> Self {
        SvdPp {
            cfg,
            freeze_implicit: false,
            state: None,
        }
    }

    /// Pins the implicit factors at zero, which reduces the model to SVD.
    pub fn freeze_implicit(mut self, on: bool) -> Self {
        self.freeze_implicit = on;
        self
    }

    pub fn implicit_factors(&self) -> Option<&[T]> {
        self.state.as_ref().and_then(|s| s.y.as_deref())
    }
}

impl<T: Scalar> RatingPredictor<T> for SvdPp<T> {
    fn name(&self) -> &str {
        "svdpp"
    }

    fn fit(&mut self, train: &Dataset) -> Result<(), ModelError> {
        let v = TrainView::new(train)?;
        let mode = if self.freeze_implicit {
            Implicit::Frozen
        } else if self.cfg.batched_implicit {
            Implicit::Batched
        } else {
            Implicit::Learned
        };
        self.state = Some(self::train(&v, &self.cfg.base(), mode)?);
        Ok(())
    }

    fn predict(&self, u: UserIdx, i: ItemIdx) -> Result<T, ModelError> {
        Ok(fitted(&self.state)?.predict(u, i))
    }

    fn ops(&self) -> u64 {
        self.state.as_ref().map_or(0, |s| s.ops)
    }

    fn predict_ops(&self) -> u64 {
        2 * self.cfg.factors as u64 + 4
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticConfig};
    use crate::metrics::rmse;
    use crate::rating::predict_pairs;
    use crate::rating::testutil::toy;

    fn small() -> SvdConfig {
        SvdConfig {
            factors: 8,
            epochs: 30,
            ..Default::default()
        }
    }

    /// Reference SVD++ with the textbook per-rating update of every `y_j`,
    /// used to check the batched implicit-factor update.
    fn naive_svdpp(v: &TrainView<f64>, cfg: &SvdConfig) -> Vec<f64> {
        let (nu, ni, f) = (v.by_user.len(), v.by_item.len(), cfg.factors);
        let dist = Normal::new(cfg.init_mean, cfg.init_std).unwrap();
        let mut init = rng::stream(cfg.seed, rng::INIT);
        let mut p: Vec<f64> = draw(&mut init, &dist, nu * f);
        let mut q: Vec<f64> = draw(&mut init, &dist, ni * f);
        let mut y: Vec<f64> = draw(&mut init, &dist, ni * f);
        let mut order = rng::stream(cfg.seed, rng::ORDER);
        let (lr, reg, mu) = (cfg.learning_rate, cfg.regularization, v.mu);
        let (mut bu, mut bi) = (vec![0.0; nu], vec![0.0; ni]);
        let mut users: Vec<usize> = (0..nu).filter(|&u| !v.by_user[u].is_empty()).collect();
        for _ in 0..cfg.epochs {
            users.shuffle(&mut order);
            for &u in &users {
                let mut row = v.by_user[u].clone();
                row.shuffle(&mut order);
                let norm = 1.0 / (row.len() as f64).sqrt();
                for &(i, r) in &row {
                    let i = i as usize;
                    let imp: Vec<f64> = (0..f)
                        .map(|k| p[u * f + k] + norm * row.iter().map(|&(j, _)| y[j as usize * f + k]).sum::<f64>())
                        .collect();
                    let est = mu + bu[u] + bi[i] + (0..f).map(|k| q[i * f + k] * imp[k]).sum::<f64>();
                    let err = r - est;
                    bu[u] += lr * (err - reg * bu[u]);
                    bi[i] += lr * (err - reg * bi[i]);
                    for k in 0..f {
                        let (puf, qif) = (p[u * f + k], q[i * f + k]);
                        p[u * f + k] += lr * (err * qif - reg * puf);
                        q[i * f + k] += lr * (err * imp[k] - reg * qif);
                        for &(j, _) in &row {
                            let yj = &mut y[j as usize * f + k];
                            *yj += lr * (err * qif * norm - reg * *yj);
                        }
                    }
                }
            }
        }
        y
    }

    #[test]
    fn batched_implicit_update_matches_naive() {
        let d = generate_synthetic(&SyntheticConfig::default()).unwrap();
        let cfg = SvdConfig {
            factors: 4,
            epochs: 3,
            learning_rate: 0.01,
            ..Default::default()
        };
        let v = TrainView::<f64>::new(&d).unwrap();
        let slow = naive_svdpp(&v, &cfg);
        for mode in [Implicit::Learned, Implicit::Batched] {
            let y = train(&v, &cfg, mode).unwrap().y.unwrap();
            let worst = y.iter().zip(&slow).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(worst < 1e-10, "{mode:?}: max |Δy| = {worst}");
        }
    }

    #[test]
    fn frozen_svdpp_equals_svd_exactly() {
        let d = generate_synthetic(&SyntheticConfig::default()).unwrap();
        let mut a = Svd::<f64>::new(small());
        let mut b = SvdPp::<f64>::new(small().into()).freeze_implicit(true);
        a.fit(&d).unwrap();
        b.fit(&d).unwrap();
        for u in 0..50 {
            for i in 0..40 {
                assert_eq!(a.predict(u, i).unwrap(), b.predict(u, i).unwrap());
            }
        }
        assert!(b.implicit_factors().unwrap().iter().all(|y| *y == 0.0));
    }

    #[test]
    fn rank_one_data_is_fit_closely() {
        let d = generate_synthetic(&SyntheticConfig {
            latent_rank: 1,
            noise_std: 0.01,
            density: 0.6,
            ..Default::default()
        })
        .unwrap();
        let mut m = Svd::<f64>::new(SvdConfig {
            factors: 10,
            epochs: 200,
            learning_rate: 0.01,
            ..Default::default()
        });
        m.fit(&d).unwrap();
        let e = rmse(&predict_pairs(&m, &d).unwrap()).unwrap();
        assert!(e < 0.1, "train rmse {e}");
    }

    #[test]
    fn constant_ratings_predict_constant() {
        let triples: Vec<(String, String, f64)> = (0..10)
            .flat_map(|u| (0..6).map(move |i| (format!("u{u}"), format!("i{i}"), 3.0)))
            .collect();
        let d = toy(&triples.iter().map(|(u, i, r)| (u.as_str(), i.as_str(), *r)).collect::<Vec<_>>());
        let cfg = SvdConfig {
            epochs: 200,
            learning_rate: 0.01,
            ..small()
        };
        for model in [
            Box::new(Svd::<f64>::new(cfg)) as Box<dyn RatingPredictor<f64>>,
            Box::new(SvdPp::<f64>::new(cfg.into())),
        ] {
            let mut m = model;
            m.fit(&d).unwrap();
            for u in 0..10 {
                let p = m.predict(u, 2).unwrap();
                assert!((p - 3.0).abs() < 0.05, "{} {p}", m.name());
            }
        }
    }

    #[test]
    fn same_seed_bit_identical_and_f32_works() {
        let d = generate_synthetic(&SyntheticConfig::default()).unwrap();
        let mut a = SvdPp::<f64>::new(small().into());
        let mut b = SvdPp::<f64>::new(SvdPpConfig {
            batched_implicit: true,
            ..small().into()
        });
        a.fit(&d).unwrap();
        b.fit(&d).unwrap();
        let mut a2 = SvdPp::<f64>::new(small().into());
        a2.fit(&d).unwrap();
        assert_eq!(a.implicit_factors(), a2.implicit_factors());
        // batched and per-rating agree to rounding but the batched path is cheaper
        let gap = a.implicit_factors().unwrap().iter().zip(b.implicit_factors().unwrap()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(gap < 1e-10);
        assert!(b.ops() < a.ops());
        let mut c = Svd::<f32>::new(small());
        c.fit(&d).unwrap();
        let x = c.predict(1, 1).unwrap();
        assert!((1.0..=5.0).contains(&x));
        let mut plain = Svd::<f64>::new(small());
        plain.fit(&d).unwrap();
        assert!(a.ops() > plain.ops());
    }

    #[test]
    fn unknown_ids_fall_back_to_biases() {
        let d = toy(&[("a", "x", 5.0), ("b", "x", 3.0), ("a", "y", 4.0)]);
        let mut m = Svd::<f64>::new(small());
        m.fit(&d).unwrap();
        let mu = 4.0;
        assert_eq!(m.predict(50, 50).unwrap(), mu);
        assert!(matches!(Svd::<f64>::new(small()).predict(0, 0), Err(ModelError::NotFitted)));
        assert!(Svd::<f64>::new(SvdConfig { factors: 0, ..small() }).fit(&d).is_err());
    }
}
