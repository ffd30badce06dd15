use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{fitted, RatingPredictor, TrainView};
use crate::data::{Dataset, ItemIdx, UserIdx};
use crate::error::ModelError;
use crate::rng;
use crate::scalar::{dot, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NmfConfig {
    pub factors: usize,
    pub epochs: usize,
    pub reg_user: f64,
    pub reg_item: f64,
    pub init_low: f64,
    pub init_high: f64,
    pub seed: u64,
}

impl Default for NmfConfig {
    fn default() -> Self {
        NmfConfig {
            factors: 15,
            epochs: 50,
            reg_user: 0.06,
            reg_item: 0.06,
            init_low: 0.0,
            init_high: 1.0,
            seed: 0,
        }
    }
}

type Observer = fn(&[f64], &[f64]);

/// Non-negative factorisation `p_u · q_i` with multiplicative updates.
#[derive(Debug, Clone)]
pub struct Nmf<T> {
    cfg: NmfConfig,
    state: Option<NmfState<T>>,
    observer: Option<Observer>,
}

#[derive(Debug, Clone)]
struct NmfState<T> {
    lo: T,
    hi: T,
    mu: T,
    p: Vec<T>,
    q: Vec<T>,
    known_u: Vec<bool>,
    known_i: Vec<bool>,
    ops: u64,
}

impl<T: Scalar> Nmf<T> {
    pub fn new(cfg: NmfConfig) -> Self {
        Nmf {
            cfg,
            state: None,
            observer: None,
        }
    }

    /// Hook called with `(P, Q)` after every epoch; used to probe invariants.
    pub fn observe_epochs(mut self, f: fn(&[f64], &[f64])) -> Self {
        self.observer = Some(f);
        self
    }

    pub fn factors(&self) -> Option<(&[T], &[T])> {
        self.state.as_ref().map(|s| (s.p.as_slice(), s.q.as_slice()))
    }
}

impl<T: Scalar> RatingPredictor<T> for Nmf<T> {
    fn name(&self) -> &str {
        "nmf"
    }

    fn fit(&mut self, train: &Dataset) -> Result<(), ModelError> {
        let c = self.cfg;
        if c.factors == 0 || c.init_low < 0.0 || c.init_high <= c.init_low {
            return Err(ModelError::Config(format!("bad NMF settings {c:?}")));
        }
        if train.interactions().iter().any(|x| x.rating < 0.0) {
            return Err(ModelError::Precondition("NMF requires non-negative ratings".into()));
        }
        let v = TrainView::<T>::new(train)?;
        let (nu, ni, f) = (v.by_user.len(), v.by_item.len(), c.factors);
        let mut init = rng::stream(c.seed, rng::INIT);
        let mut draw = |n: usize| -> Vec<T> {
            (0..n).map(|_| T::of(init.random_range(c.init_low..c.init_high))).collect()
        };
        let mut p = draw(nu * f);
        let mut q = draw(ni * f);
        let (reg_u, reg_i) = (T::of(c.reg_user), T::of(c.reg_item));
        let tiny = T::min_positive_value();

        let mut un = vec![T::zero(); nu * f];
        let mut ud = vec![T::zero(); nu * f];
        let mut inum = vec![T::zero(); ni * f];
        let mut id = vec![T::zero(); ni * f];
        for _ in 0..c.epochs {
            for buf in [&mut un, &mut ud, &mut inum, &mut id] {
                buf.iter_mut().for_each(|x| *x = T::zero());
            }
            for (u, i, r) in v.triples() {
                let (u, i) = (u as usize, i as usize);
                let pu = &p[u * f..(u + 1) * f];
                let qi = &q[i * f..(i + 1) * f];
                let est = dot(pu, qi);
                for k in 0..f {
                    un[u * f + k] += qi[k] * r;
                    ud[u * f + k] += qi[k] * est;
                    inum[i * f + k] += pu[k] * r;
                    id[i * f + k] += pu[k] * est;
                }
            }
            for (u, row) in v.by_user.iter().enumerate() {
                let n = T::of_usize(row.len());
                for k in 0..f {
                    let j = u * f + k;
                    let denom = ud[j] + n * reg_u * p[j];
                    if denom > tiny {
                        p[j] *= un[j] / denom;
                    }
                }
            }
            for (i, col) in v.by_item.iter().enumerate() {
                let n = T::of_usize(col.len());
                for k in 0..f {
                    let j = i * f + k;
                    let denom = id[j] + n * reg_i * q[j];
                    if denom > tiny {
                        q[j] *= inum[j] / denom;
                    }
                }
            }
            if let Some(obs) = self.observer {
                let pf: Vec<f64> = p.iter().map(|x| x.as_f64()).collect();
                let qf: Vec<f64> = q.iter().map(|x| x.as_f64()).collect();
                obs(&pf, &qf);
            }
        }
        self.state = Some(NmfState {
            lo: v.lo,
            hi: v.hi,
            mu: v.mu,
            p,
            q,
            known_u: v.by_user.iter().map(|r| !r.is_empty()).collect(),
            known_i: v.by_item.iter().map(|r| !r.is_empty()).collect(),
            ops: c.epochs as u64 * (v.n as u64 * (6 * f as u64 + 2) + ((nu + ni) * f * 4) as u64),
        });
        Ok(())
    }

    fn predict(&self, u: UserIdx, i: ItemIdx) -> Result<T, ModelError> {
        let s = fitted(&self.state)?;
        let (u, i) = (u as usize, i as usize);
        let f = self.cfg.factors;
        let known = s.known_u.get(u).copied().unwrap_or(false) && s.known_i.get(i).copied().unwrap_or(false);
        let est = if known {
            dot(&s.p[u * f..(u + 1) * f], &s.q[i * f..(i + 1) * f])
        } else {
            s.mu
        };
        Ok(crate::scalar::clamp(est, s.lo, s.hi))
    }

    fn ops(&self) -> u64 {
        self.state.as_ref().map_or(0, |s| s.ops)
    }

    fn predict_ops(&self) -> u64 {
        2 * self.cfg.factors as u64
    }
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicUsize, Ordering};

    use super::*;
    use crate::data::{generate_synthetic, SyntheticConfig};
    use crate::metrics::rmse;
    use crate::rating::predict_pairs;
    use crate::rating::testutil::toy;

    static EPOCHS_SEEN: AtomicUsize = AtomicUsize::new(0);

    fn assert_nonneg(p: &[f64], q: &[f64]) {
        assert!(p.iter().chain(q).all(|x| *x >= 0.0));
        EPOCHS_SEEN.fetch_add(1, Ordering::SeqCst);
    }

    #[test]
    fn factors_stay_nonnegative_every_epoch() {
        let d = generate_synthetic(&SyntheticConfig {
            seed: 5,
            noise_std: 1.0,
            ..Default::default()
        })
        .unwrap();
        let mut m = Nmf::<f64>::new(NmfConfig {
            epochs: 12,
            ..Default::default()
        })
        .observe_epochs(assert_nonneg);
        m.fit(&d).unwrap();
        assert_eq!(EPOCHS_SEEN.load(Ordering::SeqCst), 12);
    }

    #[test]
    fn rank_one_nonnegative_data_fits() {
        let d = generate_synthetic(&SyntheticConfig {
            latent_rank: 1,
            noise_std: 0.01,
            density: 0.6,
            ..Default::default()
        })
        .unwrap();
        let mut m = Nmf::<f64>::new(NmfConfig::default());
        m.fit(&d).unwrap();
        let e = rmse(&predict_pairs(&m, &d).unwrap()).unwrap();
        assert!(e < 0.15, "train rmse {e}");
    }

    #[test]
    fn rejects_negative_ratings() {
        let d = Dataset::from_triples(
            "neg",
            crate::data::RatingScale { min: -2.0, max: 2.0 },
            [("a", "x", -1.0), ("b", "x", 1.0)],
        );
        let mut m = Nmf::<f64>::new(NmfConfig::default());
        assert!(matches!(m.fit(&d), Err(ModelError::Precondition(_))));
        let ok = toy(&[("a", "x", 1.0)]);
        assert!(m.fit(&ok).is_ok());
        assert_eq!(m.predict(9, 9).unwrap(), 1.0);
    }
}
