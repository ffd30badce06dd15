use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{fitted, RatingPredictor, TrainView};
use crate::data::{Dataset, ItemIdx, UserIdx};
use crate::error::ModelError;
use crate::rng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoClusteringConfig {
    pub user_clusters: usize,
    pub item_clusters: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for CoClusteringConfig {
    fn default() -> Self {
        CoClusteringConfig {
            user_clusters: 3,
            item_clusters: 3,
            epochs: 20,
            seed: 0,
        }
    }
}

/// Co-clustering: `A_gh + (μ_u − A_g) + (μ_i − A_h)` where `g`, `h` are the
/// user and item clusters and `A` are cluster / co-cluster means.
#[derive(Debug, Clone)]
pub struct CoClustering<T> {
    cfg: CoClusteringConfig,
    state: Option<CoState<T>>,
}

#[derive(Debug, Clone)]
struct CoState<T> {
    lo: T,
    hi: T,
    mu: T,
    user_mean: Vec<Option<T>>,
    item_mean: Vec<Option<T>>,
    cu: Vec<usize>,
    ci: Vec<usize>,
    avg_u: Vec<T>,
    avg_i: Vec<T>,
    avg_co: Vec<T>,
    ops: u64,
}

struct Averages<T> {
    u: Vec<T>,
    i: Vec<T>,
    co: Vec<T>,
}

fn averages<T: Scalar>(v: &TrainView<T>, cu: &[usize], ci: &[usize], g: usize, h: usize) -> Averages<T> {
    let mut su = vec![(T::zero(), 0usize); g];
    let mut si = vec![(T::zero(), 0usize); h];
    let mut sc = vec![(T::zero(), 0usize); g * h];
    for (u, i, r) in v.triples() {
        let (a, b) = (cu[u as usize], ci[i as usize]);
        for slot in [&mut su[a], &mut si[b], &mut sc[a * h + b]] {
            slot.0 += r;
            slot.1 += 1;
        }
    }
    let mean = |(s, n): &(T, usize)| if *n > 0 { *s / T::of_usize(*n) } else { v.mu };
    Averages {
        u: su.iter().map(mean).collect(),
        i: si.iter().map(mean).collect(),
        co: sc.iter().map(mean).collect(),
    }
}

fn argmin<T: Scalar>(errs: &[T]) -> usize {
    let mut best = 0;
    for (k, e) in errs.iter().enumerate() {
        if *e < errs[best] {
            best = k;
        }
    }
    best
}

impl<T: Scalar> CoClustering<T> {
    pub fn new(cfg: CoClusteringConfig) -> Self {
        CoClustering { cfg, state: None }
    }

    /// Cluster assignment of `(user, item)` after fitting.
    pub fn clusters(&self, u: UserIdx, i: ItemIdx) -> Option<(usize, usize)> {
        let s = self.state.as_ref()?;
        Some((*s.cu.get(u as usize)?, *s.ci.get(i as usize)?))
    }
}

impl<T: Scalar> RatingPredictor<T> for CoClustering<T> {
    fn name(&self) -> &str {
        "co_clustering"
    }

    fn fit(&mut self, train: &Dataset) -> Result<(), ModelError> {
        let c = self.cfg;
        let (g, h) = (c.user_clusters, c.item_clusters);
        if g == 0 || h == 0 {
            return Err(ModelError::Config("cluster counts must be positive".into()));
        }
        let v = TrainView::<T>::new(train)?;
        let (n_users, n_items) = (train.n_users(), train.n_items());
        if g > n_users || h > n_items {
            return Err(ModelError::Config(format!(
                "{g}×{h} clusters exceed {n_users} users / {n_items} items"
            )));
        }
        let mean = |row: &Vec<(u32, T)>| {
            (!row.is_empty()).then(|| row.iter().map(|x| x.1).sum::<T>() / T::of_usize(row.len()))
        };
        let user_mean: Vec<Option<T>> = v.by_user.iter().map(mean).collect();
        let item_mean: Vec<Option<T>> = v.by_item.iter().map(mean).collect();
        let um = |u: usize| user_mean[u].unwrap_or(v.mu);
        let im = |i: usize| item_mean[i].unwrap_or(v.mu);

        let mut init = rng::stream(c.seed, rng::INIT);
        let mut cu: Vec<usize> = (0..v.by_user.len()).map(|_| init.random_range(0..g)).collect();
        let mut ci: Vec<usize> = (0..v.by_item.len()).map(|_| init.random_range(0..h)).collect();

        for _ in 0..c.epochs {
            let a = averages(&v, &cu, &ci, g, h);
            let mut errs = vec![T::zero(); g.max(h)];
            for (u, row) in v.by_user.iter().enumerate() {
                if row.is_empty() {
                    continue;
                }
                for (gc, e) in errs[..g].iter_mut().enumerate() {
                    *e = row
                        .iter()
                        .map(|&(i, r)| {
                            let hc = ci[i as usize];
                            let est = a.co[gc * h + hc] + um(u) - a.u[gc] + im(i as usize) - a.i[hc];
                            (r - est) * (r - est)
                        })
                        .sum();
                }
                cu[u] = argmin(&errs[..g]);
            }
            for (i, col) in v.by_item.iter().enumerate() {
                if col.is_empty() {
                    continue;
                }
                for (hc, e) in errs[..h].iter_mut().enumerate() {
                    *e = col
                        .iter()
                        .map(|&(u, r)| {
                            let gc = cu[u as usize];
                            let est = a.co[gc * h + hc] + um(u as usize) - a.u[gc] + im(i) - a.i[hc];
                            (r - est) * (r - est)
                        })
                        .sum();
                }
                ci[i] = argmin(&errs[..h]);
            }
        }
        let a = averages(&v, &cu, &ci, g, h);
        self.state = Some(CoState {
            lo: v.lo,
            hi: v.hi,
            mu: v.mu,
            user_mean,
            item_mean,
            cu,
            ci,
            avg_u: a.u,
            avg_i: a.i,
            avg_co: a.co,
            ops: (c.epochs as u64 + 1) * v.n as u64 * (3 + 6 * (g + h) as u64),
        });
        Ok(())
    }

    fn predict(&self, u: UserIdx, i: ItemIdx) -> Result<T, ModelError> {
        let s = fitted(&self.state)?;
        let um = s.user_mean.get(u as usize).copied().flatten();
        let im = s.item_mean.get(i as usize).copied().flatten();
        let h = self.cfg.item_clusters;
        let est = match (um, im) {
            (Some(mu_u), Some(mu_i)) => {
                let (g, k) = (s.cu[u as usize], s.ci[i as usize]);
                s.avg_co[g * h + k] + (mu_u - s.avg_u[g]) + (mu_i - s.avg_i[k])
            }
            (Some(mu_u), None) => mu_u,
            (None, Some(mu_i)) => mu_i,
            (None, None) => s.mu,
        };
        Ok(crate::scalar::clamp(est, s.lo, s.hi))
    }

    fn ops(&self) -> u64 {
        self.state.as_ref().map_or(0, |s| s.ops)
    }

    fn predict_ops(&self) -> u64 {
        6
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rating::testutil::toy;

    #[test]
    fn one_by_one_reduces_to_mean_offsets() {
        let d = toy(&[("a", "x", 4.0), ("a", "y", 2.0), ("b", "x", 3.0)]);
        let mut m = CoClustering::<f64>::new(CoClusteringConfig {
            user_clusters: 1,
            item_clusters: 1,
            ..Default::default()
        });
        m.fit(&d).unwrap();
        let mu = 3.0;
        let (a, b) = (d.users().get("a").unwrap(), d.users().get("b").unwrap());
        let (x, y) = (d.items().get("x").unwrap(), d.items().get("y").unwrap());
        // user means a=3, b=3; item means x=3.5, y=2
        assert!((m.predict(b, y).unwrap() - (mu + (3.0 - mu) + (2.0 - mu))).abs() < 1e-12);
        assert!((m.predict(a, x).unwrap() - (mu + (3.0 - mu) + (3.5 - mu))).abs() < 1e-12);
    }

    #[test]
    fn block_structure_is_recovered_exactly() {
        let mut t = Vec::new();
        for u in 0..6 {
            for i in 0..6 {
                let same = (u < 3) == (i < 3);
                t.push((format!("u{u}"), format!("i{i}"), if same { 5.0 } else { 1.0 }));
            }
        }
        let d = toy(&t.iter().map(|(u, i, r)| (u.as_str(), i.as_str(), *r)).collect::<Vec<_>>());
        let mut m = CoClustering::<f64>::new(CoClusteringConfig {
            user_clusters: 2,
            item_clusters: 2,
            ..Default::default()
        });
        m.fit(&d).unwrap();
        for x in d.interactions() {
            assert!((m.predict(x.user, x.item).unwrap() - x.rating).abs() < 1e-12);
        }
    }

    #[test]
    fn too_many_clusters_is_an_error() {
        let d = toy(&[("a", "x", 4.0), ("b", "x", 3.0)]);
        let mut m = CoClustering::<f64>::new(CoClusteringConfig::default());
        assert!(matches!(m.fit(&d), Err(ModelError::Config(_))));
    }
}
