use super::{check_capacity, fitted, RatingPredictor, TrainView, DEFAULT_MEMORY_BUDGET};
use crate::data::{Dataset, ItemIdx, UserIdx};
use crate::error::ModelError;
use crate::scalar::Scalar;

/// Slope One: `mean_j (r_uj + dev(i, j))` over the items `j` the user rated
/// that share at least one co-rater with `i`.
#[derive(Debug, Clone)]
pub struct SlopeOne<T> {
    budget: u64,
    state: Option<SlopeState<T>>,
}

#[derive(Debug, Clone)]
struct SlopeState<T> {
    lo: T,
    hi: T,
    mu: T,
    n: usize,
    /// Mean of `r_i − r_j` over co-raters, row-major `[i * n + j]`.
    dev: Vec<T>,
    freq: Vec<u32>,
    by_user: Vec<Vec<(ItemIdx, T)>>,
    user_mean: Vec<Option<T>>,
    ops: u64,
}

impl<T: Scalar> SlopeOne<T> {
    pub fn new() -> Self {
        Self::with_budget(DEFAULT_MEMORY_BUDGET)
    }

    pub fn with_budget(budget: u64) -> Self {
        SlopeOne { budget, state: None }
    }

    pub fn deviation(&self, i: ItemIdx, j: ItemIdx) -> Option<T> {
        let s = self.state.as_ref()?;
        let k = i as usize * s.n + j as usize;
        (s.freq.get(k).copied().unwrap_or(0) > 0).then(|| s.dev[k])
    }
}

impl<T: Scalar> Default for SlopeOne<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> RatingPredictor<T> for SlopeOne<T> {
    fn name(&self) -> &str {
        "slope_one"
    }

    fn fit(&mut self, train: &Dataset) -> Result<(), ModelError> {
        check_capacity::<T>(train.item_capacity(), self.budget)?;
        let v = TrainView::<T>::new(train)?;
        let n = v.by_item.len();
        let mut dev = vec![T::zero(); n * n];
        let mut freq = vec![0u32; n * n];
        let mut ops = 0u64;
        for row in &v.by_user {
            for &(i, ri) in row {
                for &(j, rj) in row {
                    let k = i as usize * n + j as usize;
                    dev[k] += ri - rj;
                    freq[k] += 1;
                }
            }
            ops += (row.len() * row.len()) as u64;
        }
        for (d, f) in dev.iter_mut().zip(&freq) {
            if *f > 0 {
                *d /= T::of_usize(*f as usize);
            }
        }
        let user_mean = v
            .by_user
            .iter()
            .map(|row| {
                (!row.is_empty()).then(|| row.iter().map(|x| x.1).sum::<T>() / T::of_usize(row.len()))
            })
            .collect();
        self.state = Some(SlopeState {
            lo: v.lo,
            hi: v.hi,
            mu: v.mu,
            n,
            dev,
            freq,
            user_mean,
            ops: ops + (n * n) as u64,
            by_user: v.by_user,
        });
        Ok(())
    }

    fn predict(&self, u: UserIdx, i: ItemIdx) -> Result<T, ModelError> {
        let s = fitted(&self.state)?;
        let Some(mean) = s.user_mean.get(u as usize).copied().flatten() else {
            return Ok(crate::scalar::clamp(s.mu, s.lo, s.hi));
        };
        let est = if (i as usize) < s.n {
            let base = i as usize * s.n;
            let (mut acc, mut cnt) = (T::zero(), 0usize);
            for &(j, r) in &s.by_user[u as usize] {
                let k = base + j as usize;
                if j != i && s.freq[k] > 0 {
                    acc += r + s.dev[k];
                    cnt += 1;
                }
            }
            if cnt > 0 {
                acc / T::of_usize(cnt)
            } else {
                mean
            }
        } else {
            mean
        };
        Ok(crate::scalar::clamp(est, s.lo, s.hi))
    }

    fn ops(&self) -> u64 {
        self.state.as_ref().map_or(0, |s| s.ops)
    }

    fn predict_ops(&self) -> u64 {
        self.state
            .as_ref()
            .map_or(1, |s| 2 * (s.by_user.iter().map(Vec::len).sum::<usize>() / s.by_user.len().max(1)) as u64 + 2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rating::testutil::toy;

    #[test]
    fn constant_offset_gives_unit_deviation() {
        // y is always rated one above x
        let d = toy(&[("a", "x", 2.0), ("a", "y", 3.0), ("b", "x", 3.0), ("b", "y", 4.0), ("c", "x", 1.0)]);
        let (x, y) = (d.items().get("x").unwrap(), d.items().get("y").unwrap());
        let c = d.users().get("c").unwrap();
        let mut m = SlopeOne::<f64>::new();
        m.fit(&d).unwrap();
        assert_eq!(m.deviation(y, x), Some(1.0));
        assert_eq!(m.deviation(x, y), Some(-1.0));
        assert_eq!(m.predict(c, y).unwrap(), 2.0);
    }

    #[test]
    fn fallbacks() {
        let d = toy(&[("a", "x", 2.0), ("b", "y", 4.0)]);
        let mut m = SlopeOne::<f64>::new();
        m.fit(&d).unwrap();
        let (a, y) = (d.users().get("a").unwrap(), d.items().get("y").unwrap());
        // no co-rated pair: user mean
        assert_eq!(m.predict(a, y).unwrap(), 2.0);
        // unknown user: global mean
        assert_eq!(m.predict(17, y).unwrap(), 3.0);
        let mut tight = SlopeOne::<f64>::with_budget(10);
        assert_eq!(tight.fit(&d).unwrap_err().reason(), "capacity");
    }
}
