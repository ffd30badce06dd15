use serde::{Deserialize, Serialize};

use super::{non_empty, RankingScorer};
use crate::data::{ImplicitDataset, ItemIdx, UserIdx};
use crate::error::ModelError;
use crate::rating::{check_capacity, DEFAULT_MEMORY_BUDGET};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KnnConfig {
    /// Neighbours summed per score.
    pub k: usize,
    /// Bytes the dense similarity matrix may use.
    pub memory_budget: u64,
}

impl Default for KnnConfig {
    fn default() -> Self {
        KnnConfig {
            k: 20,
            memory_budget: DEFAULT_MEMORY_BUDGET,
        }
    }
}

/// Dense cosine similarity between the binary rows of `rows` (each sorted),
/// with co-occurrences counted through `cols`. The diagonal is zero.
fn cosine<T: Scalar>(n: usize, rows: &[Vec<u32>], cols: &[Vec<u32>]) -> (Vec<T>, u64) {
    let mut co = vec![0u32; n * n];
    let mut ops = 0u64;
    for members in cols {
        for (a, &x) in members.iter().enumerate() {
            for &y in &members[..a] {
                co[x as usize * n + y as usize] += 1;
            }
        }
        ops += (members.len() * members.len() / 2) as u64;
    }
    let norm: Vec<f64> = rows.iter().map(|r| (r.len() as f64).sqrt()).collect();
    let mut sim = vec![T::zero(); n * n];
    for x in 0..n {
        for y in 0..x {
            let c = co[x * n + y];
            if c > 0 {
                let s = T::of(c as f64 / (norm[x] * norm[y]));
                sim[x * n + y] = s;
                sim[y * n + x] = s;
            }
        }
    }
    (sim, ops + (n * n) as u64)
}

/// Sum of the `k` largest values (all of them if fewer).
fn top_k_sum<T: Scalar>(vals: &mut [T], k: usize) -> T {
    if vals.len() > k && k > 0 {
        vals.select_nth_unstable_by(k - 1, |a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
        vals[..k].iter().copied().sum()
    } else if k == 0 {
        T::zero()
    } else {
        vals.iter().copied().sum()
    }
}

#[derive(Debug, Clone)]
struct KnnState<T> {
    n: usize,
    sim: Vec<T>,
    by_user: Vec<Vec<ItemIdx>>,
    by_item: Vec<Vec<UserIdx>>,
    ops: u64,
}

/// Item-based neighbourhood scorer: an item's score is the summed similarity
/// to the `k` most similar items in the user's history.
#[derive(Debug, Clone)]
pub struct ItemKnn<T> {
    cfg: KnnConfig,
    state: Option<KnnState<T>>,
}

impl<T: Scalar> ItemKnn<T> {
    pub fn new(cfg: KnnConfig) -> Self {
        ItemKnn { cfg, state: None }
    }

    pub fn similarity(&self, a: ItemIdx, b: ItemIdx) -> Option<T> {
        let s = self.state.as_ref()?;
        s.sim.get(a as usize * s.n + b as usize).copied()
    }
}

impl<T: Scalar> RankingScorer<T> for ItemKnn<T> {
    fn name(&self) -> &str {
        "item_knn"
    }

    fn fit(&mut self, train: &ImplicitDataset) -> Result<(), ModelError> {
        non_empty(train)?;
        let n = train.item_capacity();
        check_capacity::<T>(n, self.cfg.memory_budget)?;
        let by_user = train.by_user();
        let by_item = train.by_item();
        let (sim, ops) = cosine(n, &by_item, &by_user);
        self.state = Some(KnnState { n, sim, by_user, by_item, ops });
        Ok(())
    }

    fn score(&self, u: UserIdx, i: ItemIdx) -> Result<T, ModelError> {
        let s = self.state.as_ref().ok_or(ModelError::NotFitted)?;
        let (Some(seen), true) = (s.by_user.get(u as usize), (i as usize) < s.n) else {
            return Ok(T::zero());
        };
        let row = &s.sim[i as usize * s.n..(i as usize + 1) * s.n];
        let mut vals: Vec<T> = seen.iter().map(|&j| row[j as usize]).collect();
        Ok(top_k_sum(&mut vals, self.cfg.k))
    }

    fn score_all(&self, u: UserIdx, out: &mut [T]) -> Result<(), ModelError> {
        let s = self.state.as_ref().ok_or(ModelError::NotFitted)?;
        let empty = Vec::new();
        let seen = s.by_user.get(u as usize).unwrap_or(&empty);
        let mut vals = Vec::with_capacity(seen.len());
        for (i, o) in out.iter_mut().enumerate() {
            if i >= s.n {
                *o = T::zero();
                continue;
            }
            let row = &s.sim[i * s.n..(i + 1) * s.n];
            vals.clear();
            vals.extend(seen.iter().map(|&j| row[j as usize]));
            *o = top_k_sum(&mut vals, self.cfg.k);
        }
        Ok(())
    }

    fn ops(&self) -> u64 {
        self.state.as_ref().map_or(0, |s| s.ops)
    }

    fn score_ops(&self) -> u64 {
        self.state.as_ref().map_or(0, |s| {
            let mean = s.by_user.iter().map(Vec::len).sum::<usize>() / s.by_user.len().max(1);
            (s.n * mean * 2) as u64
        })
    }
}

/// User-based neighbourhood scorer: an item's score is the summed similarity
/// of the `k` most similar users who interacted with it.
#[derive(Debug, Clone)]
pub struct UserKnn<T> {
    cfg: KnnConfig,
    state: Option<KnnState<T>>,
}

impl<T: Scalar> UserKnn<T> {
    pub fn new(cfg: KnnConfig) -> Self {
        UserKnn { cfg, state: None }
    }

    pub fn similarity(&self, a: UserIdx, b: UserIdx) -> Option<T> {
        let s = self.state.as_ref()?;
        s.sim.get(a as usize * s.n + b as usize).copied()
    }
}

impl<T: Scalar> RankingScorer<T> for UserKnn<T> {
    fn name(&self) -> &str {
        "user_knn"
    }

    fn fit(&mut self, train: &ImplicitDataset) -> Result<(), ModelError> {
        non_empty(train)?;
        let n = train.user_capacity();
        check_capacity::<T>(n, self.cfg.memory_budget)?;
        let by_user = train.by_user();
        let by_item = train.by_item();
        let (sim, ops) = cosine(n, &by_user, &by_item);
        self.state = Some(KnnState { n, sim, by_user, by_item, ops });
        Ok(())
    }

    fn score(&self, u: UserIdx, i: ItemIdx) -> Result<T, ModelError> {
        let s = self.state.as_ref().ok_or(ModelError::NotFitted)?;
        let (Some(raters), true) = (s.by_item.get(i as usize), (u as usize) < s.n) else {
            return Ok(T::zero());
        };
        let row = &s.sim[u as usize * s.n..(u as usize + 1) * s.n];
        let mut vals: Vec<T> = raters.iter().map(|&v| row[v as usize]).collect();
        Ok(top_k_sum(&mut vals, self.cfg.k))
    }

    fn score_all(&self, u: UserIdx, out: &mut [T]) -> Result<(), ModelError> {
        let s = self.state.as_ref().ok_or(ModelError::NotFitted)?;
        if u as usize >= s.n {
            out.iter_mut().for_each(|o| *o = T::zero());
            return Ok(());
        }
        let row = &s.sim[u as usize * s.n..(u as usize + 1) * s.n];
        let empty = Vec::new();
        let mut vals = Vec::new();
        for (i, o) in out.iter_mut().enumerate() {
            let raters = s.by_item.get(i).unwrap_or(&empty);
            vals.clear();
            vals.extend(raters.iter().map(|&v| row[v as usize]));
            *o = top_k_sum(&mut vals, self.cfg.k);
        }
        Ok(())
    }

    fn ops(&self) -> u64 {
        self.state.as_ref().map_or(0, |s| s.ops)
    }

    fn score_ops(&self) -> u64 {
        self.state.as_ref().map_or(0, |s| 2 * s.by_item.iter().map(Vec::len).sum::<usize>() as u64)
    }
}
