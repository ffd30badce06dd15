use super::{non_empty, RankingScorer};
use crate::data::{ImplicitDataset, ItemIdx, UserIdx};
use crate::error::ModelError;
use crate::rng::hash_unit;
use crate::scalar::Scalar;

/// Uniform noise per `(user, item)`, reproducible from the seed.
#[derive(Debug, Clone)]
pub struct RandomScorer {
    seed: u64,
    fitted: bool,
}

impl RandomScorer {
    pub fn new(seed: u64) -> Self {
        RandomScorer { seed, fitted: false }
    }
}

impl<T: Scalar> RankingScorer<T> for RandomScorer {
    fn name(&self) -> &str {
        "random"
    }

    fn fit(&mut self, train: &ImplicitDataset) -> Result<(), ModelError> {
        non_empty(train)?;
        self.fitted = true;
        Ok(())
    }

    fn score(&self, u: UserIdx, i: ItemIdx) -> Result<T, ModelError> {
        if !self.fitted {
            return Err(ModelError::NotFitted);
        }
        Ok(T::of(hash_unit(self.seed, u as u64, i as u64)))
    }

    fn ops(&self) -> u64 {
        0
    }

    fn score_ops(&self) -> u64 {
        0
    }
}

/// Scores every item by its training positive count.
#[derive(Debug, Clone, Default)]
pub struct PopularScorer {
    counts: Option<Vec<usize>>,
}

impl PopularScorer {
    pub fn new() -> Self {
        Self::default()
    }
}

impl<T: Scalar> RankingScorer<T> for PopularScorer {
    fn name(&self) -> &str {
        "popular"
    }

    fn fit(&mut self, train: &ImplicitDataset) -> Result<(), ModelError> {
        non_empty(train)?;
        self.counts = Some(train.item_counts());
        Ok(())
    }

    fn score(&self, _u: UserIdx, i: ItemIdx) -> Result<T, ModelError> {
        let c = self.counts.as_ref().ok_or(ModelError::NotFitted)?;
        Ok(T::of_usize(c.get(i as usize).copied().unwrap_or(0)))
    }

    fn ops(&self) -> u64 {
        self.counts.as_ref().map_or(0, |c| c.iter().sum::<usize>() as u64)
    }

    fn score_ops(&self) -> u64 {
        0
    }
}

/// Keeps the jitter independent of [`RandomScorer`] under the same seed.
const JITTER_SALT: u64 = 0xA5A5_0F0F_5A5A_F0F0;

/// A constant per user (their activity level), so the order within a user's
/// list comes only from a small seeded jitter in `[0, 1)`.
#[derive(Debug, Clone)]
pub struct UserMeanScorer {
    seed: u64,
    activity: Option<Vec<usize>>,
}

impl UserMeanScorer {
    pub fn new(seed: u64) -> Self {
        UserMeanScorer { seed, activity: None }
    }
}

impl<T: Scalar> RankingScorer<T> for UserMeanScorer {
    fn name(&self) -> &str {
        "user_mean"
    }

    fn fit(&mut self, train: &ImplicitDataset) -> Result<(), ModelError> {
        non_empty(train)?;
        let mut a = vec![0; train.user_capacity()];
        for &(u, _) in train.positives() {
            a[u as usize] += 1;
        }
        self.activity = Some(a);
        Ok(())
    }

    fn score(&self, u: UserIdx, i: ItemIdx) -> Result<T, ModelError> {
        let a = self.activity.as_ref().ok_or(ModelError::NotFitted)?;
        let base = a.get(u as usize).copied().unwrap_or(0);
        Ok(T::of(base as f64 + hash_unit(self.seed ^ JITTER_SALT, u as u64, i as u64)))
    }

    fn ops(&self) -> u64 {
        self.activity.as_ref().map_or(0, |a| a.len() as u64)
    }

    fn score_ops(&self) -> u64 {
        0
    }
}
