use super::{min_max_normalize, normalize_weights, reciprocal_rank_fusion, weighted, wrap_base, EnsembleSpec, MetaParams, Pipeline, Strategy};
use crate::data::{ImplicitDataset, ItemIdx, UserIdx};
use crate::error::ModelError;
use crate::ranking::{evaluate, RankingEval, RankingModelConfig, RankingScorer};
use crate::scalar::Scalar;
use crate::split::{per_user_split, SplitConfig};

#[derive(Debug, Clone)]
struct State<T> {
    weights: Vec<T>,
    seen: Vec<Vec<ItemIdx>>,
    n_items: usize,
}

/// Ranking-pipeline ensemble. Scores are combined per user over the candidate
/// items only (everything the user has not interacted with in training);
/// training items score `-inf`.
pub struct RankingEnsemble<T> {
    name: String,
    strategy: Strategy,
    names: Vec<String>,
    bases: Vec<Box<dyn RankingScorer<T>>>,
    fixed_weights: Option<Vec<f64>>,
    meta: MetaParams,
    eval: RankingEval,
    state: Option<State<T>>,
    ops: u64,
}

impl<T: Scalar> RankingEnsemble<T> {
    pub fn new(spec: &EnsembleSpec, bases: Vec<Box<dyn RankingScorer<T>>>) -> Result<Self, ModelError> {
        spec.validate()?;
        if spec.pipeline != Pipeline::Ranking {
            return Err(ModelError::Config("not a ranking ensemble".into()));
        }
        if bases.len() != spec.base_models.len() {
            return Err(ModelError::Config(format!(
                "{} bases supplied for {} names",
                bases.len(),
                spec.base_models.len()
            )));
        }
        Ok(RankingEnsemble {
            name: spec.name(),
            strategy: spec.strategy,
            names: spec.base_models.clone(),
            bases,
            fixed_weights: spec.weights.clone(),
            meta: spec.meta_params,
            eval: RankingEval::default(),
            state: None,
            ops: 0,
        })
    }

    pub fn from_spec(spec: &EnsembleSpec, seed: u64) -> Result<Self, ModelError> {
        let bases = spec
            .base_models
            .iter()
            .map(|n| {
                RankingModelConfig::default_for(n, seed)
                    .map(|c| c.build::<T>())
                    .ok_or_else(|| ModelError::Config(format!("unknown ranking model `{n}`")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(spec, bases)
    }

    /// Evaluation settings used when learning weights from validation NDCG.
    pub fn with_eval(mut self, eval: RankingEval) -> Self {
        self.eval = eval;
        self
    }

    pub fn base_names(&self) -> &[String] {
        &self.names
    }

    pub fn weights(&self) -> Option<Vec<f64>> {
        self.state.as_ref().map(|s| s.weights.iter().map(|w| w.as_f64()).collect())
    }

    fn fit_bases(&mut self, train: &ImplicitDataset) -> Result<(), ModelError> {
        for (name, b) in self.names.iter().zip(self.bases.iter_mut()) {
            b.fit(train).map_err(wrap_base(name))?;
            self.ops += b.ops();
        }
        Ok(())
    }

    /// Per-base validation NDCG on an internal per-user holdout.
    fn validation_ndcg(&mut self, train: &ImplicitDataset) -> Result<Vec<T>, ModelError> {
        let cfg = SplitConfig {
            train_fraction: self.meta.holdout_train_fraction,
            ..SplitConfig::per_user(self.meta.seed, 2, 1)
        };
        let split = per_user_split(train, &cfg)
            .map_err(|e| ModelError::Precondition(format!("cannot carve a validation holdout: {e}")))?;
        self.fit_bases(&split.train)?;
        let mut out = Vec::with_capacity(self.bases.len());
        for (name, b) in self.names.iter().zip(&self.bases) {
            let rep = evaluate(b.as_ref(), &split.train, &split.test, &self.eval).map_err(wrap_base(name))?;
            self.ops += rep.users.len() as u64 * b.score_ops();
            out.push(rep.scores.ndcg);
        }
        Ok(out)
    }
}

impl<T: Scalar> RankingScorer<T> for RankingEnsemble<T> {
    fn name(&self) -> &str {
        &self.name
    }

    fn fit(&mut self, train: &ImplicitDataset) -> Result<(), ModelError> {
        self.ops = 0;
        self.state = None;
        let m = self.bases.len();
        let weights = match (self.strategy, &self.fixed_weights) {
            (Strategy::Weighted, Some(w)) => w.iter().map(|&v| T::of(v)).collect(),
            (Strategy::Weighted, None) => normalize_weights(&self.validation_ndcg(train)?),
            _ => vec![T::one() / T::of_usize(m); m],
        };
        self.fit_bases(train)?;
        self.state = Some(State {
            weights,
            seen: train.by_user(),
            n_items: train.item_capacity(),
        });
        Ok(())
    }

    fn score(&self, u: UserIdx, i: ItemIdx) -> Result<T, ModelError> {
        let s = self.state.as_ref().ok_or(ModelError::NotFitted)?;
        let mut all = vec![T::zero(); s.n_items.max(i as usize + 1)];
        self.score_all(u, &mut all)?;
        Ok(all[i as usize])
    }

    fn score_all(&self, u: UserIdx, out: &mut [T]) -> Result<(), ModelError> {
        let s = self.state.as_ref().ok_or(ModelError::NotFitted)?;
        let empty = Vec::new();
        let seen = s.seen.get(u as usize).unwrap_or(&empty);
        let candidates: Vec<usize> = (0..out.len()).filter(|i| seen.binary_search(&(*i as ItemIdx)).is_err()).collect();

        let mut per_base: Vec<Vec<T>> = Vec::with_capacity(self.bases.len());
        let mut buf = vec![T::zero(); out.len()];
        for (name, b) in self.names.iter().zip(&self.bases) {
            b.score_all(u, &mut buf).map_err(wrap_base(name))?;
            per_base.push(candidates.iter().map(|&i| buf[i]).collect());
        }
        let combined: Vec<T> = if self.strategy == Strategy::RankFusion {
            reciprocal_rank_fusion(&per_base, T::of(self.meta.rrf_c))
        } else {
            per_base.iter_mut().for_each(|v| min_max_normalize(v));
            let mut row = vec![T::zero(); per_base.len()];
            (0..candidates.len())
                .map(|c| {
                    for (r, v) in row.iter_mut().zip(&per_base) {
                        *r = v[c];
                    }
                    weighted(&row, &s.weights)
                })
                .collect()
        };
        out.iter_mut().for_each(|o| *o = T::neg_infinity());
        for (&i, v) in candidates.iter().zip(combined) {
            out[i] = v;
        }
        Ok(())
    }

    fn ops(&self) -> u64 {
        self.ops
    }

    fn score_ops(&self) -> u64 {
        let n = self.state.as_ref().map_or(0, |s| s.n_items) as u64;
        self.bases.iter().map(|b| b.score_ops()).sum::<u64>() + 4 * n * self.bases.len() as u64
    }
}
