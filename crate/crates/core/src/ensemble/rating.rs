use super::{average, normalize_weights, weighted, wrap_base, EnsembleSpec, MetaParams, Pipeline, Strategy};
use crate::data::{Dataset, ItemIdx, UserIdx};
use crate::error::ModelError;
use crate::linalg::{least_squares, nnls};
use crate::rating::{RatingModelConfig, RatingPredictor};
use crate::scalar::{clamp, Scalar};
use crate::split::{global_random_split, SplitConfig};

#[derive(Debug, Clone)]
enum Combiner<T> {
    Mean,
    /// `intercept + Σ w_m p_m`; with a zero intercept this is [`weighted`].
    Linear { weights: Vec<T>, intercept: Option<T> },
}

/// Rating-pipeline ensemble over boxed base predictors.
pub struct RatingEnsemble<T> {
    name: String,
    strategy: Strategy,
    names: Vec<String>,
    bases: Vec<Box<dyn RatingPredictor<T>>>,
    fixed_weights: Option<Vec<f64>>,
    meta: MetaParams,
    state: Option<(Combiner<T>, T, T)>,
    ops: u64,
}

impl<T: Scalar> RatingEnsemble<T> {
    /// Wraps already-constructed bases; their order must match `spec.base_models`.
    pub fn new(spec: &EnsembleSpec, bases: Vec<Box<dyn RatingPredictor<T>>>) -> Result<Self, ModelError> {
        spec.validate()?;
        if spec.pipeline != Pipeline::Rating {
            return Err(ModelError::Config("not a rating ensemble".into()));
        }
        if bases.len() != spec.base_models.len() {
            return Err(ModelError::Config(format!(
                "{} bases supplied for {} names",
                bases.len(),
                spec.base_models.len()
            )));
        }
        Ok(RatingEnsemble {
            name: spec.name(),
            strategy: spec.strategy,
            names: spec.base_models.clone(),
            bases,
            fixed_weights: spec.weights.clone(),
            meta: spec.meta_params,
            state: None,
            ops: 0,
        })
    }

    /// Builds every base with its default hyperparameters and `seed`.
    pub fn from_spec(spec: &EnsembleSpec, seed: u64) -> Result<Self, ModelError> {
        let bases = spec
            .base_models
            .iter()
            .map(|n| {
                RatingModelConfig::default_for(n, seed)
                    .map(|c| c.build::<T>())
                    .ok_or_else(|| ModelError::Config(format!("unknown rating model `{n}`")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(spec, bases)
    }

    pub fn base_names(&self) -> &[String] {
        &self.names
    }

    /// Fitted combination weights (uniform for plain averaging).
    pub fn weights(&self) -> Option<Vec<f64>> {
        let (c, _, _) = self.state.as_ref()?;
        Some(match c {
            Combiner::Mean => vec![1.0 / self.bases.len() as f64; self.bases.len()],
            Combiner::Linear { weights, .. } => weights.iter().map(|w| w.as_f64()).collect(),
        })
    }

    /// Stacking intercept, if the meta-learner has one.
    pub fn intercept(&self) -> Option<f64> {
        match self.state.as_ref()? {
            (Combiner::Linear { intercept: Some(b), .. }, _, _) => Some(b.as_f64()),
            _ => None,
        }
    }

    fn fit_bases(&mut self, train: &Dataset) -> Result<(), ModelError> {
        for (name, b) in self.names.iter().zip(self.bases.iter_mut()) {
            b.fit(train).map_err(wrap_base(name))?;
            self.ops += b.ops();
        }
        Ok(())
    }

    fn base_predictions(&self, u: UserIdx, i: ItemIdx) -> Result<Vec<T>, ModelError> {
        self.names
            .iter()
            .zip(&self.bases)
            .map(|(n, b)| b.predict(u, i).map_err(wrap_base(n)))
            .collect()
    }

    /// Fits bases on an internal holdout and returns `(meta-features, targets)`.
    fn holdout_features(&mut self, train: &Dataset) -> Result<(Vec<T>, Vec<T>), ModelError> {
        let cfg = SplitConfig {
            train_fraction: self.meta.holdout_train_fraction,
            seed: self.meta.seed,
            ..SplitConfig::global(self.meta.seed)
        };
        let split = global_random_split(train, &cfg)
            .map_err(|e| ModelError::Precondition(format!("cannot carve a validation holdout: {e}")))?;
        self.fit_bases(&split.train)?;
        let mut x = Vec::with_capacity(split.test.len() * self.bases.len());
        let mut y = Vec::with_capacity(split.test.len());
        for r in split.test.interactions() {
            x.extend(self.base_predictions(r.user, r.item)?);
            y.push(T::of(r.rating));
        }
        let m = self.bases.len() as u64;
        self.ops += split.test.len() as u64 * self.bases.iter().map(|b| b.predict_ops()).sum::<u64>() + x.len() as u64 * m;
        Ok((x, y))
    }
}

impl<T: Scalar> RatingPredictor<T> for RatingEnsemble<T> {
    fn name(&self) -> &str {
        &self.name
    }

    fn fit(&mut self, train: &Dataset) -> Result<(), ModelError> {
        self.ops = 0;
        self.state = None;
        let m = self.bases.len();
        let combiner = match (self.strategy, &self.fixed_weights) {
            (Strategy::Weighted, Some(w)) => Combiner::Linear {
                weights: w.iter().map(|&v| T::of(v)).collect(),
                intercept: None,
            },
            (Strategy::Weighted, None) => {
                let (x, y) = self.holdout_features(train)?;
                Combiner::Linear {
                    weights: normalize_weights(&nnls(&x, &y, m)),
                    intercept: None,
                }
            }
            (Strategy::Stacking, _) => {
                let (x, y) = self.holdout_features(train)?;
                let with_bias: Vec<T> = x.chunks_exact(m).flat_map(|row| std::iter::once(T::one()).chain(row.iter().copied())).collect();
                match least_squares(&with_bias, &y, m + 1) {
                    Some(w) => Combiner::Linear {
                        weights: w[1..].to_vec(),
                        intercept: Some(w[0]),
                    },
                    None => {
                        log::warn!("{}: singular meta-features, falling back to uniform averaging", self.name);
                        Combiner::Mean
                    }
                }
            }
            _ => Combiner::Mean,
        };
        self.fit_bases(train)?;
        let scale = train.scale();
        self.state = Some((combiner, T::of(scale.min), T::of(scale.max)));
        Ok(())
    }

    fn predict(&self, u: UserIdx, i: ItemIdx) -> Result<T, ModelError> {
        let (c, lo, hi) = self.state.as_ref().ok_or(ModelError::NotFitted)?;
        let p = self.base_predictions(u, i)?;
        let v = match c {
            Combiner::Mean => average(&p),
            Combiner::Linear { weights, intercept: None } => weighted(&p, weights),
            Combiner::Linear {
                weights,
                intercept: Some(b),
            } => *b + p.iter().zip(weights).map(|(&x, &w)| x * w).sum::<T>(),
        };
        Ok(clamp(v, *lo, *hi))
    }

    fn ops(&self) -> u64 {
        self.ops
    }

    fn predict_ops(&self) -> u64 {
        self.bases.iter().map(|b| b.predict_ops()).sum::<u64>() + 2 * self.bases.len() as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticConfig};
    use crate::rating::testutil::toy;
    use crate::rating::{GlobalMean, KnnBaseline, KnnBaselineConfig};

    /// Predicts a fixed value everywhere.
    struct Constant(f64, bool);

    impl RatingPredictor<f64> for Constant {
        fn name(&self) -> &str {
            "constant"
        }
        fn fit(&mut self, _: &Dataset) -> Result<(), ModelError> {
            self.1 = true;
            Ok(())
        }
        fn predict(&self, _: UserIdx, _: ItemIdx) -> Result<f64, ModelError> {
            Ok(self.0)
        }
        fn ops(&self) -> u64 {
            1
        }
    }

    fn spec(strategy: Strategy, n: usize) -> EnsembleSpec {
        EnsembleSpec {
            base_models: (0..n).map(|i| format!("c{i}")).collect(),
            ..EnsembleSpec::new(Pipeline::Rating, strategy)
        }
    }

    fn consts(vals: &[f64]) -> Vec<Box<dyn RatingPredictor<f64>>> {
        vals.iter().map(|&v| Box::new(Constant(v, false)) as Box<dyn RatingPredictor<f64>>).collect()
    }

    #[test]
    fn average_of_constants() {
        let d = toy(&[("a", "x", 1.0), ("b", "y", 5.0)]);
        let mut e = RatingEnsemble::new(&spec(Strategy::Average, 3), consts(&[3.0, 4.0, 5.0])).unwrap();
        e.fit(&d).unwrap();
        assert_eq!(e.predict(0, 0).unwrap(), 4.0);
        let mut agree = RatingEnsemble::new(&spec(Strategy::TopPerformers, 2), consts(&[2.2, 2.2])).unwrap();
        agree.fit(&d).unwrap();
        assert_eq!(agree.predict(0, 1).unwrap(), 2.2);
    }

    #[test]
    fn fixed_weights() {
        let d = toy(&[("a", "x", 1.0), ("b", "y", 5.0)]);
        let mut s = spec(Strategy::Weighted, 2);
        s.weights = Some(vec![0.25, 0.75]);
        let mut e = RatingEnsemble::new(&s, consts(&[2.0, 4.0])).unwrap();
        e.fit(&d).unwrap();
        assert_eq!(e.predict(0, 0).unwrap(), 3.5);
        s.weights = Some(vec![1.0, 0.0]);
        let mut first = RatingEnsemble::new(&s, consts(&[2.0, 4.0])).unwrap();
        first.fit(&d).unwrap();
        assert_eq!(first.predict(1, 1).unwrap(), 2.0);
    }

    #[test]
    fn learned_weights_are_a_distribution() {
        let d = generate_synthetic(&SyntheticConfig::default()).unwrap();
        let s = EnsembleSpec {
            base_models: vec!["global_mean".into(), "bias_baseline".into()],
            ..EnsembleSpec::new(Pipeline::Rating, Strategy::Weighted)
        };
        let mut e = RatingEnsemble::<f64>::from_spec(&s, 0).unwrap();
        e.fit(&d).unwrap();
        let w = e.weights().unwrap();
        assert!(w.iter().all(|x| *x >= 0.0));
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        // the personalised base explains more of the holdout
        assert!(w[1] > w[0], "{w:?}");
    }

    /// Knows every rating of a reference dataset; ignores its training data.
    struct Oracle(std::collections::HashMap<(UserIdx, ItemIdx), f64>);

    impl RatingPredictor<f64> for Oracle {
        fn name(&self) -> &str {
            "oracle"
        }
        fn fit(&mut self, _: &Dataset) -> Result<(), ModelError> {
            Ok(())
        }
        fn predict(&self, u: UserIdx, i: ItemIdx) -> Result<f64, ModelError> {
            Ok(self.0.get(&(u, i)).copied().unwrap_or(3.0))
        }
        fn ops(&self) -> u64 {
            0
        }
    }

    #[test]
    fn stacking_recovers_identity_on_exact_data() {
        let d = generate_synthetic(&SyntheticConfig::default()).unwrap();
        let truth = d.interactions().iter().map(|r| ((r.user, r.item), r.rating)).collect();
        let mut e = RatingEnsemble::new(&spec(Strategy::Stacking, 1), vec![Box::new(Oracle(truth))]).unwrap();
        e.fit(&d).unwrap();
        assert!(e.intercept().unwrap().abs() < 1e-6);
        assert!((e.weights().unwrap()[0] - 1.0).abs() < 1e-6);
        for r in d.interactions().iter().take(50) {
            assert!((e.predict(r.user, r.item).unwrap() - r.rating).abs() < 1e-6);
        }
    }

    #[test]
    fn constant_base_falls_back_to_mean() {
        let d = generate_synthetic(&SyntheticConfig::default()).unwrap();
        let s = EnsembleSpec {
            base_models: vec!["global_mean".into()],
            ..EnsembleSpec::new(Pipeline::Rating, Strategy::Stacking)
        };
        let mut e = RatingEnsemble::<f64>::from_spec(&s, 0).unwrap();
        // one constant base: the design matrix [1, μ] is singular
        e.fit(&d).unwrap();
        assert!(e.intercept().is_none());
        let mut g = GlobalMean::<f64>::new();
        g.fit(&d).unwrap();
        assert_eq!(e.predict(0, 0).unwrap(), g.predict(0, 0).unwrap());
    }

    #[test]
    fn stacking_meta_weights_apply_directly() {
        let mut e = RatingEnsemble::new(&spec(Strategy::Stacking, 2), consts(&[2.0, 4.0])).unwrap();
        e.state = Some((
            Combiner::Linear {
                weights: vec![0.5, 0.5],
                intercept: Some(0.0),
            },
            1.0,
            5.0,
        ));
        assert_eq!(e.predict(0, 0).unwrap(), 3.0);
    }

    #[test]
    fn collinear_meta_features_fall_back() {
        // Two constant bases (2 and 4) against targets that are all 3.0:
        // any (w0, w1, w2) with w0 + 2w1 + 4w2 = 3 fits, but the columns are
        // collinear with the intercept, so this must fall back.
        let d = toy(&[("a", "x", 3.0), ("b", "y", 3.0), ("c", "z", 3.0), ("d", "x", 3.0)]);
        let mut e = RatingEnsemble::new(&spec(Strategy::Stacking, 2), consts(&[2.0, 4.0])).unwrap();
        e.fit(&d).unwrap();
        assert_eq!(e.predict(0, 0).unwrap(), 3.0);
        assert_eq!(e.weights().unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn base_failure_fails_the_ensemble() {
        let d = generate_synthetic(&SyntheticConfig::default()).unwrap();
        let tiny = KnnBaseline::<f64>::new(KnnBaselineConfig {
            memory_budget: 16,
            ..Default::default()
        });
        let bases: Vec<Box<dyn RatingPredictor<f64>>> = vec![Box::new(GlobalMean::new()), Box::new(tiny)];
        let s = EnsembleSpec {
            base_models: vec!["global_mean".into(), "knn_baseline".into()],
            ..EnsembleSpec::new(Pipeline::Rating, Strategy::Average)
        };
        let mut e = RatingEnsemble::new(&s, bases).unwrap();
        let err = e.fit(&d).unwrap_err();
        assert_eq!(err.reason(), "capacity");
        assert!(matches!(&err, ModelError::Base { model, .. } if model == "knn_baseline"));
        assert!(matches!(e.predict(0, 0), Err(ModelError::NotFitted)));
    }
}
