//! Experiment configuration (JSON) and model resolution.

use std::path::{Path, PathBuf};

use greenrec::data::{ColumnMapping, RatingScale};
use greenrec::ensemble::{EnsembleSpec, Pipeline, Strategy};
use greenrec::ranking::{RankingEval, RankingModelConfig, RANKING_MODEL_NAMES};
use greenrec::rating::{RatingModelConfig, RATING_MODEL_NAMES};
use greenrec::split::SplitConfig;
use greenrec_energy::{MeterKind, MeterSettings, GERMANY_G_PER_KWH};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub name: String,
    pub path: PathBuf,
    pub mapping: ColumnMapping,
    pub scale: RatingScale,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            name: "ml-100k".into(),
            path: PathBuf::from("data/ml-100k/ml-100k.inter"),
            mapping: ColumnMapping::default(),
            scale: RatingScale { min: 1.0, max: 5.0 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvConfig {
    pub enabled: bool,
    pub k: usize,
    /// Ranking pipeline: share of each user's training rows held out per fold.
    pub user_holdout: f64,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            enabled: false,
            k: 5,
            user_holdout: 0.2,
        }
    }
}

/// Meter plus the simulated-throughput knob used by mock meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeterConfig {
    #[serde(flatten)]
    pub settings: MeterSettings,
    /// Mock meters run on simulated time: each arithmetic operation a model
    /// reports costs `1 / ops_per_second` seconds.
    #[serde(default = "default_ops_per_second")]
    pub ops_per_second: f64,
}

fn default_ops_per_second() -> f64 {
    1e9
}

impl Default for MeterConfig {
    fn default() -> Self {
        MeterConfig {
            settings: MeterSettings::default(),
            ops_per_second: default_ops_per_second(),
        }
    }
}

impl MeterConfig {
    pub fn simulated(&self) -> bool {
        self.settings.kind != MeterKind::ShellyGen2
    }
}

/// Idle-power gate checked before a metered suite starts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IdleCheck {
    pub duration_s: f64,
    pub expected_w: f64,
    pub band_w: f64,
}

impl Default for IdleCheck {
    fn default() -> Self {
        IdleCheck {
            duration_s: 600.0,
            expected_w: 71.2,
            band_w: 5.0,
        }
    }
}

/// A model list entry: a bare name, or an object with `"model"` plus any
/// hyperparameters to override (and an optional `"label"`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelEntry {
    Name(String),
    Spec(Map<String, Value>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub pipeline: Pipeline,
    /// Defaults to a global 80/20 split (rating) or a per-user split with at
    /// least 10 ratings per user (ranking), seeded by `seed`.
    pub split: Option<SplitConfig>,
    pub cv: CvConfig,
    /// Rating threshold for implicit conversion; the scale default when unset.
    pub implicit_threshold: Option<f64>,
    pub ranking: RankingEval,
    /// Empty means the full suite for the pipeline.
    pub models: Vec<ModelEntry>,
    /// `null` disables energy measurement.
    pub meter: Option<MeterConfig>,
    pub idle_check: Option<IdleCheck>,
    pub emission_factor_g_per_kwh: f64,
    pub plausibility_factor: f64,
    pub out_dir: PathBuf,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetConfig::default(),
            pipeline: Pipeline::Rating,
            split: None,
            cv: CvConfig::default(),
            implicit_threshold: None,
            ranking: RankingEval::default(),
            models: Vec::new(),
            meter: Some(MeterConfig::default()),
            idle_check: None,
            emission_factor_g_per_kwh: GERMANY_G_PER_KWH,
            plausibility_factor: 5.0,
            out_dir: PathBuf::from("results"),
            seed: 0,
        }
    }
}

/// Models of the full suite for a pipeline: singles first, then ensembles.
pub fn suite_names(pipeline: Pipeline) -> Vec<String> {
    let (singles, strategies): (&[&str], &[Strategy]) = match pipeline {
        Pipeline::Rating => (
            &RATING_MODEL_NAMES,
            &[Strategy::Average, Strategy::Weighted, Strategy::Stacking, Strategy::TopPerformers],
        ),
        Pipeline::Ranking => (
            &RANKING_MODEL_NAMES,
            &[Strategy::Average, Strategy::Weighted, Strategy::RankFusion, Strategy::TopPerformers],
        ),
    };
    singles
        .iter()
        .map(|s| s.to_string())
        .chain(strategies.iter().map(|s| format!("ensemble_{}", s.as_str())))
        .collect()
}

/// A fully specified model, ready to instantiate.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelKind {
    Rating(RatingModelConfig),
    Ranking(RankingModelConfig),
    RatingEnsemble(EnsembleSpec, Vec<RatingModelConfig>),
    RankingEnsemble(EnsembleSpec, Vec<RankingModelConfig>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedModel {
    pub label: String,
    pub kind: ModelKind,
}

impl ResolvedModel {
    pub fn is_ensemble(&self) -> bool {
        matches!(self.kind, ModelKind::RatingEnsemble(..) | ModelKind::RankingEnsemble(..))
    }
}

fn config_err(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

/// Overlays `overrides` on the default hyperparameters of `name`.
fn single<C>(name: &str, defaults: Option<C>, overrides: &Map<String, Value>) -> Result<C, HarnessError>
where
    C: Serialize + serde::de::DeserializeOwned,
{
    let d = defaults.ok_or_else(|| config_err(format!("unknown model `{name}`")))?;
    let mut v = serde_json::to_value(d).expect("model configs serialize");
    let obj = v.as_object_mut().expect("tagged config is an object");
    for (k, x) in overrides {
        if k != "label" {
            obj.insert(k.clone(), x.clone());
        }
    }
    serde_json::from_value(v).map_err(|e| config_err(format!("model `{name}`: {e}")))
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(HarnessError::io(path))?;
        serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))
    }

    pub fn effective_split(&self) -> SplitConfig {
        self.split.unwrap_or(match self.pipeline {
            Pipeline::Rating => SplitConfig::global(self.seed),
            Pipeline::Ranking => SplitConfig::per_user(self.seed, 10, 2),
        })
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.dataset.mapping.validate()?;
        self.dataset.scale.validate()?;
        if self.dataset.name.is_empty() || self.dataset.name.contains(['/', '\t']) {
            return Err(config_err(format!("bad dataset name `{}`", self.dataset.name)));
        }
        self.effective_split().validate()?;
        if self.cv.enabled && self.cv.k < 2 {
            return Err(config_err(format!("cv.k = {} must be at least 2", self.cv.k)));
        }
        if !(self.emission_factor_g_per_kwh > 0.0) {
            return Err(config_err("emission factor must be positive"));
        }
        if !(self.plausibility_factor > 1.0) {
            return Err(config_err("plausibility factor must exceed 1"));
        }
        if self.ranking.k == 0 {
            return Err(config_err("ranking cut-off k must be positive"));
        }
        if let Some(m) = &self.meter {
            m.settings.validate()?;
            if !(m.ops_per_second > 0.0) {
                return Err(config_err("ops_per_second must be positive"));
            }
        }
        self.resolve_models().map(|_| ())
    }

    fn entry_parts(&self, e: &ModelEntry) -> Result<(String, Map<String, Value>), HarnessError> {
        match e {
            ModelEntry::Name(n) => Ok((n.clone(), Map::new())),
            ModelEntry::Spec(m) => {
                let name = m
                    .get("model")
                    .and_then(Value::as_str)
                    .ok_or_else(|| config_err("model entry lacks a `model` name"))?;
                Ok((name.to_owned(), m.clone()))
            }
        }
    }

    /// Single-model entry named `name` (by label or model), if configured.
    fn configured_single(&self, name: &str) -> Result<Option<Map<String, Value>>, HarnessError> {
        for e in &self.models {
            let (model, m) = self.entry_parts(e)?;
            let label = m.get("label").and_then(Value::as_str).unwrap_or(&model);
            if label == name && !model.starts_with("ensemble") {
                let mut m = m;
                m.insert("model".into(), Value::String(model));
                return Ok(Some(m));
            }
        }
        Ok(None)
    }

    fn resolve_single(&self, name: &str, overrides: &Map<String, Value>) -> Result<ModelKind, HarnessError> {
        Ok(match self.pipeline {
            Pipeline::Rating => ModelKind::Rating(single(name, RatingModelConfig::default_for(name, self.seed), overrides)?),
            Pipeline::Ranking => ModelKind::Ranking(single(name, RankingModelConfig::default_for(name, self.seed), overrides)?),
        })
    }

    fn resolve_ensemble(&self, name: &str, m: &Map<String, Value>) -> Result<ModelKind, HarnessError> {
        let strategy = match (m.get("strategy"), name.strip_prefix("ensemble_")) {
            (Some(s), _) => s.clone(),
            (None, Some(suffix)) => Value::String(suffix.to_owned()),
            (None, None) => return Err(config_err(format!("ensemble `{name}` needs a strategy"))),
        };
        let strategy: Strategy =
            serde_json::from_value(strategy).map_err(|e| config_err(format!("ensemble `{name}`: {e}")))?;
        let mut spec = EnsembleSpec::new(self.pipeline, strategy);
        spec.meta_params.seed = self.seed;
        let mut v = serde_json::to_value(&spec).expect("spec serializes");
        let obj = v.as_object_mut().expect("object");
        for (k, x) in m {
            match k.as_str() {
                "model" | "label" | "strategy" | "pipeline" => {}
                "meta_params" => {
                    let mp = obj["meta_params"].as_object_mut().expect("object");
                    for (a, b) in x.as_object().ok_or_else(|| config_err("meta_params must be an object"))? {
                        mp.insert(a.clone(), b.clone());
                    }
                }
                _ => {
                    obj.insert(k.clone(), x.clone());
                }
            }
        }
        let spec: EnsembleSpec = serde_json::from_value(v).map_err(|e| config_err(format!("ensemble `{name}`: {e}")))?;
        spec.validate().map_err(|e| config_err(format!("ensemble `{name}`: {e}")))?;
        let mut bases = Vec::new();
        for b in &spec.base_models {
            let over = self.configured_single(b)?.unwrap_or_default();
            let model = over.get("model").and_then(Value::as_str).unwrap_or(b).to_owned();
            bases.push(self.resolve_single(&model, &over)?);
        }
        Ok(match self.pipeline {
            Pipeline::Rating => ModelKind::RatingEnsemble(
                spec,
                bases
                    .into_iter()
                    .map(|k| match k {
                        ModelKind::Rating(c) => c,
                        _ => unreachable!("rating pipeline resolves rating models"),
                    })
                    .collect(),
            ),
            Pipeline::Ranking => ModelKind::RankingEnsemble(
                spec,
                bases
                    .into_iter()
                    .map(|k| match k {
                        ModelKind::Ranking(c) => c,
                        _ => unreachable!("ranking pipeline resolves ranking models"),
                    })
                    .collect(),
            ),
        })
    }

    /// Every configured model with its final hyperparameters, in run order.
    pub fn resolve_models(&self) -> Result<Vec<ResolvedModel>, HarnessError> {
        let entries: Vec<ModelEntry> = if self.models.is_empty() {
            suite_names(self.pipeline).into_iter().map(ModelEntry::Name).collect()
        } else {
            self.models.clone()
        };
        let mut out: Vec<ResolvedModel> = Vec::new();
        for e in &entries {
            let (name, m) = self.entry_parts(e)?;
            let kind = if name.starts_with("ensemble") {
                self.resolve_ensemble(&name, &m)?
            } else {
                self.resolve_single(&name, &m)?
            };
            let label = match (m.get("label").and_then(Value::as_str), &kind) {
                (Some(l), _) => l.to_owned(),
                (None, ModelKind::RatingEnsemble(s, _) | ModelKind::RankingEnsemble(s, _)) => s.name(),
                (None, _) => name,
            };
            if label.is_empty() || label.contains(['\t', '\n', '/']) {
                return Err(config_err(format!("bad model label `{label}`")));
            }
            if out.iter().any(|r| r.label == label) {
                return Err(config_err(format!("model label `{label}` used twice")));
            }
            out.push(ResolvedModel { label, kind });
        }
        Ok(out)
    }
}
