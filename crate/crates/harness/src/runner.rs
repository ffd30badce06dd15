//! Data preparation and the sequential experiment protocol.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use greenrec::data::{
    clean, compute_stats, convert_implicit, load_interactions, CleaningReport, Dataset, DatasetStats, ImplicitDataset,
    UserIdx,
};
use greenrec::ensemble::{Pipeline, RankingEnsemble, RatingEnsemble};
use greenrec::error::ModelError;
use greenrec::metrics::{rmse, summarize, MetricSummary};
use greenrec::ranking::{evaluate_with, RankingEval, RankingScorer};
use greenrec::rating::{predict_pairs, RatingPredictor};
use greenrec::split::{
    global_random_split, kfold_global, kfold_per_user, load_or_create_split, per_user_split, SplitConfig,
    SplitStrategy, TrainTestSplit, CV_MIN_USER_INTERACTIONS,
};
use greenrec_energy::{
    build_meter, carbon, check_baseline, measure_idle_baseline, BaselineBand, Clock, EnergyResult,
    MeasurementSession, SimClock, SystemClock,
};
use serde::Serialize;

use crate::config::{ExperimentConfig, MeterConfig, ModelKind, ResolvedModel};
use crate::error::HarnessError;
use crate::record::{append_record, read_results, ExperimentRecord, Status};

pub const RESULTS_FILE: &str = "results.tsv";

/// Cleaned dataset plus its cached split, ready for any model of the pipeline.
pub struct Prepared {
    pub dataset: String,
    pub stats: DatasetStats,
    pub cleaning: CleaningReport,
    pub split: TrainTestSplit<Dataset>,
    pub split_dir: PathBuf,
    /// Ranking pipeline only.
    pub implicit: Option<ImplicitSplit>,
}

pub struct ImplicitSplit {
    pub train: ImplicitDataset,
    pub test: ImplicitDataset,
    /// Every user that survived the split, whether or not any held-out
    /// rating reaches the threshold.
    pub users: Vec<UserIdx>,
}

/// Directory name encoding everything that determines a split.
pub fn split_label(c: &SplitConfig) -> String {
    match c.strategy {
        SplitStrategy::Global => format!("global_tf{}_seed{}", c.train_fraction, c.seed),
        SplitStrategy::PerUser => format!(
            "per-user_tf{}_seed{}_min{}_mintest{}",
            c.train_fraction, c.seed, c.min_interactions_per_user, c.min_test_items_per_user
        ),
    }
}

fn split_users(s: &TrainTestSplit<Dataset>) -> Vec<UserIdx> {
    let mut seen = vec![false; s.train.user_capacity().max(s.test.user_capacity())];
    for x in s.train.interactions().iter().chain(s.test.interactions()) {
        seen[x.user as usize] = true;
    }
    (0..seen.len() as UserIdx).filter(|&u| seen[u as usize]).collect()
}

/// Loads, cleans and splits the configured dataset, reusing a cached split
/// under `<out>/splits/<dataset>/<label>/` when one exists.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared, HarnessError> {
    let d = &cfg.dataset;
    if !d.path.exists() {
        return Err(HarnessError::Config(format!("dataset file {} not found", d.path.display())));
    }
    let raw = load_interactions(&d.path, &d.name, &d.mapping, d.scale)?;
    let (clean, cleaning) = clean(&raw);
    let stats = compute_stats(&clean)?;
    log::info!(
        "{}: {} ratings, {} users, {} items, sparsity {} ({cleaning:?})",
        d.name,
        stats.ratings,
        stats.users,
        stats.items,
        stats.sparsity
    );
    let sc = cfg.effective_split();
    let split_dir = cfg.out_dir.join("splits").join(&d.name).join(split_label(&sc));
    let (split, created) = load_or_create_split(&split_dir, || match sc.strategy {
        SplitStrategy::Global => global_random_split(&clean, &sc),
        SplitStrategy::PerUser => per_user_split(&clean, &sc),
    })?;
    log::info!(
        "{} split {} ({} train / {} test, checksum {})",
        if created { "created" } else { "reused" },
        split_dir.display(),
        split.train.len(),
        split.test.len(),
        &split.checksum[..12]
    );
    let implicit = match cfg.pipeline {
        Pipeline::Rating => None,
        Pipeline::Ranking => Some(ImplicitSplit {
            train: convert_implicit(&split.train, cfg.implicit_threshold)?,
            test: convert_implicit(&split.test, cfg.implicit_threshold)?,
            users: split_users(&split),
        }),
    };
    Ok(Prepared {
        dataset: d.name.clone(),
        stats,
        cleaning,
        split,
        split_dir,
        implicit,
    })
}

enum Model {
    Rating(Box<dyn RatingPredictor<f64>>),
    Ranking(Box<dyn RankingScorer<f64>>),
}

fn instantiate(m: &ResolvedModel, eval: &RankingEval) -> Result<Model, ModelError> {
    Ok(match &m.kind {
        ModelKind::Rating(c) => Model::Rating(c.build()),
        ModelKind::Ranking(c) => Model::Ranking(c.build()),
        ModelKind::RatingEnsemble(spec, bases) => {
            Model::Rating(Box::new(RatingEnsemble::new(spec, bases.iter().map(|b| b.build()).collect())?))
        }
        ModelKind::RankingEnsemble(spec, bases) => Model::Ranking(Box::new(
            RankingEnsemble::new(spec, bases.iter().map(|b| b.build()).collect())?.with_eval(*eval),
        )),
    })
}

/// Where energy goes while a model runs.
pub struct Metering {
    cfg: MeterConfig,
    clock: Arc<dyn Clock>,
    sim: Option<Arc<SimClock>>,
    root: PathBuf,
}

impl Metering {
    pub fn new(cfg: &MeterConfig, out_dir: &Path) -> Self {
        let (clock, sim): (Arc<dyn Clock>, _) = if cfg.simulated() {
            let s = Arc::new(SimClock::at_epoch());
            (s.clone(), Some(s))
        } else {
            (Arc::new(SystemClock), None)
        };
        Metering {
            cfg: cfg.clone(),
            clock,
            sim,
            root: out_dir.join("measurements"),
        }
    }

    /// Mean idle power over `duration_s`, checked against the band.
    pub fn idle_baseline(&self, duration_s: f64, band: Option<BaselineBand>) -> Result<f64, HarnessError> {
        let mut meter = build_meter(&self.cfg.settings)?;
        let w = measure_idle_baseline(meter.as_mut(), self.clock.as_ref(), self.cfg.settings.poll_interval_s, duration_s)?;
        if let Some(b) = band {
            check_baseline(w, &b)?;
        }
        Ok(w)
    }

    fn begin(&self, model: &str, dataset: &str) -> Result<MeasurementSession, HarnessError> {
        let meter = build_meter(&self.cfg.settings)?;
        let session = self.cfg.settings.session(self.root.clone());
        Ok(MeasurementSession::start(meter, self.clock.clone(), model, dataset, &session)?)
    }

    /// Simulated time for `ops` operations; no-op on a real clock.
    fn charge(&self, ops: u64) {
        if let Some(s) = &self.sim {
            s.advance_secs(ops as f64 / self.cfg.ops_per_second);
        }
    }

    fn finish(&self, s: MeasurementSession) -> Result<EnergyResult, HarnessError> {
        if let Some(sim) = &self.sim {
            // Guarantee a closing sample distinct from the opening one.
            sim.advance_secs(0.001);
        }
        Ok(s.stop()?)
    }
}

struct Outcome {
    metrics: Vec<(String, f64)>,
    cv: Option<MetricSummary<f64>>,
    fit_s: f64,
    predict_s: f64,
    ops: u64,
}

fn rating_metrics(model: &dyn RatingPredictor<f64>, test: &Dataset) -> Result<Vec<(String, f64)>, ModelError> {
    let pairs = predict_pairs(model, test)?;
    let e = rmse(&pairs).map_err(|e| ModelError::Precondition(e.to_string()))?;
    Ok(vec![("rmse".into(), e)])
}

fn ranking_metrics(
    model: &dyn RankingScorer<f64>,
    train: &ImplicitDataset,
    test: &ImplicitDataset,
    users: &[UserIdx],
    eval: &RankingEval,
) -> Result<Vec<(String, f64)>, ModelError> {
    let r = evaluate_with(train, test, users, eval, |u, out| model.score_all(u, out))?;
    Ok(vec![
        (format!("ndcg@{}", eval.k), r.scores.ndcg),
        ("rbp".into(), r.scores.rbp),
        ("recip_rank".into(), r.scores.recip_rank),
    ])
}

/// Cross-validates the primary metric on the training part.
fn cross_validate(
    cfg: &ExperimentConfig,
    m: &ResolvedModel,
    p: &Prepared,
    metering: Option<&Metering>,
) -> Result<MetricSummary<f64>, ModelError> {
    let cv_err = |e: greenrec::error::SplitError| ModelError::Precondition(format!("cross-validation: {e}"));
    let mut values = Vec::new();
    match cfg.pipeline {
        Pipeline::Rating => {
            for fold in kfold_global(&p.split.train, cfg.cv.k, cfg.seed).map_err(cv_err)?.folds {
                let Model::Rating(mut model) = instantiate(m, &cfg.ranking)? else { unreachable!() };
                model.fit(&fold.train)?;
                metering.inspect(|x| x.charge(model.ops() + model.predict_ops() * fold.validation.len() as u64));
                values.push(rating_metrics(model.as_ref(), &fold.validation)?[0].1);
            }
        }
        Pipeline::Ranking => {
            let folds = kfold_per_user(&p.split.train, cfg.cv.k, cfg.seed, cfg.cv.user_holdout, CV_MIN_USER_INTERACTIONS)
                .map_err(cv_err)?;
            let t = cfg.implicit_threshold;
            for fold in folds.folds {
                let conv = |d: &Dataset| convert_implicit(d, t).map_err(|e| ModelError::Precondition(e.to_string()));
                let (tr, va) = (conv(&fold.train)?, conv(&fold.validation)?);
                let users: Vec<UserIdx> = {
                    let mut u: Vec<UserIdx> = fold.validation.interactions().iter().map(|x| x.user).collect();
                    u.sort_unstable();
                    u.dedup();
                    u
                };
                let Model::Ranking(mut model) = instantiate(m, &cfg.ranking)? else { unreachable!() };
                model.fit(&tr)?;
                metering.inspect(|x| x.charge(model.ops() + model.score_ops() * users.len() as u64));
                values.push(ranking_metrics(model.as_ref(), &tr, &va, &users, &cfg.ranking)?[0].1);
            }
        }
    }
    summarize(&values).map_err(|e| ModelError::Precondition(e.to_string()))
}

fn execute(
    cfg: &ExperimentConfig,
    m: &ResolvedModel,
    p: &Prepared,
    metering: Option<&Metering>,
) -> Result<Outcome, ModelError> {
    let cv = if cfg.cv.enabled {
        Some(cross_validate(cfg, m, p, metering)?)
    } else {
        None
    };
    match instantiate(m, &cfg.ranking)? {
        Model::Rating(mut model) => {
            let t = Instant::now();
            model.fit(&p.split.train)?;
            let fit_s = t.elapsed().as_secs_f64();
            metering.inspect(|x| x.charge(model.ops()));
            let t = Instant::now();
            let metrics = rating_metrics(model.as_ref(), &p.split.test)?;
            let predict_s = t.elapsed().as_secs_f64();
            metering.inspect(|x| x.charge(model.predict_ops() * p.split.test.len() as u64));
            Ok(Outcome {
                metrics,
                cv,
                fit_s,
                predict_s,
                ops: model.ops(),
            })
        }
        Model::Ranking(mut model) => {
            let imp = p
                .implicit
                .as_ref()
                .ok_or_else(|| ModelError::Precondition("ranking model on a rating-pipeline split".into()))?;
            let t = Instant::now();
            model.fit(&imp.train)?;
            let fit_s = t.elapsed().as_secs_f64();
            metering.inspect(|x| x.charge(model.ops()));
            let t = Instant::now();
            let metrics = ranking_metrics(model.as_ref(), &imp.train, &imp.test, &imp.users, &cfg.ranking)?;
            let predict_s = t.elapsed().as_secs_f64();
            metering.inspect(|x| x.charge(model.score_ops() * imp.users.len() as u64));
            Ok(Outcome {
                metrics,
                cv,
                fit_s,
                predict_s,
                ops: model.ops(),
            })
        }
    }
}

/// Runs one model through the protocol: open the energy session, optional CV
/// on the training part, fit, evaluate on test, close the session and convert
/// to carbon. Model failures become failed records, never errors.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    m: &ResolvedModel,
    p: &Prepared,
    metering: Option<&Metering>,
) -> ExperimentRecord {
    log::info!("running {} on {}", m.label, p.dataset);
    let mut energy_error = None;
    let session = metering.and_then(|x| match x.begin(&m.label, &p.dataset) {
        Ok(s) => Some(s),
        Err(e) => {
            log::warn!("{}: energy unavailable: {e}", m.label);
            energy_error = Some(e.to_string());
            None
        }
    });
    let outcome = execute(cfg, m, p, metering);
    let energy = match (metering, session) {
        (Some(x), Some(s)) => match x.finish(s) {
            Ok(e) => Some(e),
            Err(e) => {
                log::warn!("{}: energy unavailable: {e}", m.label);
                energy_error = Some(e.to_string());
                None
            }
        },
        _ => None,
    };
    let mut rec = ExperimentRecord {
        model: m.label.clone(),
        dataset: p.dataset.clone(),
        pipeline: cfg.pipeline,
        metrics: Vec::new(),
        cv: None,
        energy: None,
        energy_error,
        carbon: None,
        fit_s: 0.0,
        predict_s: 0.0,
        ops: 0,
        suspicious: false,
        status: Status::Ok,
        detail: None,
    };
    match outcome {
        Ok(o) => {
            rec.carbon = energy
                .as_ref()
                .and_then(|e| carbon(e.e_experiment_wh, cfg.emission_factor_g_per_kwh).ok());
            rec.energy = energy;
            rec.metrics = o.metrics;
            rec.cv = o.cv;
            rec.fit_s = o.fit_s;
            rec.predict_s = o.predict_s;
            rec.ops = o.ops;
        }
        Err(e) => {
            log::error!("{} failed: {e}", m.label);
            rec.status = Status::Failed(e.reason().to_owned());
            rec.detail = Some(e.to_string());
        }
    }
    rec
}

fn median(v: &mut [f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

/// True when `e` is more than `factor`× away from the median of `e` and the
/// earlier runs.
pub fn implausible(e: f64, earlier: &[f64], factor: f64) -> bool {
    let mut all: Vec<f64> = earlier.to_vec();
    all.push(e);
    match median(&mut all) {
        Some(m) if all.len() > 1 && m > 0.0 => e > factor * m || e * factor < m,
        _ => false,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Re-run models that already have a row in the results file.
    pub force: bool,
}

#[derive(Serialize)]
struct Manifest<'a> {
    record: &'a ExperimentRecord,
    config: &'a ExperimentConfig,
    split_dir: &'a Path,
    split_checksum: &'a str,
    cleaning: &'a CleaningReport,
}

/// Runs every configured model one after another, appending each record to
/// `<out>/results.tsv` as soon as it finishes and skipping models already
/// recorded there.
pub fn run_suite(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Vec<ExperimentRecord>, HarnessError> {
    cfg.validate()?;
    let models = cfg.resolve_models()?;
    std::fs::create_dir_all(&cfg.out_dir).map_err(HarnessError::io(&cfg.out_dir))?;
    let prepared = prepare(cfg)?;
    let metering = cfg.meter.as_ref().map(|m| Metering::new(m, &cfg.out_dir));
    if let (Some(x), Some(check)) = (&metering, cfg.idle_check) {
        let band = BaselineBand {
            expected_w: check.expected_w,
            band_w: check.band_w,
        };
        let w = x.idle_baseline(check.duration_s, Some(band))?;
        log::info!("idle baseline {w:.2} W within {} ± {} W", check.expected_w, check.band_w);
    }
    let results = cfg.out_dir.join(crate::runner::RESULTS_FILE);
    let pipeline = cfg.pipeline;
    let previous = read_results(&results)?;
    let done: HashSet<(String, String)> = previous
        .iter()
        .filter(|r| r.pipeline == pipeline)
        .map(|r| (r.model.clone(), r.dataset.clone()))
        .collect();
    let runs_dir = cfg.out_dir.join("runs").join(&prepared.dataset);
    std::fs::create_dir_all(&runs_dir).map_err(HarnessError::io(&runs_dir))?;
    let mut out = Vec::new();
    for m in &models {
        if !opts.force && done.contains(&(m.label.clone(), prepared.dataset.clone())) {
            log::info!("{} already recorded, skipping", m.label);
            continue;
        }
        let mut rec = run_experiment(cfg, m, &prepared, metering.as_ref());
        if let Some(e) = &rec.energy {
            let earlier: Vec<f64> = read_results(&results)?
                .iter()
                .filter(|r| {
                    r.model == rec.model
                        && r.dataset == rec.dataset
                        && r.pipeline == pipeline
                        && Some(r.metric_name.as_str()) == rec.primary().map(|x| x.0)
                })
                .filter_map(|r| r.energy_wh)
                .collect();
            if implausible(e.e_experiment_wh, &earlier, cfg.plausibility_factor) {
                log::warn!("{}: energy {} Wh flagged as implausible", rec.model, e.e_experiment_wh);
                rec.suspicious = true;
            }
        }
        append_record(&results, &rec)?;
        let n = std::fs::read_dir(&runs_dir).map_err(HarnessError::io(&runs_dir))?.count();
        let path = runs_dir.join(format!("{:04}_{}.json", n + 1, rec.model));
        let manifest = Manifest {
            record: &rec,
            config: cfg,
            split_dir: &prepared.split_dir,
            split_checksum: &prepared.split.checksum,
            cleaning: &prepared.cleaning,
        };
        let body = serde_json::to_string_pretty(&manifest).expect("records serialize");
        std::fs::write(&path, body).map_err(HarnessError::io(&path))?;
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plausibility_uses_median() {
        assert!(!implausible(1.0, &[], 5.0));
        assert!(!implausible(1.0, &[1.1, 0.9], 5.0));
        assert!(implausible(10.0, &[1.0, 1.2], 5.0));
        assert!(implausible(0.1, &[1.0, 1.2], 5.0));
        assert!(!implausible(4.9, &[1.0], 5.0)); // median of {1, 4.9} is 2.95
    }

    #[test]
    fn labels_distinguish_configs() {
        let a = split_label(&SplitConfig::global(0));
        let b = split_label(&SplitConfig::global(1));
        let c = split_label(&SplitConfig::per_user(0, 10, 2));
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(c, "per-user_tf0.8_seed0_min10_mintest2");
    }
}
