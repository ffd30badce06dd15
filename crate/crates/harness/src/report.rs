//! Comparison and efficiency tables, computed purely from the results file.

use std::collections::BTreeMap;

use greenrec::ensemble::Pipeline;

use crate::error::HarnessError;
use crate::record::{ResultRow, Status};

/// `100 · (value − reference) / reference`.
pub fn percent_vs(value: f64, reference: f64) -> f64 {
    100.0 * (value - reference) / reference
}

/// Accuracy gain over `best` in percent, positive when better: lower RMSE for
/// the rating pipeline, higher NDCG for ranking.
pub fn improvement(pipeline: Pipeline, value: f64, best: f64) -> f64 {
    match pipeline {
        Pipeline::Rating => 100.0 * (best - value) / best,
        Pipeline::Ranking => percent_vs(value, best),
    }
}

fn is_primary(pipeline: Pipeline, metric: &str) -> bool {
    match pipeline {
        Pipeline::Rating => metric == "rmse",
        Pipeline::Ranking => metric.starts_with("ndcg"),
    }
}

pub fn is_ensemble(model: &str) -> bool {
    model.starts_with("ensemble")
}

/// Latest outcome of one model on one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub metric: Option<f64>,
    pub energy_wh: Option<f64>,
    pub status: Status,
}

type Latest = (Vec<String>, Vec<String>, BTreeMap<(String, String), Outcome>);

/// `model → dataset → latest outcome`, models in first-appearance order.
fn latest(rows: &[ResultRow], pipeline: Pipeline) -> Latest {
    let mut models = Vec::new();
    let mut datasets = Vec::new();
    let mut map = BTreeMap::new();
    for r in rows.iter().filter(|r| r.pipeline == pipeline) {
        let failed = matches!(r.status, Status::Failed(_));
        if !failed && !is_primary(pipeline, &r.metric_name) {
            continue;
        }
        if !models.contains(&r.model) {
            models.push(r.model.clone());
        }
        if !datasets.contains(&r.dataset) {
            datasets.push(r.dataset.clone());
        }
        map.insert(
            (r.model.clone(), r.dataset.clone()),
            Outcome {
                metric: if failed { None } else { r.metric_value },
                energy_wh: if failed { None } else { r.energy_wh },
                status: r.status.clone(),
            },
        );
    }
    (models, datasets, map)
}

fn mean(v: &[Option<f64>]) -> Option<f64> {
    let xs: Vec<f64> = v.iter().flatten().copied().collect();
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub model: String,
    /// Primary metric per dataset; `None` for failed or absent runs.
    pub metric: Vec<Option<f64>>,
    pub metric_avg: Option<f64>,
    pub metric_pct: Option<f64>,
    pub energy: Vec<Option<f64>>,
    pub energy_avg: Option<f64>,
    pub energy_pct: Option<f64>,
    /// `(dataset, reason)` of failed runs.
    pub failures: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub pipeline: Pipeline,
    pub reference: String,
    pub datasets: Vec<String>,
    pub rows: Vec<ComparisonRow>,
}

/// Per-dataset primary metric and energy with cross-dataset averages and the
/// percentage against `reference`.
pub fn report_comparison(rows: &[ResultRow], pipeline: Pipeline, reference: &str) -> Result<Comparison, HarnessError> {
    let (models, datasets, map) = latest(rows, pipeline);
    if !models.iter().any(|m| m == reference) {
        return Err(HarnessError::Config(format!("reference model `{reference}` has no results")));
    }
    let column = |m: &str, f: fn(&Outcome) -> Option<f64>| -> Vec<Option<f64>> {
        datasets
            .iter()
            .map(|d| map.get(&(m.to_owned(), d.clone())).and_then(f))
            .collect()
    };
    let ref_metric = mean(&column(reference, |o| o.metric));
    let ref_energy = mean(&column(reference, |o| o.energy_wh));
    let out = models
        .iter()
        .map(|m| {
            let metric = column(m, |o| o.metric);
            let energy = column(m, |o| o.energy_wh);
            let (ma, ea) = (mean(&metric), mean(&energy));
            let failures = datasets
                .iter()
                .filter_map(|d| match map.get(&(m.clone(), d.clone())).map(|o| &o.status) {
                    Some(Status::Failed(r)) => Some((d.clone(), r.clone())),
                    _ => None,
                })
                .collect();
            ComparisonRow {
                model: m.clone(),
                metric_pct: ma.zip(ref_metric).map(|(a, r)| percent_vs(a, r)),
                energy_pct: ea.zip(ref_energy).filter(|(_, r)| *r > 0.0).map(|(a, r)| percent_vs(a, r)),
                metric,
                metric_avg: ma,
                energy,
                energy_avg: ea,
                failures,
            }
        })
        .collect();
    Ok(Comparison {
        pipeline,
        reference: reference.to_owned(),
        datasets,
        rows: out,
    })
}

fn cell(v: Option<f64>, prec: usize) -> String {
    v.map_or_else(|| "NA".into(), |x| format!("{x:.prec$}"))
}

fn pct_cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |x| format!("{x:+.1}%"))
}

impl Comparison {
    pub fn to_tsv(&self) -> String {
        let metric = match self.pipeline {
            Pipeline::Rating => "rmse",
            Pipeline::Ranking => "ndcg",
        };
        let mut head = vec!["model".to_owned()];
        head.extend(self.datasets.iter().map(|d| format!("{metric}_{d}")));
        head.push(format!("{metric}_avg"));
        head.push(format!("pct_vs_{}", self.reference));
        head.extend(self.datasets.iter().map(|d| format!("energy_wh_{d}")));
        head.push("energy_wh_avg".into());
        head.push(format!("energy_pct_vs_{}", self.reference));
        let mut s = head.join("\t") + "\n";
        let mut notes = Vec::new();
        for r in &self.rows {
            let mark = |d: &str| {
                r.failures
                    .iter()
                    .position(|(fd, _)| fd == d)
                    .map(|_| "*".to_owned())
                    .unwrap_or_default()
            };
            let mut line = vec![r.model.clone()];
            for (d, v) in self.datasets.iter().zip(&r.metric) {
                line.push(cell(*v, 4) + &mark(d));
            }
            line.push(cell(r.metric_avg, 4));
            line.push(pct_cell(r.metric_pct));
            for (d, v) in self.datasets.iter().zip(&r.energy) {
                line.push(cell(*v, 6) + &mark(d));
            }
            line.push(cell(r.energy_avg, 6));
            line.push(pct_cell(r.energy_pct));
            s.push_str(&line.join("\t"));
            s.push('\n');
            notes.extend(r.failures.iter().map(|(d, why)| format!("# * {} on {d}: failed({why})", r.model)));
        }
        for n in notes {
            s.push_str(&n);
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EfficiencyRow {
    pub ensemble: String,
    pub dataset: String,
    pub best_single: String,
    pub accuracy_improvement_pct: Option<f64>,
    pub energy_overhead_pct: Option<f64>,
}

/// Every ensemble against the best single model of the same dataset.
pub fn report_efficiency(rows: &[ResultRow], pipeline: Pipeline) -> Result<Vec<EfficiencyRow>, HarnessError> {
    let (models, datasets, map) = latest(rows, pipeline);
    if !models.iter().any(|m| is_ensemble(m)) {
        return Err(HarnessError::Config("no ensemble results to compare".into()));
    }
    let mut out = Vec::new();
    for d in &datasets {
        let get = |m: &str| map.get(&(m.to_owned(), d.clone()));
        let best = models
            .iter()
            .filter(|m| !is_ensemble(m))
            .filter_map(|m| get(m).and_then(|o| o.metric).map(|v| (m, v)))
            .reduce(|a, b| {
                let better = match pipeline {
                    Pipeline::Rating => b.1 < a.1,
                    Pipeline::Ranking => b.1 > a.1,
                };
                if better {
                    b
                } else {
                    a
                }
            });
        let Some((best, best_v)) = best else { continue };
        let best_e = get(best).and_then(|o| o.energy_wh);
        for e in models.iter().filter(|m| is_ensemble(m)) {
            let Some(o) = get(e) else { continue };
            out.push(EfficiencyRow {
                ensemble: e.clone(),
                dataset: d.clone(),
                best_single: best.clone(),
                accuracy_improvement_pct: o.metric.map(|v| improvement(pipeline, v, best_v)),
                energy_overhead_pct: o
                    .energy_wh
                    .zip(best_e)
                    .filter(|(_, b)| *b > 0.0)
                    .map(|(a, b)| percent_vs(a, b)),
            });
        }
    }
    Ok(out)
}

pub fn efficiency_tsv(rows: &[EfficiencyRow]) -> String {
    let mut s = "ensemble\tdataset\tbest_single\taccuracy_improvement_pct\tenergy_overhead_pct\n".to_owned();
    for r in rows {
        s.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            r.ensemble,
            r.dataset,
            r.best_single,
            r.accuracy_improvement_pct.map_or("NA".into(), |x| format!("{x:.2}")),
            r.energy_overhead_pct.map_or("NA".into(), |x| format!("{x:.1}")),
        ));
    }
    s
}
