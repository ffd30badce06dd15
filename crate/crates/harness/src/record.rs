//! Experiment records and the append-only results TSV.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use greenrec::ensemble::Pipeline;
use greenrec::metrics::MetricSummary;
use greenrec_energy::{CarbonReport, EnergyResult};
use serde::{Deserialize, Serialize};

use crate::error::HarnessError;

pub const RESULTS_HEADER: [&str; 12] = [
    "model",
    "dataset",
    "pipeline",
    "metric_name",
    "metric_value",
    "cv_mean",
    "cv_std",
    "energy_wh",
    "carbon_g",
    "fit_s",
    "predict_s",
    "status",
];

/// Columns holding wall-clock measurements; everything else is reproducible.
pub const TIMING_COLUMNS: [&str; 2] = ["fit_s", "predict_s"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", content = "reason", rename_all = "lowercase")]
pub enum Status {
    Ok,
    Failed(String),
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Status::Ok => f.write_str("ok"),
            Status::Failed(r) => write!(f, "failed({r})"),
        }
    }
}

impl std::str::FromStr for Status {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "ok" {
            return Ok(Status::Ok);
        }
        s.strip_prefix("failed(")
            .and_then(|r| r.strip_suffix(')'))
            .map(|r| Status::Failed(r.to_owned()))
            .ok_or_else(|| format!("unknown status `{s}`"))
    }
}

/// One `(model, dataset)` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub model: String,
    pub dataset: String,
    pub pipeline: Pipeline,
    /// Test-set metrics in report order; the first is the primary one.
    pub metrics: Vec<(String, f64)>,
    /// Cross-validated primary metric.
    pub cv: Option<MetricSummary<f64>>,
    pub energy: Option<EnergyResult>,
    /// Why energy is missing while metering was on.
    pub energy_error: Option<String>,
    pub carbon: Option<CarbonReport>,
    pub fit_s: f64,
    pub predict_s: f64,
    /// Training operations the model reported (the mock meter's time base).
    pub ops: u64,
    /// Energy deviates from the median of this model's other runs by more than
    /// the plausibility factor.
    pub suspicious: bool,
    pub status: Status,
    /// Full error text of a failed run.
    pub detail: Option<String>,
}

impl ExperimentRecord {
    pub fn primary(&self) -> Option<(&str, f64)> {
        self.metrics.first().map(|(n, v)| (n.as_str(), *v))
    }

    /// TSV rows: one per metric, or a single metric-less row for a failure.
    pub fn rows(&self) -> Vec<[String; 12]> {
        let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
        let energy = opt(self.energy.as_ref().map(|e| e.e_experiment_wh));
        let carbon = opt(self.carbon.as_ref().map(|c| c.grams_co2e));
        let pipeline = pipeline_str(self.pipeline).to_owned();
        let row = |name: &str, value: String, cv: (String, String)| {
            [
                self.model.clone(),
                self.dataset.clone(),
                pipeline.clone(),
                name.to_owned(),
                value,
                cv.0,
                cv.1,
                energy.clone(),
                carbon.clone(),
                format!("{:.6}", self.fit_s),
                format!("{:.6}", self.predict_s),
                self.status.to_string(),
            ]
        };
        if self.metrics.is_empty() {
            return vec![row("", String::new(), Default::default())];
        }
        self.metrics
            .iter()
            .enumerate()
            .map(|(j, (n, v))| {
                let cv = match (&self.cv, j) {
                    (Some(s), 0) => (s.mean.to_string(), s.std.to_string()),
                    _ => Default::default(),
                };
                row(n, v.to_string(), cv)
            })
            .collect()
    }
}

pub fn pipeline_str(p: Pipeline) -> &'static str {
    match p {
        Pipeline::Rating => "rating",
        Pipeline::Ranking => "ranking",
    }
}

/// Appends `rec` to the results file, writing the header first if the file is
/// new, and syncs so a crash never loses a finished run.
pub fn append_record(path: &Path, rec: &ExperimentRecord) -> Result<(), HarnessError> {
    let io = HarnessError::io(path);
    let fresh = !path.exists() || std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
    let mut buf = String::new();
    if fresh {
        buf.push_str(&RESULTS_HEADER.join("\t"));
        buf.push('\n');
    }
    for r in rec.rows() {
        buf.push_str(&r.join("\t"));
        buf.push('\n');
    }
    f.write_all(buf.as_bytes())
        .and_then(|_| f.sync_data())
        .map_err(HarnessError::io(path))
}

/// One parsed line of the results file.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub model: String,
    pub dataset: String,
    pub pipeline: Pipeline,
    pub metric_name: String,
    pub metric_value: Option<f64>,
    pub cv_mean: Option<f64>,
    pub cv_std: Option<f64>,
    pub energy_wh: Option<f64>,
    pub carbon_g: Option<f64>,
    pub fit_s: Option<f64>,
    pub predict_s: Option<f64>,
    pub status: Status,
}

/// Reads a results file; a missing file is an empty result set.
pub fn read_results(path: &Path) -> Result<Vec<ResultRow>, HarnessError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = std::fs::read_to_string(path).map_err(HarnessError::io(path))?;
    let bad = |line: usize, msg: String| HarnessError::Results {
        path: path.to_owned(),
        msg: format!("line {line}: {msg}"),
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.split('\t').eq(RESULTS_HEADER) => {}
        None => return Ok(Vec::new()),
        Some(_) => return Err(bad(1, "unexpected header".into())),
    }
    let mut out = Vec::new();
    for (n, line) in lines {
        if line.is_empty() {
            continue;
        }
        let c: Vec<&str> = line.split('\t').collect();
        if c.len() != RESULTS_HEADER.len() {
            return Err(bad(n + 1, format!("{} columns", c.len())));
        }
        let num = |s: &str| -> Result<Option<f64>, HarnessError> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| bad(n + 1, format!("bad number `{s}`")))
            }
        };
        let pipeline = match c[2] {
            "rating" => Pipeline::Rating,
            "ranking" => Pipeline::Ranking,
            p => return Err(bad(n + 1, format!("bad pipeline `{p}`"))),
        };
        out.push(ResultRow {
            model: c[0].to_owned(),
            dataset: c[1].to_owned(),
            pipeline,
            metric_name: c[3].to_owned(),
            metric_value: num(c[4])?,
            cv_mean: num(c[5])?,
            cv_std: num(c[6])?,
            energy_wh: num(c[7])?,
            carbon_g: num(c[8])?,
            fit_s: num(c[9])?,
            predict_s: num(c[10])?,
            status: c[11].parse().map_err(|e| bad(n + 1, e))?,
        });
    }
    Ok(out)
}

/// Replaces the timing columns with `-` so runs can be compared byte for byte.
pub fn mask_timings(tsv: &str) -> String {
    let mut lines = tsv.lines();
    let Some(header) = lines.next() else {
        return String::new();
    };
    let cols: Vec<usize> = header
        .split('\t')
        .enumerate()
        .filter(|(_, h)| TIMING_COLUMNS.contains(h))
        .map(|(i, _)| i)
        .collect();
    let mut out = format!("{header}\n");
    for l in lines {
        let row: Vec<&str> = l
            .split('\t')
            .enumerate()
            .map(|(i, c)| if cols.contains(&i) { "-" } else { c })
            .collect();
        out.push_str(&row.join("\t"));
        out.push('\n');
    }
    out
}
