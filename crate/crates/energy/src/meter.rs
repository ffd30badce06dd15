use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{EnergyError, MeterError};

/// One successful poll.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reading {
    pub power_w: f64,
    pub cumulative_wh: f64,
}

/// Anything that can report instantaneous power and a lifetime energy counter.
pub trait PowerMeter: Send {
    /// Stable device identifier; one session per device at a time.
    fn device(&self) -> &str;

    /// Reading for the poll scheduled at `at`. Real devices ignore `at` and
    /// report their live state; mocks use it to stay deterministic.
    fn poll(&mut self, at: DateTime<Utc>) -> Result<Reading, MeterError>;
}

/// Fixed power draw; the counter integrates it exactly between polls.
#[derive(Debug, Clone)]
pub struct MockConstant {
    device: String,
    watts: f64,
    counter_wh: f64,
    last: Option<DateTime<Utc>>,
    resolution_wh: Option<f64>,
}

impl MockConstant {
    pub fn new(device: impl Into<String>, watts: f64) -> Self {
        MockConstant {
            device: device.into(),
            watts,
            counter_wh: 0.0,
            last: None,
            resolution_wh: None,
        }
    }

    /// Starts the lifetime counter at a non-zero value, like a used plug.
    pub fn with_counter(mut self, wh: f64) -> Self {
        self.counter_wh = wh;
        self
    }

    /// Report the counter floored to this resolution (a real plug has 0.1 Wh).
    pub fn with_resolution(mut self, wh: f64) -> Self {
        self.resolution_wh = Some(wh);
        self
    }

    pub fn watts(&self) -> f64 {
        self.watts
    }

    /// Changes the draw from the next poll on.
    pub fn set_watts(&mut self, watts: f64) {
        self.watts = watts;
    }
}

impl PowerMeter for MockConstant {
    fn device(&self) -> &str {
        &self.device
    }

    fn poll(&mut self, at: DateTime<Utc>) -> Result<Reading, MeterError> {
        if let Some(prev) = self.last {
            let secs = (at - prev).num_milliseconds().max(0) as f64 / 1000.0;
            self.counter_wh += self.watts * secs / 3600.0;
        }
        self.last = Some(at);
        let shown = match self.resolution_wh {
            Some(r) if r > 0.0 => (self.counter_wh / r).floor() * r,
            _ => self.counter_wh,
        };
        Ok(Reading {
            power_w: self.watts,
            cumulative_wh: shown,
        })
    }
}

/// One row of a recorded trace; `None` replays as a missing sample.
pub type TraceRow = Option<Reading>;

/// Replays recorded readings one per poll, then reports exhaustion.
#[derive(Debug, Clone)]
pub struct MockTrace {
    device: String,
    rows: Vec<TraceRow>,
    next: usize,
    cycle: bool,
}

impl MockTrace {
    pub fn new(device: impl Into<String>, rows: Vec<TraceRow>) -> Self {
        MockTrace {
            device: device.into(),
            rows,
            next: 0,
            cycle: false,
        }
    }

    /// Restart from the first row when the trace runs out. The counter is
    /// offset by the trace's span each lap so it stays monotone.
    pub fn cycling(mut self) -> Self {
        self.cycle = true;
        self
    }

    /// Reads `power_w,cumulative_wh` rows (header required); an empty cell in
    /// either column marks a missing sample.
    pub fn from_csv(device: impl Into<String>, path: &Path) -> Result<Self, EnergyError> {
        let csv_err = |source| EnergyError::Csv {
            path: path.to_owned(),
            source,
        };
        let mut rdr = csv::Reader::from_path(path).map_err(csv_err)?;
        let headers = rdr.headers().map_err(csv_err)?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| EnergyError::Config(format!("{}: no `{name}` column", path.display())))
        };
        let (pw, cw) = (col("power_w")?, col("cumulative_wh")?);
        let mut rows = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let field = |i: usize| -> Result<Option<f64>, EnergyError> {
                let s = rec.get(i).unwrap_or("").trim();
                if s.is_empty() {
                    return Ok(None);
                }
                s.parse().map(Some).map_err(|_| {
                    EnergyError::Config(format!("{}: line {}: bad number `{s}`", path.display(), line + 2))
                })
            };
            rows.push(match (field(pw)?, field(cw)?) {
                (Some(power_w), Some(cumulative_wh)) => Some(Reading { power_w, cumulative_wh }),
                _ => None,
            });
        }
        Ok(Self::new(device, rows))
    }

    pub fn rows(&self) -> &[TraceRow] {
        &self.rows
    }
}

impl PowerMeter for MockTrace {
    fn device(&self) -> &str {
        &self.device
    }

    fn poll(&mut self, _at: DateTime<Utc>) -> Result<Reading, MeterError> {
        let n = self.rows.len();
        if n == 0 || (!self.cycle && self.next >= n) {
            return Err(MeterError::Exhausted);
        }
        let lap = (self.next / n) as f64;
        let row = self.rows[self.next % n];
        self.next += 1;
        let span = {
            let valid = || self.rows.iter().flatten();
            match (valid().next(), valid().last()) {
                (Some(a), Some(b)) => b.cumulative_wh - a.cumulative_wh,
                _ => 0.0,
            }
        };
        row.map(|r| Reading {
            power_w: r.power_w,
            cumulative_wh: r.cumulative_wh + lap * span,
        })
        .ok_or(MeterError::Missing)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_integrates_exactly() {
        let t0 = Utc::now();
        let mut m = MockConstant::new("plug", 100.0);
        let a = m.poll(t0).unwrap();
        let b = m.poll(t0 + chrono::Duration::seconds(2)).unwrap();
        assert!((b.cumulative_wh - a.cumulative_wh - 100.0 * 2.0 / 3600.0).abs() < 1e-12);
        assert_eq!(b.power_w, 100.0);
    }

    #[test]
    fn resolution_floors_counter() {
        let t0 = Utc::now();
        let mut m = MockConstant::new("plug", 100.0).with_resolution(0.1);
        m.poll(t0).unwrap();
        let r = m.poll(t0 + chrono::Duration::seconds(9)).unwrap(); // 0.25 Wh
        assert!((r.cumulative_wh - 0.2).abs() < 1e-12);
    }

    #[test]
    fn trace_replays_rows() {
        let rows = vec![
            Some(Reading { power_w: 10.0, cumulative_wh: 5.0 }),
            None,
            Some(Reading { power_w: 12.0, cumulative_wh: 5.5 }),
        ];
        let mut m = MockTrace::new("t", rows.clone());
        let t = Utc::now();
        assert_eq!(m.poll(t), Ok(rows[0].unwrap()));
        assert_eq!(m.poll(t), Err(MeterError::Missing));
        assert_eq!(m.poll(t), Ok(rows[2].unwrap()));
        assert_eq!(m.poll(t), Err(MeterError::Exhausted));

        let mut c = MockTrace::new("t", rows).cycling();
        for _ in 0..3 {
            let _ = c.poll(t);
        }
        assert_eq!(c.poll(t).unwrap().cumulative_wh, 5.5);
    }

    #[test]
    fn trace_from_csv() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("trace.csv");
        std::fs::write(&p, "power_w,cumulative_wh\n80,1000.0\n,\n81,1000.5\n").unwrap();
        let m = MockTrace::from_csv("t", &p).unwrap();
        assert_eq!(m.rows().len(), 3);
        assert!(m.rows()[1].is_none());
        std::fs::write(&p, "power_w,cumulative_wh\n80,abc\n").unwrap();
        assert!(MockTrace::from_csv("t", &p).is_err());
    }
}
