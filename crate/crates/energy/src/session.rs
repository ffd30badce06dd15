use std::collections::HashSet;
use std::fs::File;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, OnceLock};
use std::thread::JoinHandle;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::error::EnergyError;
use crate::meter::{PowerMeter, Reading};

/// Column header of every measurement CSV segment.
pub const CSV_HEADER: [&str; 4] = ["timestamp_iso", "power_w", "cumulative_wh", "missing_flag"];

/// One scheduled poll; `reading` is `None` when the meter failed to answer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerSample {
    pub timestamp: DateTime<Utc>,
    pub reading: Option<Reading>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    /// The `measurements` directory; sessions go to `<root>/<device>/<name>/`.
    pub root: PathBuf,
    pub poll_interval_s: f64,
    pub rotation_interval_s: f64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            root: PathBuf::from("measurements"),
            poll_interval_s: 0.5,
            rotation_interval_s: 300.0,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), EnergyError> {
        if !(self.poll_interval_s > 0.0) || !(self.rotation_interval_s > 0.0) {
            return Err(EnergyError::Config(format!(
                "poll interval {} s and rotation interval {} s must be positive",
                self.poll_interval_s, self.rotation_interval_s
            )));
        }
        if self.poll_interval_s < 0.001 {
            return Err(EnergyError::Config("poll interval below 1 ms".into()));
        }
        Ok(())
    }
}

/// Delta-method energy of one session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyResult {
    pub experiment: String,
    pub device: String,
    pub started_at: DateTime<Utc>,
    pub ended_at: DateTime<Utc>,
    pub e_start_wh: f64,
    pub e_end_wh: f64,
    pub e_experiment_wh: f64,
    /// Valid samples.
    pub sample_count: usize,
    pub missing_count: usize,
    pub duration_s: f64,
    /// Energy over the span between the first and last valid sample.
    pub mean_power_w: f64,
    pub log_dir: PathBuf,
    pub segments: usize,
}

impl EnergyResult {
    /// Energy from the first and last valid samples.
    pub fn from_samples(
        experiment: &str,
        device: &str,
        samples: &[PowerSample],
        started_at: DateTime<Utc>,
        ended_at: DateTime<Utc>,
    ) -> Result<Self, EnergyError> {
        let mut valid = samples.iter().filter_map(|s| s.reading.map(|r| (s.timestamp, r)));
        let count = samples.iter().filter(|s| s.reading.is_some()).count();
        let (Some(first), Some(last)) = (valid.next(), valid.next_back()) else {
            return Err(EnergyError::UndefinedEnergy { valid: count });
        };
        let (e_start_wh, e_end_wh) = (first.1.cumulative_wh, last.1.cumulative_wh);
        let e = e_end_wh - e_start_wh;
        if e < 0.0 {
            return Err(EnergyError::CounterReset {
                start: e_start_wh,
                end: e_end_wh,
            });
        }
        let span_s = (last.0 - first.0).num_milliseconds() as f64 / 1000.0;
        Ok(EnergyResult {
            experiment: experiment.to_owned(),
            device: device.to_owned(),
            started_at,
            ended_at,
            e_start_wh,
            e_end_wh,
            e_experiment_wh: e,
            sample_count: count,
            missing_count: samples.len() - count,
            duration_s: (ended_at - started_at).num_milliseconds() as f64 / 1000.0,
            mean_power_w: if span_s > 0.0 { e * 3600.0 / span_s } else { 0.0 },
            log_dir: PathBuf::new(),
            segments: 0,
        })
    }
}

/// `EXPERIMENT_<model>_<dataset>_<YYYYmmdd_HHMMSS>`.
pub fn experiment_name(model: &str, dataset: &str, at: DateTime<Utc>) -> String {
    format!("EXPERIMENT_{model}_{dataset}_{}", at.format("%Y%m%d_%H%M%S"))
}

fn busy() -> &'static Mutex<HashSet<String>> {
    static BUSY: OnceLock<Mutex<HashSet<String>>> = OnceLock::new();
    BUSY.get_or_init(Default::default)
}

/// Holds a device for the lifetime of a session.
struct DeviceGuard(String);

impl DeviceGuard {
    fn acquire(device: &str) -> Result<Self, EnergyError> {
        if busy().lock().unwrap().insert(device.to_owned()) {
            Ok(DeviceGuard(device.to_owned()))
        } else {
            Err(EnergyError::DeviceBusy(device.to_owned()))
        }
    }
}

impl Drop for DeviceGuard {
    fn drop(&mut self) {
        busy().lock().unwrap().remove(&self.0);
    }
}

/// CSV log split into fixed-length time segments `part-<n>.csv` (1-based).
struct RotatingLog {
    dir: PathBuf,
    start: DateTime<Utc>,
    rotation_ms: i64,
    current: Option<(i64, csv::Writer<File>)>,
    segments: usize,
}

impl RotatingLog {
    fn write(&mut self, s: &PowerSample) -> Result<(), EnergyError> {
        let seg = (s.timestamp - self.start).num_milliseconds().max(0) / self.rotation_ms;
        if self.current.as_ref().is_none_or(|(n, _)| *n != seg) {
            self.close()?;
            let path = self.dir.join(format!("part-{}.csv", seg + 1));
            let mut w = csv::Writer::from_path(&path).map_err(|source| EnergyError::Csv { path: path.clone(), source })?;
            w.write_record(CSV_HEADER).map_err(|source| EnergyError::Csv { path, source })?;
            self.current = Some((seg, w));
            self.segments += 1;
        }
        let (_, w) = self.current.as_mut().expect("opened above");
        let ts = s.timestamp.to_rfc3339_opts(SecondsFormat::Millis, true);
        let row = match s.reading {
            Some(r) => [ts, r.power_w.to_string(), r.cumulative_wh.to_string(), "0".into()],
            None => [ts, String::new(), String::new(), "1".into()],
        };
        let io = |e: csv::Error| EnergyError::Csv {
            path: self.dir.clone(),
            source: e,
        };
        w.write_record(&row).map_err(io)?;
        w.flush().map_err(|source| EnergyError::Io {
            path: self.dir.clone(),
            source,
        })
    }

    fn close(&mut self) -> Result<(), EnergyError> {
        if let Some((_, mut w)) = self.current.take() {
            w.flush().map_err(|source| EnergyError::Io {
                path: self.dir.clone(),
                source,
            })?;
        }
        Ok(())
    }
}

/// Everything the sampler thread owns; handed back on stop.
struct Recorder {
    meter: Box<dyn PowerMeter>,
    log: RotatingLog,
    samples: Vec<PowerSample>,
}

impl Recorder {
    fn record(&mut self, at: DateTime<Utc>) -> Result<(), EnergyError> {
        let reading = match self.meter.poll(at) {
            Ok(r) => Some(r),
            Err(e) => {
                log::debug!("{}: missing sample at {at}: {e}", self.meter.device());
                None
            }
        };
        let s = PowerSample { timestamp: at, reading };
        self.log.write(&s)?;
        self.samples.push(s);
        Ok(())
    }
}

/// A running measurement: a background thread polls the meter on a fixed
/// schedule until [`stop`](Self::stop).
pub struct MeasurementSession {
    name: String,
    device: String,
    dir: PathBuf,
    clock: Arc<dyn Clock>,
    started_at: DateTime<Utc>,
    cancel: Arc<AtomicBool>,
    sampler: Option<JoinHandle<Result<Recorder, EnergyError>>>,
    _guard: DeviceGuard,
}

fn unique_dir(base: &Path) -> PathBuf {
    if !base.exists() {
        return base.to_owned();
    }
    (2..)
        .map(|n| PathBuf::from(format!("{}_{n}", base.display())))
        .find(|p| !p.exists())
        .expect("unbounded search")
}

impl MeasurementSession {
    pub fn start(
        meter: Box<dyn PowerMeter>,
        clock: Arc<dyn Clock>,
        model: &str,
        dataset: &str,
        cfg: &SessionConfig,
    ) -> Result<Self, EnergyError> {
        cfg.validate()?;
        let device = meter.device().to_owned();
        let guard = DeviceGuard::acquire(&device)?;
        let started_at = clock.now();
        let name = experiment_name(model, dataset, started_at);
        let dir = unique_dir(&cfg.root.join(&device).join(&name));
        std::fs::create_dir_all(&dir).map_err(|source| EnergyError::Io {
            path: dir.clone(),
            source,
        })?;
        let name = dir.file_name().map_or(name, |n| n.to_string_lossy().into_owned());

        let mut rec = Recorder {
            meter,
            log: RotatingLog {
                dir: dir.clone(),
                start: started_at,
                rotation_ms: (cfg.rotation_interval_s * 1000.0).round().max(1.0) as i64,
                current: None,
                segments: 0,
            },
            samples: Vec::new(),
        };
        let poll_ms = (cfg.poll_interval_s * 1000.0).round().max(1.0) as i64;
        let cancel = Arc::new(AtomicBool::new(false));
        let (c, x) = (Arc::clone(&clock), Arc::clone(&cancel));
        let sampler = std::thread::Builder::new()
            .name(format!("sampler-{device}"))
            .spawn(move || {
                for k in 0.. {
                    let t = started_at + chrono::Duration::milliseconds(k * poll_ms);
                    if !c.wait_until(t, &x) {
                        break;
                    }
                    rec.record(t)?;
                }
                Ok(rec)
            })
            .map_err(|source| EnergyError::Io {
                path: dir.clone(),
                source,
            })?;
        Ok(MeasurementSession {
            name,
            device,
            dir,
            clock,
            started_at,
            cancel,
            sampler: Some(sampler),
            _guard: guard,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    /// Stops polling, takes a closing sample if the schedule has not just
    /// produced one, closes the log and applies the delta method.
    pub fn stop(mut self) -> Result<EnergyResult, EnergyError> {
        let (mut rec, ended_at) = self.finish()?;
        if rec.samples.last().is_none_or(|s| s.timestamp < ended_at) {
            rec.record(ended_at)?;
        }
        rec.log.close()?;
        let mut r = EnergyResult::from_samples(&self.name, &self.device, &rec.samples, self.started_at, ended_at)?;
        r.log_dir = self.dir.clone();
        r.segments = rec.log.segments;
        Ok(r)
    }

    /// Like [`stop`](Self::stop) but also returns every sample.
    pub fn stop_with_samples(mut self) -> Result<(EnergyResult, Vec<PowerSample>), EnergyError> {
        let (mut rec, ended_at) = self.finish()?;
        if rec.samples.last().is_none_or(|s| s.timestamp < ended_at) {
            rec.record(ended_at)?;
        }
        rec.log.close()?;
        let mut r = EnergyResult::from_samples(&self.name, &self.device, &rec.samples, self.started_at, ended_at)?;
        r.log_dir = self.dir.clone();
        r.segments = rec.log.segments;
        Ok((r, rec.samples))
    }

    fn finish(&mut self) -> Result<(Recorder, DateTime<Utc>), EnergyError> {
        let ended_at = self.clock.now();
        self.cancel.store(true, Ordering::Release);
        self.clock.wake();
        let handle = self.sampler.take().ok_or(EnergyError::SamplerPanicked)?;
        let rec = handle.join().map_err(|_| EnergyError::SamplerPanicked)??;
        Ok((rec, ended_at))
    }
}

impl Drop for MeasurementSession {
    fn drop(&mut self) {
        if let Some(h) = self.sampler.take() {
            self.cancel.store(true, Ordering::Release);
            self.clock.wake();
            let _ = h.join();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::SimClock;
    use crate::meter::{MockConstant, MockTrace};

    fn cfg(root: &Path) -> SessionConfig {
        SessionConfig {
            root: root.to_owned(),
            ..Default::default()
        }
    }

    #[test]
    fn delta_from_counter() {
        let t0 = Utc::now();
        let r = |wh: f64| Some(Reading { power_w: 1.0, cumulative_wh: wh });
        let s = [
            PowerSample { timestamp: t0, reading: r(1000.0) },
            PowerSample { timestamp: t0, reading: None },
            PowerSample { timestamp: t0 + chrono::Duration::seconds(10), reading: r(1000.5) },
        ];
        let e = EnergyResult::from_samples("x", "d", &s, t0, t0).unwrap();
        assert_eq!(e.e_experiment_wh, 0.5);
        assert_eq!((e.sample_count, e.missing_count), (2, 1));
        assert!(matches!(
            EnergyResult::from_samples("x", "d", &s[..2], t0, t0),
            Err(EnergyError::UndefinedEnergy { valid: 1 })
        ));
        let back = [s[2], s[0]];
        assert!(matches!(
            EnergyResult::from_samples("x", "d", &back, t0, t0),
            Err(EnergyError::CounterReset { .. })
        ));
    }

    #[test]
    fn constant_session_energy_and_layout() {
        let tmp = tempfile::tempdir().unwrap();
        let clock = Arc::new(SimClock::at_epoch());
        let meter = Box::new(MockConstant::new("plug-a", 71.2).with_counter(500.0));
        let s = MeasurementSession::start(meter, clock.clone(), "svd", "ml-100k", &cfg(tmp.path())).unwrap();
        assert!(s.name().starts_with("EXPERIMENT_svd_ml-100k_20240101_000000"));
        assert!(s.dir().starts_with(tmp.path().join("plug-a")));
        clock.advance_secs(600.0);
        let e = s.stop().unwrap();
        assert!((e.e_experiment_wh - 71.2 * 600.0 / 3600.0).abs() < 0.01);
        assert!((e.mean_power_w - 71.2).abs() < 1e-9);
        assert_eq!(e.sample_count, 1201);
        assert_eq!(e.segments, 3); // 0–300, 300–600, and the closing sample at 600
    }

    #[test]
    fn device_is_exclusive() {
        let tmp = tempfile::tempdir().unwrap();
        let clock = Arc::new(SimClock::at_epoch());
        let a = MeasurementSession::start(Box::new(MockConstant::new("plug-b", 1.0)), clock.clone(), "m", "d", &cfg(tmp.path())).unwrap();
        let b = MeasurementSession::start(Box::new(MockConstant::new("plug-b", 1.0)), clock.clone(), "m", "d", &cfg(tmp.path()));
        assert!(matches!(b, Err(EnergyError::DeviceBusy(_))));
        clock.advance_secs(1.0);
        a.stop().unwrap();
        let c = MeasurementSession::start(Box::new(MockConstant::new("plug-b", 1.0)), clock.clone(), "m", "d", &cfg(tmp.path())).unwrap();
        assert_ne!(c.dir(), tmp.path().join("plug-b").join("EXPERIMENT_m_d_20240101_000000"));
        drop(c);
    }

    #[test]
    fn missing_middle_samples_are_tolerated() {
        let tmp = tempfile::tempdir().unwrap();
        let clock = Arc::new(SimClock::at_epoch());
        let rows = vec![
            Some(Reading { power_w: 50.0, cumulative_wh: 10.0 }),
            None,
            None,
            Some(Reading { power_w: 50.0, cumulative_wh: 10.25 }),
        ];
        let s = MeasurementSession::start(Box::new(MockTrace::new("plug-c", rows)), clock.clone(), "m", "d", &cfg(tmp.path())).unwrap();
        clock.advance_secs(1.5);
        let (e, samples) = s.stop_with_samples().unwrap();
        assert_eq!(e.e_experiment_wh, 0.25);
        assert_eq!(samples.len(), 4);
        assert_eq!(e.missing_count, 2);
    }

    #[test]
    fn unwritable_root_errors() {
        let tmp = tempfile::tempdir().unwrap();
        let file = tmp.path().join("not-a-dir");
        std::fs::write(&file, "x").unwrap();
        let clock = Arc::new(SimClock::at_epoch());
        let r = MeasurementSession::start(Box::new(MockConstant::new("plug-d", 1.0)), clock, "m", "d", &cfg(&file));
        assert!(matches!(r, Err(EnergyError::Io { .. })));
        // the failed start released the device
        assert!(!busy().lock().unwrap().contains("plug-d"));
    }
}
