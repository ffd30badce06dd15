use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::carbon::GERMANY_G_PER_KWH;
use crate::error::EnergyError;
use crate::meter::{MockConstant, MockTrace, PowerMeter};
use crate::session::SessionConfig;
use crate::shelly::ShellyGen2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeterKind {
    ShellyGen2,
    MockConstant,
    MockTrace,
}

/// Meter connection settings, usually loaded from a JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MeterSettings {
    pub kind: MeterKind,
    pub device: String,
    /// Host (and optional port) of a networked plug.
    pub endpoint: String,
    pub switch_id: u32,
    pub timeout_ms: u64,
    pub poll_interval_s: f64,
    pub rotation_interval_s: f64,
    /// Power of a `mock-constant` meter.
    pub watts: f64,
    /// CSV replayed by a `mock-trace` meter.
    pub trace_path: Option<PathBuf>,
}

impl Default for MeterSettings {
    fn default() -> Self {
        MeterSettings {
            kind: MeterKind::MockConstant,
            device: "mock-plug".into(),
            endpoint: String::new(),
            switch_id: 0,
            timeout_ms: 2000,
            poll_interval_s: 0.5,
            rotation_interval_s: 300.0,
            watts: 71.2,
            trace_path: None,
        }
    }
}

impl MeterSettings {
    pub fn load(path: &Path) -> Result<Self, EnergyError> {
        let text = std::fs::read_to_string(path).map_err(|source| EnergyError::Io {
            path: path.to_owned(),
            source,
        })?;
        let s: Self =
            serde_json::from_str(&text).map_err(|e| EnergyError::Config(format!("{}: {e}", path.display())))?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), EnergyError> {
        if self.device.is_empty() {
            return Err(EnergyError::Config("device name is empty".into()));
        }
        match self.kind {
            MeterKind::ShellyGen2 if self.endpoint.is_empty() => {
                Err(EnergyError::Config("shelly-gen2 meter needs an endpoint".into()))
            }
            MeterKind::MockConstant if !(self.watts >= 0.0 && self.watts.is_finite()) => {
                Err(EnergyError::Config(format!("mock power {} W", self.watts)))
            }
            MeterKind::MockTrace if self.trace_path.is_none() => {
                Err(EnergyError::Config("mock-trace meter needs trace_path".into()))
            }
            _ => self.session(PathBuf::new()).validate(),
        }
    }

    /// Session settings writing under `root`.
    pub fn session(&self, root: PathBuf) -> SessionConfig {
        SessionConfig {
            root,
            poll_interval_s: self.poll_interval_s,
            rotation_interval_s: self.rotation_interval_s,
        }
    }
}

/// Conversion settings for reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MonitorSettings {
    pub emission_factor_g_per_kwh: f64,
}

impl Default for MonitorSettings {
    fn default() -> Self {
        MonitorSettings {
            emission_factor_g_per_kwh: GERMANY_G_PER_KWH,
        }
    }
}

pub fn build_meter(s: &MeterSettings) -> Result<Box<dyn PowerMeter>, EnergyError> {
    s.validate()?;
    Ok(match s.kind {
        MeterKind::ShellyGen2 => Box::new(ShellyGen2::new(
            s.device.clone(),
            &s.endpoint,
            s.switch_id,
            Duration::from_millis(s.timeout_ms),
        )),
        MeterKind::MockConstant => Box::new(MockConstant::new(s.device.clone(), s.watts)),
        MeterKind::MockTrace => Box::new(MockTrace::from_csv(
            s.device.clone(),
            s.trace_path.as_deref().expect("validated"),
        )?),
    })
}
