use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::Deserialize;

use crate::error::MeterError;
use crate::meter::{PowerMeter, Reading};

/// Shelly Gen-2 smart plug, read through its local RPC status endpoint
/// (`/rpc/Switch.GetStatus?id=N`): `apower` in W and `aenergy.total` in Wh.
#[derive(Debug)]
pub struct ShellyGen2 {
    device: String,
    url: String,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct Status {
    apower: f64,
    aenergy: Energy,
}

#[derive(Deserialize)]
struct Energy {
    total: f64,
}

impl ShellyGen2 {
    /// `endpoint` is `host` or `host:port`.
    pub fn new(device: impl Into<String>, endpoint: &str, switch_id: u32, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(true)
            .build()
            .into();
        ShellyGen2 {
            device: device.into(),
            url: format!("http://{endpoint}/rpc/Switch.GetStatus?id={switch_id}"),
            agent,
        }
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

impl PowerMeter for ShellyGen2 {
    fn device(&self) -> &str {
        &self.device
    }

    fn poll(&mut self, _at: DateTime<Utc>) -> Result<Reading, MeterError> {
        let mut resp = self.agent.get(&self.url).call().map_err(|e| match e {
            ureq::Error::StatusCode(c) => MeterError::Protocol(format!("HTTP {c}")),
            other => MeterError::Unreachable(other.to_string()),
        })?;
        let s: Status = resp
            .body_mut()
            .read_json()
            .map_err(|e| MeterError::Protocol(e.to_string()))?;
        if !(s.apower >= 0.0) || !s.aenergy.total.is_finite() {
            return Err(MeterError::Protocol(format!(
                "implausible status: apower {}, total {}",
                s.apower, s.aenergy.total
            )));
        }
        Ok(Reading {
            power_w: s.apower,
            cumulative_wh: s.aenergy.total,
        })
    }
}
