use std::path::PathBuf;

use thiserror::Error;

/// A single failed poll. Sessions record these as missing samples.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeterError {
    #[error("meter unreachable: {0}")]
    Unreachable(String),
    #[error("unexpected meter response: {0}")]
    Protocol(String),
    #[error("no reading at this poll")]
    Missing,
    #[error("trace exhausted")]
    Exhausted,
}

#[derive(Debug, Error)]
pub enum EnergyError {
    #[error("device `{0}` already has an active session")]
    DeviceBusy(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("energy undefined: {valid} valid samples, need at least 2")]
    UndefinedEnergy { valid: usize },
    #[error("energy counter went backwards ({start} Wh → {end} Wh)")]
    CounterReset { start: f64, end: f64 },
    #[error("invalid energy settings: {0}")]
    Config(String),
    #[error(transparent)]
    Meter(#[from] MeterError),
    #[error("idle baseline {measured:.2} W outside {expected} ± {band} W")]
    BaselineOutOfBand { measured: f64, expected: f64, band: f64 },
    #[error("sampler thread panicked")]
    SamplerPanicked,
}
