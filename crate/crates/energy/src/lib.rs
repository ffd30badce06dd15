//! Energy measurement for experiment runs.
//!
//! A [`PowerMeter`] reports instantaneous power and a lifetime energy counter.
//! A [`MeasurementSession`] polls it from a background thread, logs every
//! sample to rotating CSV files, and on stop reports the energy used as the
//! difference of the counter's first and last valid readings — no numerical
//! integration. [`SimClock`] makes sessions deterministic and instant for
//! tests and hardware-free runs.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

mod baseline;
mod carbon;
mod clock;
mod error;
mod meter;
mod session;
mod settings;
mod shelly;

pub use baseline::{check_baseline, measure_idle_baseline, BaselineBand};
pub use carbon::{carbon, CarbonReport, GERMANY_G_PER_KWH};
pub use clock::{Clock, SimClock, SystemClock};
pub use error::{EnergyError, MeterError};
pub use meter::{MockConstant, MockTrace, PowerMeter, Reading, TraceRow};
pub use session::{
    experiment_name, EnergyResult, MeasurementSession, PowerSample, SessionConfig, CSV_HEADER,
};
pub use settings::{build_meter, MeterKind, MeterSettings, MonitorSettings};
pub use shelly::ShellyGen2;
