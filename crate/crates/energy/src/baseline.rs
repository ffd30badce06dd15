use chrono::Duration;
use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::error::{EnergyError, MeterError};
use crate::meter::PowerMeter;

/// Expected idle draw of the measurement host.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineBand {
    pub expected_w: f64,
    pub band_w: f64,
}

impl Default for BaselineBand {
    fn default() -> Self {
        BaselineBand {
            expected_w: 71.2,
            band_w: 5.0,
        }
    }
}

/// Mean of the valid power readings polled every `poll_interval_s` over
/// `duration_s`. Blocks on `clock` for the whole window.
pub fn measure_idle_baseline(
    meter: &mut dyn PowerMeter,
    clock: &dyn Clock,
    poll_interval_s: f64,
    duration_s: f64,
) -> Result<f64, EnergyError> {
    if !(duration_s > 0.0) || !(poll_interval_s > 0.0) {
        return Err(EnergyError::Config(format!(
            "baseline needs a positive window and interval (got {duration_s} s / {poll_interval_s} s)"
        )));
    }
    let start = clock.now();
    let step = (poll_interval_s * 1000.0).round().max(1.0) as i64;
    let end = (duration_s * 1000.0).round() as i64;
    let (mut sum, mut n) = (0.0, 0usize);
    let mut last_err = None;
    for k in 0..=(end / step) {
        let t = start + Duration::milliseconds(k * step);
        clock.sleep_until(t);
        match meter.poll(t) {
            Ok(r) => {
                sum += r.power_w;
                n += 1;
            }
            Err(MeterError::Exhausted) => break,
            Err(e) => last_err = Some(e),
        }
    }
    if n == 0 {
        return Err(last_err.unwrap_or(MeterError::Missing).into());
    }
    Ok(sum / n as f64)
}

/// Errors when `measured` falls outside the band.
pub fn check_baseline(measured: f64, band: &BaselineBand) -> Result<f64, EnergyError> {
    if (measured - band.expected_w).abs() > band.band_w {
        return Err(EnergyError::BaselineOutOfBand {
            measured,
            expected: band.expected_w,
            band: band.band_w,
        });
    }
    Ok(measured)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::SimClock;
    use crate::meter::{MockConstant, MockTrace};

    #[test]
    fn constant_idle_reported() {
        let clock = SimClock::at_epoch();
        let mut m = MockConstant::new("idle", 71.2);
        let w = measure_idle_baseline(&mut m, &clock, 0.5, 60.0).unwrap();
        assert!((w - 71.2).abs() < 0.01);
        assert_eq!(clock.now() - SimClock::at_epoch().now(), Duration::seconds(60));
        assert!(check_baseline(w, &BaselineBand::default()).is_ok());
        assert!(matches!(
            check_baseline(90.0, &BaselineBand::default()),
            Err(EnergyError::BaselineOutOfBand { .. })
        ));
    }

    #[test]
    fn no_valid_reading_errors() {
        let clock = SimClock::at_epoch();
        let mut m = MockTrace::new("dead", vec![None, None]);
        assert!(measure_idle_baseline(&mut m, &clock, 1.0, 5.0).is_err());
        let mut c = MockConstant::new("idle", 1.0);
        assert!(matches!(
            measure_idle_baseline(&mut c, &clock, 1.0, 0.0),
            Err(EnergyError::Config(_))
        ));
    }
}
