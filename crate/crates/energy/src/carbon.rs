use serde::{Deserialize, Serialize};

use crate::error::EnergyError;

/// German grid average, gCO₂e per kWh.
pub const GERMANY_G_PER_KWH: f64 = 420.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarbonReport {
    pub emission_factor: f64,
    pub grams_co2e: f64,
}

/// `grams = (energy_wh / 1000) × factor`.
pub fn carbon(energy_wh: f64, factor_g_per_kwh: f64) -> Result<CarbonReport, EnergyError> {
    if !(factor_g_per_kwh > 0.0) || !factor_g_per_kwh.is_finite() {
        return Err(EnergyError::Config(format!(
            "emission factor {factor_g_per_kwh} must be positive"
        )));
    }
    Ok(CarbonReport {
        emission_factor: factor_g_per_kwh,
        grams_co2e: energy_wh / 1000.0 * factor_g_per_kwh,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(carbon(1000.0, GERMANY_G_PER_KWH).unwrap().grams_co2e, 420.0);
        assert_eq!(carbon(0.0, 275.0).unwrap().grams_co2e, 0.0);
        assert!(carbon(1.0, 0.0).is_err());
        assert!(carbon(1.0, f64::NAN).is_err());
    }
}
