//! System parameters and unit conversions.
//!
//! All quantities are stored in linear scale. Powers are in watts, the SINR
//! threshold and the SIC sensitivity are dimensionless. The SIC sensitivity is
//! expressed on the same normalized-SNR scale as the left side of the SIC
//! separability constraints (received power divided by the UE noise power).

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Converts a power level in dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Noise power in watts for a power spectral density (dBm/Hz) over `bandwidth_hz`.
pub fn noise_power_watts(psd_dbm_per_hz: f64, bandwidth_hz: f64) -> f64 {
    dbm_to_watts(psd_dbm_per_hz) * bandwidth_hz
}

/// Minimum-rate requirement to SINR threshold, `2^R - 1`.
pub fn rate_to_threshold(rate_bits: f64) -> f64 {
    rate_bits.exp2() - 1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Per-BS transmit power budget `P_k` (W).
    pub power_budget: Vec<f64>,
    /// Per-UE noise power `N_m` (W).
    pub noise: Vec<f64>,
    /// SINR threshold (linear).
    pub gamma_th: f64,
    /// SIC receiver sensitivity `P_s` (normalized-SNR scale).
    pub sic_sensitivity: f64,
    /// Per-UE minimum rate `R_m` (bits/s/Hz).
    pub min_rates: Vec<f64>,
    /// Target outage probability.
    pub epsilon: f64,
}

impl SystemParams {
    pub fn new(
        power_budget: Vec<f64>,
        noise: Vec<f64>,
        gamma_th: f64,
        sic_sensitivity: f64,
        min_rates: Vec<f64>,
        epsilon: f64,
    ) -> Result<Self> {
        let p = SystemParams {
            power_budget,
            noise,
            gamma_th,
            sic_sensitivity,
            min_rates,
            epsilon,
        };
        p.validate()?;
        Ok(p)
    }

    /// Equal budgets `p_watts` at `k_bs` BSs and equal noise `noise_watts` at `m_users` UEs.
    pub fn uniform(
        m_users: usize,
        k_bs: usize,
        p_watts: f64,
        noise_watts: f64,
        gamma_th: f64,
    ) -> Result<Self> {
        Self::new(
            vec![p_watts; k_bs],
            vec![noise_watts; m_users],
            gamma_th,
            0.0,
            vec![0.0; m_users],
            1e-5,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.power_budget.is_empty() || self.noise.is_empty() {
            return Err(invalid("at least one BS and one UE are required"));
        }
        if self.power_budget.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
            return Err(invalid("power budgets must be finite and strictly positive"));
        }
        if self.noise.iter().any(|&n| !(n > 0.0 && n.is_finite())) {
            return Err(invalid("noise powers must be finite and strictly positive"));
        }
        if self.gamma_th.is_nan() || self.gamma_th < 0.0 {
            return Err(invalid("gamma_th must be non-negative"));
        }
        if !(self.sic_sensitivity >= 0.0 && self.sic_sensitivity.is_finite()) {
            return Err(invalid("SIC sensitivity must be finite and non-negative"));
        }
        if self.min_rates.len() != self.noise.len() {
            return Err(invalid("min_rates must have one entry per UE"));
        }
        if self.min_rates.iter().any(|&r| !(r >= 0.0 && r.is_finite())) {
            return Err(invalid("minimum rates must be finite and non-negative"));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(invalid("epsilon must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn num_users(&self) -> usize {
        self.noise.len()
    }

    pub fn num_bs(&self) -> usize {
        self.power_budget.len()
    }

    /// The common budget when all BSs transmit with the same power.
    pub fn equal_budget(&self) -> Option<f64> {
        let p0 = self.power_budget[0];
        self.power_budget
            .iter()
            .all(|&p| (p - p0).abs() <= 1e-12 * p0)
            .then_some(p0)
    }

    pub fn with_power(&self, p_watts: f64) -> Self {
        let mut out = self.clone();
        out.power_budget.iter_mut().for_each(|p| *p = p_watts);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_conversions() {
        assert!((dbm_to_watts(30.0) - 1.0).abs() < 1e-15);
        assert!((dbm_to_watts(0.0) - 1e-3).abs() < 1e-18);
        assert!((watts_to_dbm(dbm_to_watts(17.3)) - 17.3).abs() < 1e-12);
        assert!((db_to_linear(15.0) - 31.622776601683793).abs() < 1e-12);
        // -169 dBm/Hz over 1 MHz is -109 dBm
        let n = noise_power_watts(-169.0, 1e6);
        assert!((watts_to_dbm(n) + 109.0).abs() < 1e-9);
        assert_eq!(rate_to_threshold(1.0), 1.0);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(SystemParams::uniform(2, 2, 0.0, 1.0, 1.0).is_err());
        assert!(SystemParams::uniform(2, 2, 1.0, -1.0, 1.0).is_err());
        let mut p = SystemParams::uniform(2, 2, 1.0, 1.0, 1.0).unwrap();
        p.epsilon = 1.0;
        assert!(p.validate().is_err());
        p.epsilon = 0.1;
        p.min_rates.pop();
        assert!(p.validate().is_err());
    }

    #[test]
    fn equal_budget_detection() {
        let p = SystemParams::uniform(2, 3, 2.0, 1.0, 1.0).unwrap();
        assert_eq!(p.equal_budget(), Some(2.0));
        let mut q = p.clone();
        q.power_budget[1] = 3.0;
        assert_eq!(q.equal_budget(), None);
    }
}
