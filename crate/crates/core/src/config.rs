//! Network parameters.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Thermal noise floor in dBm/Hz.
pub const THERMAL_NOISE_DBM_PER_HZ: f64 = -174.0;

/// Geometry, propagation and radio parameters of a backscatter network.
///
/// Defaults are the 7-core, 140-tag UHF deployment used by the shipped
/// `paper` preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    /// Number of cores (B).
    pub cores: usize,
    /// Number of tags (K).
    pub tags: usize,
    /// Number of frequency subchannels (C).
    pub subchannels: usize,
    /// Number of orthogonal training sequences (M_tr).
    pub training_sequences: usize,
    pub cell_radius_m: f64,
    pub core_height_m: f64,
    pub tag_height_min_m: f64,
    pub tag_height_max_m: f64,
    pub wavelength_m: f64,
    pub path_loss_exponent: f64,
    pub reference_distance_m: f64,
    pub kappa_dl_db: f64,
    pub kappa_ul_db: f64,
    /// Per-core transmit power.
    pub core_power_dbm: f64,
    pub noise_figure_db: f64,
    /// Overrides the noise variance (W/Hz) derived from the noise figure.
    pub noise_var: Option<f64>,
    pub tx_antennas: usize,
    pub rx_antennas: usize,
    pub symbol_period_s: f64,
    pub gamma0: f64,
    pub gamma1: f64,
    pub gamma0_im: f64,
    pub gamma1_im: f64,
    pub scattering_efficiency: f64,
    /// Subcarrier `c` (0-based) sits at `subcarrier_step * (c + 1) / T`.
    pub subcarrier_step: u32,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            cores: 7,
            tags: 140,
            subchannels: 8,
            training_sequences: 8,
            cell_radius_m: 6.0,
            core_height_m: 2.0,
            tag_height_min_m: 0.0,
            tag_height_max_m: 1.0,
            wavelength_m: 0.3456,
            path_loss_exponent: 2.1,
            reference_distance_m: 1.0,
            kappa_dl_db: 10.0,
            kappa_ul_db: 10.0,
            core_power_dbm: 20.0,
            noise_figure_db: 4.0,
            noise_var: None,
            tx_antennas: 1,
            rx_antennas: 4,
            symbol_period_s: 1e-4,
            gamma0: 0.47,
            gamma1: -0.54,
            gamma0_im: 0.0,
            gamma1_im: 0.0,
            scattering_efficiency: 0.2,
            subcarrier_step: 2,
            seed: 1,
        }
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm - 30.0)
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.cores == 0 {
            return fail("cores must be at least 1");
        }
        if self.tags == 0 {
            return fail("tags must be at least 1");
        }
        if self.subchannels == 0 {
            return fail("subchannels must be at least 1");
        }
        if self.training_sequences == 0 {
            return fail("training_sequences must be at least 1");
        }
        if self.tx_antennas == 0 || self.rx_antennas == 0 {
            return fail("antenna counts must be at least 1");
        }
        if !(self.cell_radius_m > 0.0) {
            return fail("cell_radius_m must be positive");
        }
        if !(self.symbol_period_s > 0.0) {
            return fail("symbol_period_s must be positive");
        }
        if !(self.reference_distance_m > 0.0) || !(self.wavelength_m > 0.0) {
            return fail("wavelength_m and reference_distance_m must be positive");
        }
        if self.tag_height_min_m > self.tag_height_max_m {
            return fail("tag_height_min_m exceeds tag_height_max_m");
        }
        if self.gamma0().norm() > 1.0 || self.gamma1().norm() > 1.0 {
            return fail("reflection coefficients must have magnitude at most 1");
        }
        if !(self.delta_gamma().norm() > 0.0) {
            return fail("gamma0 and gamma1 must differ");
        }
        if !(self.scattering_efficiency > 0.0 && self.scattering_efficiency <= 1.0) {
            return fail("scattering_efficiency must lie in (0, 1]");
        }
        if self.subcarrier_step == 0 {
            return fail("subcarrier_step must be at least 1");
        }
        if let Some(v) = self.noise_var {
            if !(v > 0.0) {
                return fail("noise_var must be positive");
            }
        }
        Ok(())
    }

    pub fn gamma0(&self) -> Complex64 {
        Complex64::new(self.gamma0, self.gamma0_im)
    }

    pub fn gamma1(&self) -> Complex64 {
        Complex64::new(self.gamma1, self.gamma1_im)
    }

    pub fn delta_gamma(&self) -> Complex64 {
        self.gamma0() - self.gamma1()
    }

    pub fn core_power_watts(&self) -> f64 {
        dbm_to_watts(self.core_power_dbm)
    }

    pub fn kappa_dl(&self) -> f64 {
        db_to_linear(self.kappa_dl_db)
    }

    pub fn kappa_ul(&self) -> f64 {
        db_to_linear(self.kappa_ul_db)
    }

    /// Per-antenna noise variance at the matched-filter output, N_0 in W/Hz.
    ///
    /// The compound channel carries energy per symbol (W·s), so N_0 is
    /// already in matching units and no bandwidth term enters.
    pub fn noise_var(&self) -> f64 {
        self.noise_var.unwrap_or_else(|| {
            dbm_to_watts(THERMAL_NOISE_DBM_PER_HZ + self.noise_figure_db)
        })
    }

    /// Subcarrier frequencies in Hz, each an integer multiple of 1/T.
    pub fn subcarriers(&self) -> Vec<f64> {
        (1..=self.subchannels)
            .map(|c| f64::from(self.subcarrier_step) * c as f64 / self.symbol_period_s)
            .collect()
    }
}
