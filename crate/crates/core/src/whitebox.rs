//! Analytic Ramsey baseline: Gaussian dephasing envelope with a calibrated
//! T2*, composed with the readout calibration. Serves both as the comparison
//! model for the hybrid one and as the noiseless closed-form oracle
//! (T2* = infinity).

use crate::error::{Error, Result};
use crate::quantum::{ramsey_phase, PulseSettings, ReadoutCalibration};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WhiteboxConfig {
    /// Dephasing time in microseconds; `f64::INFINITY` disables the envelope.
    pub t2_star_us: f64,
}

impl WhiteboxConfig {
    pub fn new(t2_star_us: f64) -> Result<Self> {
        if t2_star_us.is_nan() || t2_star_us <= 0.0 {
            return Err(Error::invalid(format!(
                "T2* must be positive (or infinite), got {t2_star_us}"
            )));
        }
        Ok(WhiteboxConfig { t2_star_us })
    }

    pub fn no_decay() -> Self {
        WhiteboxConfig {
            t2_star_us: f64::INFINITY,
        }
    }

    fn envelope(&self, tau_us: f64) -> f64 {
        if self.t2_star_us.is_infinite() {
            1.0
        } else {
            let x = tau_us / self.t2_star_us;
            (-x * x).exp()
        }
    }
}

/// P(d | settings) = ½{1 − (−1)^d e^(−(τ/T2*)²) cos θ}. P(0) + P(1) = 1
/// exactly: P(1) is computed as the complement.
pub fn wb_likelihood(d: u8, settings: &PulseSettings, cfg: &WhiteboxConfig) -> Result<f64> {
    let p0 = 0.5 * (1.0 - cfg.envelope(settings.tau_us) * ramsey_phase(settings).cos());
    match d {
        0 => Ok(p0),
        1 => Ok(1.0 - p0),
        _ => Err(Error::invalid(format!("measurement outcome must be 0 or 1, got {d}"))),
    }
}

/// π0·P(0|f_B) + π1·P(1|f_B), i.e. the affine readout map applied to the
/// analytic <Z> = −e^(−(τ/T2*)²) cos θ.
pub fn wb_click_probability(
    settings: &PulseSettings,
    cfg: &WhiteboxConfig,
    calib: &ReadoutCalibration,
) -> Result<f64> {
    let p0 = wb_likelihood(0, settings, cfg)?;
    Ok(calib.pi0 * p0 + calib.pi1 * (1.0 - p0))
}

/// Element-wise `wb_click_probability` with f_B swept over `f_grid`.
/// Interface-identical to the hybrid model's grid prediction so the estimator
/// can consume either.
pub fn wb_predict_grid(
    tau_us: f64,
    phi_rad: f64,
    calib: &ReadoutCalibration,
    cfg: &WhiteboxConfig,
    f_grid_mhz: &[f64],
) -> Result<Vec<f64>> {
    f_grid_mhz
        .iter()
        .map(|&f| {
            let s = PulseSettings::new(tau_us, phi_rad, f)?;
            wb_click_probability(&s, cfg, calib)
        })
        .collect()
}
