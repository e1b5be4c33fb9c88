//! Likelihood providers: anything that can map a frequency grid to click
//! probabilities for a fixed pulse setting. The estimator itself never knows
//! which model is behind the predictions.

use crate::bayes::LikelihoodProvider;
use crate::error::Result;
use crate::graybox::{gb_predict_grid, GrayboxParams};
use crate::quantum::{click_probability, PulseSettings, ReadoutCalibration};
use crate::seed::StreamSeed;
use crate::sim::{mc_expectation_z, NoiseConfig};
use crate::whitebox::{wb_predict_grid, WhiteboxConfig};

/// Analytic Ramsey model with a Gaussian dephasing envelope.
#[derive(Debug, Clone)]
pub struct WhiteboxProvider {
    cfg: WhiteboxConfig,
}

impl WhiteboxProvider {
    pub fn new(cfg: WhiteboxConfig) -> Self {
        WhiteboxProvider { cfg }
    }
}

impl LikelihoodProvider for WhiteboxProvider {
    fn name(&self) -> &'static str {
        "whitebox"
    }

    fn predict_grid(
        &self,
        tau_us: f64,
        phi_rad: f64,
        calib: &ReadoutCalibration,
        _chi: &[f64],
        f_grid_mhz: &[f64],
    ) -> Result<Vec<f64>> {
        wb_predict_grid(tau_us, phi_rad, calib, &self.cfg, f_grid_mhz)
    }
}

/// Trained graybox model.
#[derive(Debug, Clone)]
pub struct GrayboxProvider {
    model: GrayboxParams,
}

impl GrayboxProvider {
    pub fn new(model: GrayboxParams) -> Result<Self> {
        model.validate()?;
        Ok(GrayboxProvider { model })
    }

    pub fn model(&self) -> &GrayboxParams {
        &self.model
    }
}

impl LikelihoodProvider for GrayboxProvider {
    fn name(&self) -> &'static str {
        "graybox"
    }

    fn predict_grid(
        &self,
        tau_us: f64,
        phi_rad: f64,
        calib: &ReadoutCalibration,
        chi: &[f64],
        f_grid_mhz: &[f64],
    ) -> Result<Vec<f64>> {
        gb_predict_grid(&self.model, tau_us, phi_rad, calib, chi, f_grid_mhz)
    }
}

/// Monte-Carlo estimate from the noisy simulator itself. Every grid node is
/// evaluated with the same seed, so noise realizations are common across the
/// grid and the predicted curve stays smooth in f.
#[derive(Debug, Clone)]
pub struct SimulatorProvider {
    config: NoiseConfig,
    mc_shots: usize,
    seed: StreamSeed,
}

impl SimulatorProvider {
    pub fn new(config: NoiseConfig, mc_shots: usize, seed: StreamSeed) -> Self {
        SimulatorProvider {
            config,
            mc_shots,
            seed,
        }
    }
}

impl LikelihoodProvider for SimulatorProvider {
    fn name(&self) -> &'static str {
        "simulator"
    }

    fn predict_grid(
        &self,
        tau_us: f64,
        phi_rad: f64,
        calib: &ReadoutCalibration,
        chi: &[f64],
        f_grid_mhz: &[f64],
    ) -> Result<Vec<f64>> {
        f_grid_mhz
            .iter()
            .map(|&f| {
                let settings = PulseSettings::with_chi(tau_us, phi_rad, f, chi.to_vec())?;
                let (z, _) = mc_expectation_z(&settings, &self.config, self.mc_shots, self.seed)?;
                click_probability(z, calib)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::whitebox::wb_click_probability;

    fn calib() -> ReadoutCalibration {
        ReadoutCalibration::new(0.03, 0.02).unwrap()
    }

    #[test]
    fn whitebox_provider_matches_pointwise_model() {
        let cfg = WhiteboxConfig::new(5.4).unwrap();
        let provider = WhiteboxProvider::new(cfg.clone());
        let grid: Vec<f64> = (0..=40).map(|i| 0.05 * i as f64).collect();
        let p = provider
            .predict_grid(1.7, 0.3, &calib(), &[], &grid)
            .unwrap();
        for (&f, &pi) in grid.iter().zip(&p) {
            let settings = PulseSettings::new(1.7, 0.3, f).unwrap();
            let want = wb_click_probability(&settings, &cfg, &calib()).unwrap();
            assert_eq!(pi, want);
        }
    }

    #[test]
    fn simulator_provider_is_deterministic_and_agrees_when_noiseless() {
        let seed = StreamSeed::new(99);
        let provider = SimulatorProvider::new(NoiseConfig::noiseless(), 1, seed);
        let grid: Vec<f64> = (0..=20).map(|i| 0.1 * i as f64).collect();
        let p1 = provider.predict_grid(0.9, 1.1, &calib(), &[], &grid).unwrap();
        let p2 = provider.predict_grid(0.9, 1.1, &calib(), &[], &grid).unwrap();
        assert_eq!(p1, p2);
        // with no noise a single shot of the mean path is the exact model
        let wb = WhiteboxProvider::new(WhiteboxConfig::no_decay());
        let exact = wb.predict_grid(0.9, 1.1, &calib(), &[], &grid).unwrap();
        for (a, b) in p1.iter().zip(&exact) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }
}
