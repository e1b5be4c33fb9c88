//! Grid-based Bayesian inference of the qubit frequency from click-count
//! batches. The posterior lives on a fixed uniform grid over [f_min, f_max]
//! and every integral is the trapezoidal rule on that grid. Updates multiply
//! in a count likelihood supplied by any model that can predict P_cl over the
//! grid; all accumulation happens in log space with a max-log shift, and a
//! batch whose normalization N′ would underflow is skipped rather than
//! applied.

mod providers;
mod runner;

pub use providers::{GrayboxProvider, SimulatorProvider, WhiteboxProvider};
pub use runner::{
    run_estimation, write_trace_csv, EstimationOptions, EstimationResult, EstimationTrace,
    OrderingOutcome,
};

use crate::error::{Error, Result};
use crate::quantum::ReadoutCalibration;
use crate::sim::DatasetRecord;
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

/// Updates whose linear-space normalization N′ falls at or below this are
/// skipped, leaving the posterior untouched.
pub const ETA_DEGENERATE: f64 = 1e-300;

/// Probability density over the frequency search interval, discretized on
/// M subintervals (M+1 nodes).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PosteriorGrid {
    f_min_mhz: f64,
    f_max_mhz: f64,
    nodes: Vec<f64>,
    /// Density per MHz at each node.
    density: Vec<f64>,
}

impl PosteriorGrid {
    /// Flat prior: density 1/(f_max − f_min), renormalized so the trapezoidal
    /// integral is 1 to machine precision.
    pub fn uniform_prior(f_min_mhz: f64, f_max_mhz: f64, m_subintervals: usize) -> Result<Self> {
        if !f_min_mhz.is_finite() || !f_max_mhz.is_finite() || f_min_mhz >= f_max_mhz {
            return Err(Error::invalid(format!(
                "frequency interval [{f_min_mhz}, {f_max_mhz}] MHz is degenerate"
            )));
        }
        if m_subintervals < 2 {
            return Err(Error::GridTooCoarse(format!(
                "need at least 2 subintervals, got {m_subintervals}"
            )));
        }
        let m = m_subintervals;
        let h = (f_max_mhz - f_min_mhz) / m as f64;
        let mut nodes: Vec<f64> = (0..=m).map(|i| f_min_mhz + h * i as f64).collect();
        nodes[m] = f_max_mhz;
        let c = 1.0 / (f_max_mhz - f_min_mhz);
        let mut density = vec![c; m + 1];
        let t = trapezoid(&density, h);
        for d in &mut density {
            *d /= t;
        }
        Ok(PosteriorGrid {
            f_min_mhz,
            f_max_mhz,
            nodes,
            density,
        })
    }

    pub fn f_min_mhz(&self) -> f64 {
        self.f_min_mhz
    }

    pub fn f_max_mhz(&self) -> f64 {
        self.f_max_mhz
    }

    pub fn m_subintervals(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Grid spacing in MHz.
    pub fn spacing_mhz(&self) -> f64 {
        (self.f_max_mhz - self.f_min_mhz) / self.m_subintervals() as f64
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    /// Trapezoidal integral of the density; 1 within 1e-9 by invariant.
    pub fn norm(&self) -> f64 {
        trapezoid(&self.density, self.spacing_mhz())
    }
}

/// Composite trapezoidal rule on uniformly spaced samples.
pub fn trapezoid(values: &[f64], spacing: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mut sum = 0.5 * (values[0] + values[n - 1]);
    for v in &values[1..n - 1] {
        sum += v;
    }
    sum * spacing
}

/// One click-count batch as the estimator sees it: the swept frequency is
/// deliberately absent — it is the inference target.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementBatch {
    pub tau_us: f64,
    pub phi_rad: f64,
    pub chi: Vec<f64>,
    pub calib: ReadoutCalibration,
    pub repetitions: u64,
    pub clicks: u64,
}

impl MeasurementBatch {
    pub fn validate(&self) -> Result<()> {
        if !self.tau_us.is_finite() || self.tau_us < 0.0 {
            return Err(Error::invalid(format!("tau must be >= 0, got {}", self.tau_us)));
        }
        if !self.phi_rad.is_finite() {
            return Err(Error::invalid("phi must be finite"));
        }
        if self.chi.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("chi entries must be finite"));
        }
        if self.repetitions == 0 {
            return Err(Error::invalid("batch needs at least one repetition"));
        }
        if self.clicks > self.repetitions {
            return Err(Error::invalid(format!(
                "clicks {} exceed repetitions {}",
                self.clicks, self.repetitions
            )));
        }
        Ok(())
    }
}

impl From<&DatasetRecord> for MeasurementBatch {
    fn from(rec: &DatasetRecord) -> Self {
        MeasurementBatch {
            tau_us: rec.settings.tau_us,
            phi_rad: rec.settings.phi_rad,
            chi: rec.settings.chi.clone(),
            calib: rec.calib,
            repetitions: rec.repetitions,
            clicks: rec.clicks,
        }
    }
}

/// How P(r | P_cl, R) is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LikelihoodMode {
    Binomial,
    Gaussian,
    /// Gaussian when both r and R − r are at least 25, binomial otherwise.
    Auto,
}

impl Default for LikelihoodMode {
    fn default() -> Self {
        LikelihoodMode::Auto
    }
}

impl LikelihoodMode {
    /// Collapse Auto for a concrete count pair.
    pub fn resolve(self, clicks: u64, repetitions: u64) -> LikelihoodMode {
        match self {
            LikelihoodMode::Auto => {
                if clicks.min(repetitions - clicks) >= 25 {
                    LikelihoodMode::Gaussian
                } else {
                    LikelihoodMode::Binomial
                }
            }
            other => other,
        }
    }
}

/// ln P(r | R, p_cl). Binomial: ln C(R,r) + r ln p + (R−r) ln(1−p).
/// Gaussian: log-density of N(μ = p·R, σ²) at r, where σ² = r(R−r)/R floored
/// at max(1, R·p̂(1−p̂)) with p̂ = clamp(r/R, 1/R, 1−1/R) so counts at the
/// boundary never produce a delta.
pub fn log_count_likelihood(
    clicks: u64,
    repetitions: u64,
    p_cl: f64,
    mode: LikelihoodMode,
) -> Result<f64> {
    if repetitions == 0 {
        return Err(Error::invalid("repetitions must be at least 1"));
    }
    if clicks > repetitions {
        return Err(Error::invalid(format!(
            "clicks {clicks} exceed repetitions {repetitions}"
        )));
    }
    if !(0.0..=1.0).contains(&p_cl) {
        return Err(Error::invalid(format!("p_cl {p_cl} outside [0,1]")));
    }
    let r = clicks as f64;
    let n = repetitions as f64;
    Ok(match mode.resolve(clicks, repetitions) {
        LikelihoodMode::Binomial => {
            let ln_choose = ln_gamma(n + 1.0) - ln_gamma(r + 1.0) - ln_gamma(n - r + 1.0);
            // r·ln p with the 0·ln 0 = 0 convention at the boundaries
            let hit = if clicks == 0 { 0.0 } else { r * p_cl.ln() };
            let miss = if clicks == repetitions {
                0.0
            } else {
                (n - r) * (-p_cl).ln_1p()
            };
            ln_choose + hit + miss
        }
        LikelihoodMode::Gaussian => {
            let p_hat = (r / n).clamp(1.0 / n, 1.0 - 1.0 / n);
            let floor = (n * p_hat * (1.0 - p_hat)).max(1.0);
            let var = (r * (n - r) / n).max(floor);
            let mu = p_cl * n;
            -0.5 * (std::f64::consts::TAU * var).ln() - (r - mu) * (r - mu) / (2.0 * var)
        }
        LikelihoodMode::Auto => unreachable!("resolve removes Auto"),
    })
}

/// Linear-space count likelihood; prefer the log form inside updates.
pub fn count_likelihood(
    clicks: u64,
    repetitions: u64,
    p_cl: f64,
    mode: LikelihoodMode,
) -> Result<f64> {
    Ok(log_count_likelihood(clicks, repetitions, p_cl, mode)?.exp())
}

/// A model that can predict the click probability over a frequency grid.
/// Implementations must be pure in the sense that repeated calls with the
/// same arguments return the same values.
pub trait LikelihoodProvider: Sync {
    fn name(&self) -> &'static str;

    fn predict_grid(
        &self,
        tau_us: f64,
        phi_rad: f64,
        calib: &ReadoutCalibration,
        chi: &[f64],
        f_grid_mhz: &[f64],
    ) -> Result<Vec<f64>>;
}

/// ln P(r | f) over the grid nodes for one batch: provider predictions fed
/// through the count likelihood. This is the cacheable part of an update.
pub fn batch_log_likelihood(
    grid: &PosteriorGrid,
    batch: &MeasurementBatch,
    provider: &dyn LikelihoodProvider,
    mode: LikelihoodMode,
) -> Result<Vec<f64>> {
    batch.validate()?;
    let p = provider.predict_grid(
        batch.tau_us,
        batch.phi_rad,
        &batch.calib,
        &batch.chi,
        grid.nodes(),
    )?;
    if p.len() != grid.nodes().len() {
        return Err(Error::invalid(format!(
            "provider returned {} probabilities for {} grid nodes",
            p.len(),
            grid.nodes().len()
        )));
    }
    p.iter()
        .map(|&p_cl| {
            if !p_cl.is_finite() {
                return Err(Error::NumericOverflow(format!(
                    "provider predicted non-finite P_cl {p_cl}"
                )));
            }
            // tolerate rounding just past the ends of [0,1]
            if !(-1e-9..=1.0 + 1e-9).contains(&p_cl) {
                return Err(Error::invalid(format!(
                    "provider predicted P_cl {p_cl} outside [0,1]"
                )));
            }
            log_count_likelihood(batch.clicks, batch.repetitions, p_cl.clamp(0.0, 1.0), mode)
        })
        .collect()
}

/// Core Bayes step on a precomputed log-likelihood vector. Returns the new
/// posterior and whether the update was skipped because N′ ≤ η.
pub fn update_with_log_likelihood(
    prior: &PosteriorGrid,
    log_like: &[f64],
) -> Result<(PosteriorGrid, bool)> {
    if log_like.len() != prior.nodes.len() {
        return Err(Error::invalid(format!(
            "{} log-likelihood values for {} grid nodes",
            log_like.len(),
            prior.nodes.len()
        )));
    }
    if log_like.iter().any(|l| l.is_nan()) {
        return Err(Error::NumericOverflow("NaN in batch log-likelihood".into()));
    }
    // log posterior up to normalization; ln(0) = −inf is fine here
    let log_post: Vec<f64> = prior
        .density
        .iter()
        .zip(log_like)
        .map(|(&d, &ll)| d.ln() + ll)
        .collect();
    let shift = log_post.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !shift.is_finite() {
        return Ok((prior.clone(), true));
    }
    let weights: Vec<f64> = log_post.iter().map(|&lp| (lp - shift).exp()).collect();
    let t = trapezoid(&weights, prior.spacing_mhz());
    let n_prime = shift.exp() * t;
    if !(n_prime > ETA_DEGENERATE) {
        return Ok((prior.clone(), true));
    }
    let density: Vec<f64> = weights.iter().map(|&w| w / t).collect();
    let out = PosteriorGrid {
        f_min_mhz: prior.f_min_mhz,
        f_max_mhz: prior.f_max_mhz,
        nodes: prior.nodes.clone(),
        density,
    };
    let norm = out.norm();
    if !((norm - 1.0).abs() < 1e-9) {
        return Err(Error::NumericOverflow(format!(
            "posterior renormalization failed: integral {norm}"
        )));
    }
    Ok((out, false))
}

/// One Bayesian update from a measurement batch via a likelihood provider.
pub fn update(
    prior: &PosteriorGrid,
    batch: &MeasurementBatch,
    provider: &dyn LikelihoodProvider,
    mode: LikelihoodMode,
) -> Result<(PosteriorGrid, bool)> {
    let log_like = batch_log_likelihood(prior, batch, provider, mode)?;
    update_with_log_likelihood(prior, &log_like)
}

/// Posterior mean ∫ f·P(f) df — the point estimate f̂.
pub fn mean_estimate(post: &PosteriorGrid) -> f64 {
    let integrand: Vec<f64> = post
        .nodes
        .iter()
        .zip(&post.density)
        .map(|(&f, &d)| f * d)
        .collect();
    trapezoid(&integrand, post.spacing_mhz())
}

/// Posterior variance ∫ (f − f̂)²·P(f) df.
pub fn variance(post: &PosteriorGrid, f_hat_mhz: f64) -> f64 {
    let integrand: Vec<f64> = post
        .nodes
        .iter()
        .zip(&post.density)
        .map(|(&f, &d)| (f - f_hat_mhz) * (f - f_hat_mhz) * d)
        .collect();
    trapezoid(&integrand, post.spacing_mhz())
}

/// E(f̂, f_true) = (f̂ − f_true)².
pub fn squared_error(f_hat_mhz: f64, f_true_mhz: f64) -> f64 {
    (f_hat_mhz - f_true_mhz) * (f_hat_mhz - f_true_mhz)
}
