//! Noisy-qubit Ramsey simulator: the stand-in for the experiment.
//!
//! One simulated shot is a classical noise draw (quasi-static detuning, an
//! optional Ornstein-Uhlenbeck dephasing path, a preparation phase kick)
//! propagated through the pulse sequence
//!
//!   prep kick -> pulse 1 (X) -> free evolution τ -> frame advance φ -> pulse 2 (X)
//!
//! with every step an exact 2x2 exponential of the Hamiltonian frozen at the
//! step midpoint. The detection phase φ is implemented as an instantaneous
//! Z rotation before the second pulse, so the noiseless impulse limit equals
//! the ideal Ramsey unitary as a matrix, not merely in populations.
//!
//! Conventions: the free Hamiltonian is 2π f σ_z/2 (f in MHz, t in μs), so the
//! accumulated two-level phase over τ is exactly 2π f τ. A π/2 pulse about X
//! has Rabi amplitude Ω0 = (π/2)/pulse_width, scaled by (1 + amp_error) and
//! shaped by a first-order low-pass (time constant distortion_tau) whose
//! response is truncated at the nominal pulse window; the lost area is the
//! imperfection. Filter state does not carry across pulses.

pub mod dataset;

use crate::error::{Error, Result};
use crate::quantum::{
    click_probability, su2_exponential, u_ramsey, NoiseOperator, Operator2, PulseSettings,
    QubitState, ReadoutCalibration,
};
use crate::seed::StreamSeed;
use rand::Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

pub use dataset::{generate_dataset, read_dataset, write_dataset, DatasetPlan, DatasetRecord};

/// Classical noise and pulse-imperfection settings. All fields are optional
/// imperfections; the all-zero config is the ideal impulse-pulse experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Preparation noise power A_p·T_p (dimensionless phase variance of the
    /// white σ_x kick). See [`NoiseConfig::with_prep_epsilon`].
    pub prep_noise_power: f64,
    /// Std-dev of the quasi-static detuning in MHz (drawn once per shot).
    pub sigma_f_mhz: f64,
    /// Ornstein-Uhlenbeck dephasing amplitude (stationary std-dev, MHz).
    pub ou_amplitude_mhz: f64,
    /// OU correlation time in μs (0 with nonzero amplitude = white limit).
    pub ou_tau_c_us: f64,
    /// π/2-pulse duration in μs; 0 means impulse pulses.
    pub pulse_width_us: f64,
    /// First-order low-pass time constant applied to pulse envelopes (μs).
    /// Ignored for impulse pulses.
    pub distortion_tau_us: f64,
    /// Fractional Rabi-amplitude error (0.1 = 10% over-rotation).
    pub amp_error: f64,
    /// Std-dev of per-batch π0/π1 drift.
    pub calib_jitter: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            prep_noise_power: 0.0,
            sigma_f_mhz: 0.0,
            ou_amplitude_mhz: 0.0,
            ou_tau_c_us: 0.0,
            pulse_width_us: 0.0,
            distortion_tau_us: 0.0,
            amp_error: 0.0,
            calib_jitter: 0.0,
        }
    }
}

impl NoiseConfig {
    pub fn noiseless() -> Self {
        NoiseConfig::default()
    }

    /// Set the preparation noise power from the target steady-state
    /// excited-state population ε: A_p·T_p = −½ ln(1 − 2ε).
    pub fn with_prep_epsilon(mut self, epsilon: f64) -> Result<Self> {
        if !(0.0..0.5).contains(&epsilon) {
            return Err(Error::invalid(format!(
                "prep epsilon must lie in [0, 0.5), got {epsilon}"
            )));
        }
        self.prep_noise_power = -0.5 * (1.0 - 2.0 * epsilon).ln();
        Ok(self)
    }

    /// ε implied by the configured noise power: (1 − e^(−2·A_pT_p))/2.
    pub fn prep_epsilon(&self) -> f64 {
        0.5 * (1.0 - (-2.0 * self.prep_noise_power).exp())
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("prep_noise_power", self.prep_noise_power),
            ("sigma_f_mhz", self.sigma_f_mhz),
            ("ou_amplitude_mhz", self.ou_amplitude_mhz),
            ("ou_tau_c_us", self.ou_tau_c_us),
            ("pulse_width_us", self.pulse_width_us),
            ("distortion_tau_us", self.distortion_tau_us),
            ("amp_error", self.amp_error),
            ("calib_jitter", self.calib_jitter),
        ];
        for (name, v) in fields {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::invalid(format!(
                    "noise config field {name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }

    fn has_ou(&self) -> bool {
        self.ou_amplitude_mhz > 0.0
    }
}

/// Discretization of one pulse sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub dt_us: f64,
    pub n_steps: usize,
}

const MAX_GRID_STEPS: usize = 20_000_000;

impl TimeGrid {
    pub fn new(dt_us: f64, n_steps: usize) -> Result<Self> {
        if !(dt_us > 0.0 && dt_us.is_finite()) {
            return Err(Error::invalid(format!("grid dt must be positive, got {dt_us}")));
        }
        if n_steps == 0 {
            return Err(Error::invalid("grid needs at least one step"));
        }
        Ok(TimeGrid { dt_us, n_steps })
    }

    /// Choose a step fine enough for the given sequence: dt ≤ pulse_width/10
    /// and ≤ 1/(50·f_max) when pulses are finite, plus ≤ τ_c/10 and ≤ τ/100
    /// when an OU path must be resolved. Sequences needing no sub-stepping
    /// (impulse pulses, no OU) get a trivial one-step grid: the free segment
    /// is integrated exactly in closed form.
    pub fn for_sequence(settings: &PulseSettings, config: &NoiseConfig) -> Result<TimeGrid> {
        config.validate()?;
        let w = config.pulse_width_us;
        let tau = settings.tau_us;
        let total = 2.0 * w + tau;

        // 4σ covers essentially all noise draws when bounding the fastest phase.
        let mut f_max = settings.f_b_mhz.abs()
            + 4.0 * config.sigma_f_mhz
            + 4.0 * config.ou_amplitude_mhz;
        if w > 0.0 {
            f_max += 0.25 / w; // Rabi frequency of a π/2 pulse
        }

        let mut bound = f64::INFINITY;
        if w > 0.0 {
            bound = bound.min(w / 10.0);
            if f_max > 0.0 {
                bound = bound.min(1.0 / (50.0 * f_max));
            }
        }
        if config.has_ou() {
            if config.ou_tau_c_us > 0.0 {
                bound = bound.min(config.ou_tau_c_us / 10.0);
            }
            if tau > 0.0 {
                bound = bound.min(tau / 100.0);
            }
            if f_max > 0.0 {
                bound = bound.min(1.0 / (50.0 * f_max));
            }
        }

        if !bound.is_finite() {
            // No sub-stepping needed anywhere.
            return TimeGrid::new(total.max(1e-3), 1);
        }
        let dt = bound.min(if total > 0.0 { total } else { bound });
        let n = (total / dt).ceil().max(1.0);
        if n > MAX_GRID_STEPS as f64 {
            return Err(Error::invalid(format!(
                "sequence needs {n:.0} integration steps (limit {MAX_GRID_STEPS}); \
                 shorten the sequence or relax the noise bandwidth"
            )));
        }
        TimeGrid::new(dt, n as usize)
    }

    fn total_us(&self) -> f64 {
        self.dt_us * self.n_steps as f64
    }
}

/// One classical noise draw. `dephasing_trace` holds the OU detuning at the
/// midpoint of every grid step; it is empty when the OU process is disabled
/// so that quasi-static-only runs stay allocation-free.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRealization {
    pub static_detuning_mhz: f64,
    pub dephasing_trace: Vec<f64>,
    pub prep_phase: f64,
}

impl NoiseRealization {
    pub fn quiet() -> Self {
        NoiseRealization {
            static_detuning_mhz: 0.0,
            dephasing_trace: Vec::new(),
            prep_phase: 0.0,
        }
    }
}

/// Draw one noise realization. Draw order is fixed (static detuning, prep
/// phase, OU path) so identical seeds give identical realizations.
pub fn sample_noise_realization(
    config: &NoiseConfig,
    grid: &TimeGrid,
    seed: StreamSeed,
) -> NoiseRealization {
    let mut rng = seed.rng();
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };

    let static_detuning_mhz = if config.sigma_f_mhz > 0.0 {
        config.sigma_f_mhz * normal()
    } else {
        0.0
    };
    let prep_phase = if config.prep_noise_power > 0.0 {
        config.prep_noise_power.sqrt() * normal()
    } else {
        0.0
    };
    let dephasing_trace = if config.has_ou() {
        let amp = config.ou_amplitude_mhz;
        // Exact stationary AR(1) discretization of the OU process at the
        // grid-step midpoints; τ_c = 0 degenerates to white noise.
        let rho = if config.ou_tau_c_us > 0.0 {
            (-grid.dt_us / config.ou_tau_c_us).exp()
        } else {
            0.0
        };
        let innov = amp * (1.0 - rho * rho).sqrt();
        let mut trace = Vec::with_capacity(grid.n_steps);
        let mut x = amp * normal();
        trace.push(x);
        for _ in 1..grid.n_steps {
            x = rho * x + innov * normal();
            trace.push(x);
        }
        trace
    } else {
        Vec::new()
    };

    NoiseRealization {
        static_detuning_mhz,
        dephasing_trace,
        prep_phase,
    }
}

fn detuning_at(
    t_us: f64,
    settings: &PulseSettings,
    realization: &NoiseRealization,
    grid: &TimeGrid,
) -> f64 {
    let mut f = settings.f_b_mhz + realization.static_detuning_mhz;
    if !realization.dephasing_trace.is_empty() {
        let idx = ((t_us / grid.dt_us) as usize).min(realization.dephasing_trace.len() - 1);
        f += realization.dephasing_trace[idx];
    }
    f
}

/// Unitary for one finite-width X pulse starting at global time `t0`.
fn pulse_unitary(
    t0_us: f64,
    settings: &PulseSettings,
    config: &NoiseConfig,
    realization: &NoiseRealization,
    grid: &TimeGrid,
) -> Operator2 {
    let w = config.pulse_width_us;
    let scale = 1.0 + config.amp_error;
    if w == 0.0 {
        // Impulse limit: detuning accumulates no phase in zero time.
        return su2_exponential([0.5 * FRAC_PI_2 * scale, 0.0, 0.0]);
    }
    let omega0 = scale * FRAC_PI_2 / w; // rad/μs
    let n_sub = (w / grid.dt_us).ceil().max(1.0) as usize;
    let h = w / n_sub as f64;
    let mut u = Operator2::identity();
    for j in 0..n_sub {
        let t_local = (j as f64 + 0.5) * h;
        let envelope = if config.distortion_tau_us > 0.0 {
            1.0 - (-t_local / config.distortion_tau_us).exp()
        } else {
            1.0
        };
        let omega = omega0 * envelope;
        let f = detuning_at(t0_us + t_local, settings, realization, grid);
        u = su2_exponential([0.5 * omega * h, 0.0, PI * f * h]).mul(&u);
    }
    u
}

fn free_unitary(
    t0_us: f64,
    settings: &PulseSettings,
    config: &NoiseConfig,
    realization: &NoiseRealization,
    grid: &TimeGrid,
) -> Operator2 {
    let tau = settings.tau_us;
    if tau == 0.0 {
        return Operator2::identity();
    }
    if !config.has_ou() {
        // Constant Hamiltonian: one exact step.
        let f = settings.f_b_mhz + realization.static_detuning_mhz;
        return su2_exponential([0.0, 0.0, PI * f * tau]);
    }
    let n_sub = (tau / grid.dt_us).ceil().max(1.0) as usize;
    let h = tau / n_sub as f64;
    let mut u = Operator2::identity();
    for j in 0..n_sub {
        let t = t0_us + (j as f64 + 0.5) * h;
        let f = detuning_at(t, settings, realization, grid);
        u = su2_exponential([0.0, 0.0, PI * f * h]).mul(&u);
    }
    u
}

/// Total-sequence unitary for one noise realization.
pub fn propagate(
    settings: &PulseSettings,
    config: &NoiseConfig,
    realization: &NoiseRealization,
    grid: &TimeGrid,
) -> Result<Operator2> {
    let w = config.pulse_width_us;
    if w > 0.0 && grid.dt_us > w / 10.0 * (1.0 + 1e-9) {
        return Err(Error::GridTooCoarse(format!(
            "dt = {} μs exceeds pulse_width/10 = {} μs",
            grid.dt_us,
            w / 10.0
        )));
    }
    if config.has_ou() {
        if realization.dephasing_trace.len() != grid.n_steps {
            return Err(Error::invalid(format!(
                "dephasing trace has {} samples, grid has {} steps",
                realization.dephasing_trace.len(),
                grid.n_steps
            )));
        }
        if grid.total_us() + 1e-12 < 2.0 * w + settings.tau_us {
            return Err(Error::GridTooCoarse(
                "time grid shorter than the pulse sequence".into(),
            ));
        }
    }

    // Prep kick: exp(−i b σx) with b the accumulated white-noise phase.
    let mut u = su2_exponential([realization.prep_phase, 0.0, 0.0]);
    let mut t = 0.0;

    u = pulse_unitary(t, settings, config, realization, grid).mul(&u);
    t += w;

    u = free_unitary(t, settings, config, realization, grid).mul(&u);
    t += settings.tau_us;

    // Detection phase as an instantaneous frame advance before the last pulse.
    u = su2_exponential([0.0, 0.0, 0.5 * settings.phi_rad]).mul(&u);
    u = pulse_unitary(t, settings, config, realization, grid).mul(&u);

    debug_assert!(u.is_unitary(1e-10));
    Ok(u)
}

fn mean_and_std_err(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Monte-Carlo ⟨Z⟩ after the sequence, starting from `state`.
pub fn mc_expectation_z_from(
    state: &QubitState,
    settings: &PulseSettings,
    config: &NoiseConfig,
    n_shots: usize,
    seed: StreamSeed,
) -> Result<(f64, f64)> {
    if n_shots == 0 {
        return Err(Error::invalid("mc_expectation_z requires at least one shot"));
    }
    let grid = TimeGrid::for_sequence(settings, config)?;
    let z = Operator2::pauli_z();
    let samples: Vec<f64> = (0..n_shots)
        .into_par_iter()
        .map(|i| {
            let realization = sample_noise_realization(config, &grid, seed.child(i as u64));
            let u = propagate(settings, config, &realization, &grid)?;
            let rho = u.mul(state.density()).mul(&u.adjoint());
            Ok(rho.mul(&z).trace().re)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(mean_and_std_err(&samples))
}

/// Monte-Carlo ⟨Z⟩ from the ground state: the simulator's measurement record.
pub fn mc_expectation_z(
    settings: &PulseSettings,
    config: &NoiseConfig,
    n_shots: usize,
    seed: StreamSeed,
) -> Result<(f64, f64)> {
    mc_expectation_z_from(&QubitState::ground(), settings, config, n_shots, seed)
}

/// The four fiducial initial states used by reconstruction checks.
pub fn fiducial_states() -> [QubitState; 4] {
    [
        QubitState::ground(),
        QubitState::excited(),
        QubitState::plus(),
        QubitState::plus_i(),
    ]
}

/// Brute-force noise-operator estimate with its own reconstruction statistics.
#[derive(Debug, Clone)]
pub struct NoiseOperatorEstimate {
    pub operator: NoiseOperator,
    /// Mean of tr(V ρ̃ Z) over shots, per fiducial state, with its standard
    /// error — for comparison against an independent Monte-Carlo ⟨Z⟩.
    pub reconstruction_mean: [f64; 4],
    pub reconstruction_std_err: [f64; 4],
}

/// Estimate V_Z = Z·⟨Ũ† Z Ũ⟩ with Ũ = U_total·U_Ramsey†. With this frame
/// choice the contraction tr(V_Z ρ̃ Z), ρ̃ = U_Ramsey ρ0 U_Ramsey†, equals the
/// Monte-Carlo ⟨Z⟩ for every initial state ρ0 (trace cyclicity and Z² = I),
/// and V_Z = I exactly in the noiseless limit.
pub fn noise_operator_oracle(
    settings: &PulseSettings,
    config: &NoiseConfig,
    n_shots: usize,
    seed: StreamSeed,
) -> Result<NoiseOperatorEstimate> {
    if n_shots == 0 {
        return Err(Error::invalid("noise_operator_oracle requires at least one shot"));
    }
    let grid = TimeGrid::for_sequence(settings, config)?;
    let z = Operator2::pauli_z();
    let u_ram = u_ramsey(settings);
    let u_ram_dag = u_ram.adjoint();

    let per_shot: Vec<Operator2> = (0..n_shots)
        .into_par_iter()
        .map(|i| {
            let realization = sample_noise_realization(config, &grid, seed.child(i as u64));
            let u_total = propagate(settings, config, &realization, &grid)?;
            let u_tilde = u_total.mul(&u_ram_dag);
            Ok(u_tilde.adjoint().mul(&z).mul(&u_tilde))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut mean = Operator2::zero();
    for m in &per_shot {
        mean = mean.add(m);
    }
    let mean = mean.scale_re(1.0 / n_shots as f64);
    let operator = NoiseOperator::from_matrix(z.mul(&mean));

    let mut reconstruction_mean = [0.0; 4];
    let mut reconstruction_std_err = [0.0; 4];
    for (k, state) in fiducial_states().iter().enumerate() {
        let rho_tilde = u_ram.mul(state.density()).mul(&u_ram_dag);
        let samples: Vec<f64> = per_shot
            .iter()
            .map(|m| z.mul(m).mul(&rho_tilde).mul(&z).trace().re)
            .collect();
        let (m, se) = mean_and_std_err(&samples);
        reconstruction_mean[k] = m;
        reconstruction_std_err[k] = se;
    }

    Ok(NoiseOperatorEstimate {
        operator,
        reconstruction_mean,
        reconstruction_std_err,
    })
}

/// Monte-Carlo statistics of the preparation channel.
#[derive(Debug, Clone, Copy)]
pub struct PrepChannelStats {
    pub epsilon_mc: f64,
    pub epsilon_std_err: f64,
    pub gamma_mc: f64,
    pub gamma_std_err: f64,
}

/// Simulate the white-σx preparation channel alone: per shot, evolve |0> under
/// exp(−i b σx) with b ~ Normal(0, A_pT_p) and record the excited population
/// (→ ε) and ⟨Z⟩ = cos 2b (→ Γ). The channel satisfies Γ = 1 − 2ε pointwise;
/// the ensemble mean approaches Γ = e^(−2·A_pT_p).
pub fn prep_channel_check(
    a_p_t_p: f64,
    n_shots: usize,
    seed: StreamSeed,
) -> Result<PrepChannelStats> {
    if !a_p_t_p.is_finite() || a_p_t_p < 0.0 {
        return Err(Error::invalid(format!(
            "prep noise power must be finite and >= 0, got {a_p_t_p}"
        )));
    }
    if n_shots == 0 {
        return Err(Error::invalid("prep_channel_check requires at least one shot"));
    }
    let sigma = a_p_t_p.sqrt();
    let mut rng = seed.rng();
    let mut eps_samples = Vec::with_capacity(n_shots);
    let mut gamma_samples = Vec::with_capacity(n_shots);
    let z = Operator2::pauli_z();
    for _ in 0..n_shots {
        let x: f64 = StandardNormal.sample(&mut rng);
        let b = sigma * x;
        let u = su2_exponential([b, 0.0, 0.0]);
        let rho = u.mul(QubitState::ground().density()).mul(&u.adjoint());
        eps_samples.push(rho.entries[1][1].re);
        gamma_samples.push(rho.mul(&z).trace().re);
    }
    let (epsilon_mc, epsilon_std_err) = mean_and_std_err(&eps_samples);
    let (gamma_mc, gamma_std_err) = mean_and_std_err(&gamma_samples);
    Ok(PrepChannelStats {
        epsilon_mc,
        epsilon_std_err,
        gamma_mc,
        gamma_std_err,
    })
}

/// Apply per-batch calibration drift, clamped to [0,1] with a warning.
fn jittered_calibration(
    nominal: &ReadoutCalibration,
    jitter: f64,
    rng: &mut impl Rng,
) -> ReadoutCalibration {
    if jitter == 0.0 {
        return *nominal;
    }
    let mut draw = |v: f64| -> f64 {
        let x: f64 = StandardNormal.sample(rng);
        let moved = v + jitter * x;
        if !(0.0..=1.0).contains(&moved) {
            log::warn!("calibration drift pushed {v} to {moved}; clamping to [0,1]");
        }
        moved.clamp(0.0, 1.0)
    };
    let pi0 = draw(nominal.pi0);
    let mut pi1 = draw(nominal.pi1);
    if pi0 + pi1 == 0.0 {
        log::warn!("calibration drift produced a degenerate (0,0) pair; restoring pi1");
        pi1 = nominal.pi1.max(1e-9);
    }
    ReadoutCalibration::new(pi0, pi1).expect("clamped calibration is valid")
}

/// Simulate one measurement batch: estimate ⟨Z⟩ with `mc_shots` noise draws,
/// map through the (jittered) calibration, then draw r ~ Binomial(R, P_cl).
pub fn simulate_batch(
    settings: &PulseSettings,
    config: &NoiseConfig,
    nominal_calib: &ReadoutCalibration,
    repetitions: u64,
    mc_shots: usize,
    seed: StreamSeed,
) -> Result<DatasetRecord> {
    if repetitions == 0 {
        return Err(Error::invalid("batch needs at least one repetition"));
    }
    let mut rng = seed.child(0).rng();
    let calib = jittered_calibration(nominal_calib, config.calib_jitter, &mut rng);
    let (z_mean, _) = mc_expectation_z(settings, config, mc_shots, seed.child(1))?;
    let p_cl = click_probability(z_mean, &calib)?;
    let clicks = Binomial::new(repetitions, p_cl)
        .map_err(|e| Error::invalid(format!("invalid binomial parameters: {e}")))?
        .sample(&mut seed.child(2).rng());
    Ok(DatasetRecord {
        settings: settings.clone(),
        calib,
        repetitions,
        clicks,
        p_cl: clicks as f64 / repetitions as f64,
        set_id: 0,
        truth_f_b_mhz: settings.f_b_mhz,
    })
}

/// Fit T2* from a (τ, ⟨Z⟩) sweep taken at θ = 0: regress ln(−⟨Z⟩) on τ² and
/// read the dephasing time off the slope. Points with ⟨Z⟩ ≥ −1e-3 are
/// discarded (log undefined / noise-dominated).
pub fn fit_gaussian_envelope(taus_us: &[f64], z_means: &[f64]) -> Result<f64> {
    if taus_us.len() != z_means.len() {
        return Err(Error::invalid("tau and <Z> arrays differ in length"));
    }
    let pts: Vec<(f64, f64)> = taus_us
        .iter()
        .zip(z_means)
        .filter(|(_, &z)| z < -1e-3)
        .map(|(&t, &z)| (t * t, (-z).ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::invalid(
            "need at least 3 usable points to fit the dephasing envelope",
        ));
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-30 {
        return Err(Error::invalid("degenerate tau spread in envelope fit"));
    }
    let slope = (n * sxy - sx * sy) / denom;
    if slope >= 0.0 {
        return Err(Error::invalid(format!(
            "no decay visible: fitted slope {slope} is non-negative"
        )));
    }
    Ok((-1.0 / slope).sqrt())
}

/// T2* implied by quasi-static Gaussian detuning: √2/(2π σ_f).
pub fn t2_star_from_sigma_f(sigma_f_mhz: f64) -> f64 {
    std::f64::consts::SQRT_2 / (2.0 * PI * sigma_f_mhz)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{evolve, ramsey_phase};

    fn seed(n: u64) -> StreamSeed {
        StreamSeed::new(n)
    }

    #[test]
    fn noiseless_impulse_limit_equals_ideal_unitary() {
        let config = NoiseConfig::noiseless();
        for (tau, phi, fb) in [
            (0.0, 0.0, 0.0),
            (1.0, 0.3, 0.5),
            (5.4, -1.2, 2.0),
            (0.7, 6.0, -3.3),
        ] {
            let s = PulseSettings::new(tau, phi, fb).unwrap();
            let grid = TimeGrid::for_sequence(&s, &config).unwrap();
            let u = propagate(&s, &config, &NoiseRealization::quiet(), &grid).unwrap();
            assert!(
                u.max_abs_diff(&u_ramsey(&s)) < 1e-12,
                "tau={tau} phi={phi} fb={fb}"
            );
        }
    }

    #[test]
    fn finite_resonant_pulses_still_ideal() {
        // f = 0 during pulses: the X steps commute and the area is exact, so
        // finite width alone introduces no error on resonance.
        let config = NoiseConfig {
            pulse_width_us: 0.05,
            ..NoiseConfig::noiseless()
        };
        let s = PulseSettings::new(2.0, 1.1, 0.0).unwrap();
        let grid = TimeGrid::for_sequence(&s, &config).unwrap();
        let u = propagate(&s, &config, &NoiseRealization::quiet(), &grid).unwrap();
        assert!(u.max_abs_diff(&u_ramsey(&s)) < 1e-10);
    }

    #[test]
    fn amplitude_error_over_rotates() {
        let config = NoiseConfig {
            amp_error: 0.1,
            ..NoiseConfig::noiseless()
        };
        let s = PulseSettings::new(1.0, 0.4, 0.8).unwrap();
        let grid = TimeGrid::for_sequence(&s, &config).unwrap();
        let u = propagate(&s, &config, &NoiseRealization::quiet(), &grid).unwrap();
        // Hand-composed: X(1.1·π/2) · Z(φ) · Z(2πfτ) · X(1.1·π/2)
        let theta_f = 2.0 * PI * 0.8 * 1.0;
        let x = su2_exponential([0.5 * FRAC_PI_2 * 1.1, 0.0, 0.0]);
        let want = x
            .mul(&su2_exponential([0.0, 0.0, 0.5 * 0.4]))
            .mul(&su2_exponential([0.0, 0.0, 0.5 * theta_f]))
            .mul(&x);
        assert!(u.max_abs_diff(&want) < 1e-12);
    }

    #[test]
    fn distortion_shrinks_pulse_area() {
        let w = 0.05;
        let td = 0.015;
        let config = NoiseConfig {
            pulse_width_us: w,
            distortion_tau_us: td,
            ..NoiseConfig::noiseless()
        };
        // τ = 0, φ = 0, f = 0: sequence is two identical distorted X pulses.
        let s = PulseSettings::new(0.0, 0.0, 0.0).unwrap();
        let grid = TimeGrid::new(w / 400.0, ((2.0 * w) / (w / 400.0)).ceil() as usize).unwrap();
        let u = propagate(&s, &config, &NoiseRealization::quiet(), &grid).unwrap();
        let final_state = evolve(&QubitState::ground(), &u).unwrap();
        // Effective single-pulse angle: Ω0 ∫ (1 − e^(−t/τd)) dt over [0, w].
        let a = FRAC_PI_2 / w * (w - td * (1.0 - (-w / td).exp()));
        let want_p1 = (a).sin().powi(2); // total rotation 2a about X
        assert!(
            (final_state.excited_population() - want_p1).abs() < 1e-4,
            "got {}, want {want_p1}",
            final_state.excited_population()
        );
        // Under-rotation: ends short of |1>
        assert!(final_state.excited_population() < 1.0 - 1e-3);
    }

    #[test]
    fn grid_too_coarse_is_rejected() {
        let config = NoiseConfig {
            pulse_width_us: 0.05,
            ..NoiseConfig::noiseless()
        };
        let s = PulseSettings::new(1.0, 0.0, 0.5).unwrap();
        let bad = TimeGrid::new(0.02, 100).unwrap(); // > w/10
        let err = propagate(&s, &config, &NoiseRealization::quiet(), &bad).unwrap_err();
        assert!(matches!(err, Error::GridTooCoarse(_)));
    }

    #[test]
    fn static_detuning_sampling_variance() {
        let config = NoiseConfig {
            sigma_f_mhz: 0.1,
            ..NoiseConfig::noiseless()
        };
        let s = PulseSettings::new(1.0, 0.0, 0.0).unwrap();
        let grid = TimeGrid::for_sequence(&s, &config).unwrap();
        let n = 100_000;
        let root = seed(11);
        let draws: Vec<f64> = (0..n)
            .map(|i| sample_noise_realization(&config, &grid, root.child(i)).static_detuning_mhz)
            .collect();
        let (mean, _) = mean_and_std_err(&draws);
        let var = draws.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n as f64 - 1.0);
        // 3σ chi-squared bound on the sample variance of 1e5 normal draws
        let bound = 3.0 * 0.01 * (2.0 / n as f64).sqrt();
        assert!((var - 0.01).abs() < bound, "var = {var}");
    }

    #[test]
    fn ou_trace_has_expected_autocorrelation() {
        let tau_c = 1.0;
        let config = NoiseConfig {
            ou_amplitude_mhz: 0.2,
            ou_tau_c_us: tau_c,
            ..NoiseConfig::noiseless()
        };
        let grid = TimeGrid::new(0.1, 200_000).unwrap();
        let trace = sample_noise_realization(&config, &grid, seed(5)).dephasing_trace;
        let lag = (tau_c / grid.dt_us) as usize;
        let n = trace.len() - lag;
        let mean = trace.iter().sum::<f64>() / trace.len() as f64;
        let var =
            trace.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / trace.len() as f64;
        let cov = (0..n)
            .map(|i| (trace[i] - mean) * (trace[i + lag] - mean))
            .sum::<f64>()
            / n as f64;
        assert!((var - 0.04).abs() < 0.004, "var = {var}");
        let ratio = cov / var;
        assert!(
            (ratio - (-1.0f64).exp()).abs() < 0.05,
            "autocorrelation at lag τ_c: {ratio}"
        );
    }

    #[test]
    fn noiseless_mc_is_deterministic_cosine() {
        let config = NoiseConfig::noiseless();
        let s = PulseSettings::new(0.9, 0.7, 1.4).unwrap();
        let (mean, se) = mc_expectation_z(&s, &config, 200, seed(3)).unwrap();
        assert!((mean + ramsey_phase(&s).cos()).abs() < 1e-10);
        assert!(se < 1e-12);
    }

    #[test]
    fn quasi_static_dephasing_matches_gaussian_envelope() {
        // ⟨Z⟩ = −e^(−(τ/T2*)²) cos θ with T2* = √2/(2π σ_f)
        let sigma_f = 0.08;
        let config = NoiseConfig {
            sigma_f_mhz: sigma_f,
            ..NoiseConfig::noiseless()
        };
        let t2 = t2_star_from_sigma_f(sigma_f);
        for (tau, fb) in [(1.0, 0.0), (2.0, 0.3), (t2, 0.1)] {
            let s = PulseSettings::new(tau, 0.0, fb).unwrap();
            let (mean, se) = mc_expectation_z(&s, &config, 20_000, seed(17)).unwrap();
            let want = -(-(tau / t2) * (tau / t2)).exp() * ramsey_phase(&s).cos();
            assert!(
                (mean - want).abs() < 3.0 * se.max(1e-4),
                "tau={tau} fb={fb}: got {mean}, want {want}, se {se}"
            );
        }
    }

    #[test]
    fn phase_shift_by_pi_negates_expectation() {
        let config = NoiseConfig {
            sigma_f_mhz: 0.05,
            ..NoiseConfig::noiseless()
        };
        let a = PulseSettings::new(1.3, 0.2, 0.6).unwrap();
        let b = PulseSettings::new(1.3, 0.2 + PI, 0.6).unwrap();
        let (ma, sa) = mc_expectation_z(&a, &config, 20_000, seed(23)).unwrap();
        let (mb, sb) = mc_expectation_z(&b, &config, 20_000, seed(23)).unwrap();
        let comb = (sa * sa + sb * sb).sqrt().max(1e-4);
        assert!((ma + mb).abs() < 3.0 * comb, "ma={ma} mb={mb}");
    }

    #[test]
    fn envelope_fit_recovers_t2_star() {
        let sigma_f = 0.12;
        let config = NoiseConfig {
            sigma_f_mhz: sigma_f,
            ..NoiseConfig::noiseless()
        };
        let t2 = t2_star_from_sigma_f(sigma_f);
        let taus: Vec<f64> = (1..=12).map(|i| 0.15 * t2 * i as f64).collect();
        let zs: Vec<f64> = taus
            .iter()
            .enumerate()
            .map(|(i, &tau)| {
                let s = PulseSettings::new(tau, 0.0, 0.0).unwrap();
                mc_expectation_z(&s, &config, 20_000, seed(31).child(i as u64))
                    .unwrap()
                    .0
            })
            .collect();
        let fitted = fit_gaussian_envelope(&taus, &zs).unwrap();
        assert!(
            (fitted - t2).abs() / t2 < 0.05,
            "fitted {fitted}, want {t2}"
        );
    }

    #[test]
    fn prep_channel_statistics() {
        let stats = prep_channel_check(0.0, 1000, seed(1)).unwrap();
        assert_eq!(stats.gamma_mc, 1.0);
        assert_eq!(stats.epsilon_mc, 0.0);

        let at = 0.5 * (2.0f64).ln();
        let stats = prep_channel_check(at, 100_000, seed(2)).unwrap();
        let want_gamma = (-2.0 * at).exp(); // = 1/2
        assert!(
            (stats.gamma_mc - want_gamma).abs() < 3.0 * stats.gamma_std_err,
            "gamma {} ± {}",
            stats.gamma_mc,
            stats.gamma_std_err
        );
        // Pointwise channel identity ε = (1 − Γ)/2
        assert!((stats.epsilon_mc - 0.5 * (1.0 - stats.gamma_mc)).abs() < 1e-12);

        // Strong noise: fully mixed in the X basis, ε → 1/2
        let stats = prep_channel_check(50.0, 50_000, seed(3)).unwrap();
        assert!((stats.epsilon_mc - 0.5).abs() < 3.0 * stats.epsilon_std_err + 1e-3);
    }

    #[test]
    fn prep_epsilon_round_trip() {
        let config = NoiseConfig::noiseless().with_prep_epsilon(0.25).unwrap();
        assert!((config.prep_epsilon() - 0.25).abs() < 1e-12);
        assert!((config.prep_noise_power - 0.5 * (2.0f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn prep_only_config_population_matches_epsilon() {
        let eps = 0.1;
        let config = NoiseConfig::noiseless().with_prep_epsilon(eps).unwrap();
        // τ = 0 with θ chosen so the Ramsey pulses cancel: population after
        // the sequence reflects the prep channel alone... simpler: measure
        // along the sequence-free direction by comparing to the analytic mean.
        // The prep kick commutes with nothing else here, so use the channel
        // check directly against the config's implied power.
        let stats = prep_channel_check(config.prep_noise_power, 200_000, seed(7)).unwrap();
        assert!(
            (stats.epsilon_mc - eps).abs() < 3.0 * stats.epsilon_std_err,
            "eps {} ± {}",
            stats.epsilon_mc,
            stats.epsilon_std_err
        );
    }

    #[test]
    fn noise_operator_identity_in_noiseless_limit() {
        let config = NoiseConfig::noiseless();
        let s = PulseSettings::new(1.2, 0.5, 0.9).unwrap();
        let est = noise_operator_oracle(&s, &config, 1000, seed(9)).unwrap();
        assert!(est.operator.matrix.max_abs_diff(&Operator2::identity()) < 1e-10);
    }

    #[test]
    fn noise_operator_reconstruction_deterministic_config() {
        // Deterministic imperfections (no randomness): reconstruction must
        // equal an independent ⟨Z⟩ computation exactly.
        let config = NoiseConfig {
            pulse_width_us: 0.04,
            distortion_tau_us: 0.012,
            amp_error: 0.08,
            ..NoiseConfig::noiseless()
        };
        let s = PulseSettings::new(0.8, 0.3, 1.1).unwrap();
        let est = noise_operator_oracle(&s, &config, 3, seed(13)).unwrap();
        for (k, state) in fiducial_states().iter().enumerate() {
            let (mc, _) = mc_expectation_z_from(state, &s, &config, 3, seed(14)).unwrap();
            assert!(
                (est.reconstruction_mean[k] - mc).abs() < 1e-12,
                "state {k}: {} vs {mc}",
                est.reconstruction_mean[k]
            );
            assert!(est.reconstruction_std_err[k] < 1e-12);
        }
    }

    #[test]
    fn noise_operator_reconstruction_with_random_noise() {
        let config = NoiseConfig {
            sigma_f_mhz: 0.15,
            pulse_width_us: 0.03,
            amp_error: 0.05,
            ..NoiseConfig::noiseless()
        }
        .with_prep_epsilon(0.05)
        .unwrap();
        let s = PulseSettings::new(1.1, 0.4, 0.7).unwrap();
        let n = 20_000;
        let est = noise_operator_oracle(&s, &config, n, seed(41)).unwrap();
        // Dephasing-dominated noise keeps the operator norm near or below 1.
        assert!(est.operator.matrix.spectral_norm() <= 1.0 + 0.05);
        for (k, state) in fiducial_states().iter().enumerate() {
            let (mc, se_mc) = mc_expectation_z_from(state, &s, &config, n, seed(42)).unwrap();
            let comb = (se_mc * se_mc + est.reconstruction_std_err[k].powi(2)).sqrt();
            assert!(
                (est.reconstruction_mean[k] - mc).abs() < 3.0 * comb,
                "state {k}: recon {} vs mc {mc} (comb se {comb})",
                est.reconstruction_mean[k]
            );
        }
    }

    #[test]
    fn simulate_batch_degenerate_probabilities() {
        let config = NoiseConfig::noiseless();
        // θ = π ⇒ ⟨Z⟩ = 1. With π0 = 0: P_cl = 0 ⇒ r = 0.
        let s = PulseSettings::new(1.0, 0.0, 0.5).unwrap();
        let calib0 = ReadoutCalibration::new(0.0, 0.4).unwrap();
        let rec = simulate_batch(&s, &config, &calib0, 1000, 10, seed(51)).unwrap();
        assert_eq!(rec.clicks, 0);
        assert_eq!(rec.p_cl, 0.0);
        // π0 = 1 ⇒ P_cl = 1 ⇒ r = R.
        let calib1 = ReadoutCalibration::new(1.0, 0.3).unwrap();
        let rec = simulate_batch(&s, &config, &calib1, 1000, 10, seed(52)).unwrap();
        assert_eq!(rec.clicks, 1000);
        assert_eq!(rec.p_cl, 1.0);
    }

    #[test]
    fn simulate_batch_concentrates_around_p() {
        let config = NoiseConfig::noiseless();
        let s = PulseSettings::new(0.0, FRAC_PI_2, 0.0).unwrap(); // ⟨Z⟩ = 0
        let calib = ReadoutCalibration::new(0.03, 0.02).unwrap();
        let r_count = 5_000_000;
        let rec = simulate_batch(&s, &config, &calib, r_count, 10, seed(53)).unwrap();
        let p = 0.025;
        let sd = (p * (1.0 - p) / r_count as f64).sqrt();
        assert!(
            (rec.p_cl - p).abs() < 3.0 * sd,
            "p_cl {} vs {p} (sd {sd})",
            rec.p_cl
        );
        assert!((rec.p_cl - rec.clicks as f64 / r_count as f64).abs() < 1e-15);
    }

    #[test]
    fn jitter_perturbs_calibration_in_record() {
        let config = NoiseConfig {
            calib_jitter: 0.002,
            ..NoiseConfig::noiseless()
        };
        let s = PulseSettings::new(0.5, 0.1, 0.8).unwrap();
        let calib = ReadoutCalibration::new(0.03, 0.02).unwrap();
        let rec = simulate_batch(&s, &config, &calib, 1000, 10, seed(54)).unwrap();
        assert_ne!(rec.calib.pi0, 0.03);
        assert!((rec.calib.pi0 - 0.03).abs() < 0.01);
    }
}
