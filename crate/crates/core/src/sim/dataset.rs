//! Dataset records and the set-structured generator.
//!
//! A dataset groups measurement batches into frequency sets: each set shares
//! one hidden (f_B, φ) pair and sweeps τ over an even grid whose acquisition
//! order is shuffled. Files are JSON-Lines, one record per line, floats
//! written with 17 significant digits so reloading is bit-exact.

use super::{jittered_calibration, mc_expectation_z, simulate_batch, NoiseConfig};
use crate::error::{Error, Result};
use crate::jsonfmt;
use crate::quantum::{click_probability, PulseSettings, ReadoutCalibration};
use crate::seed::StreamSeed;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

/// One measurement batch: pulse settings, the calibration in force, and the
/// observed click statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub settings: PulseSettings,
    pub calib: ReadoutCalibration,
    /// Repetitions R of the sequence within the batch.
    pub repetitions: u64,
    /// Observed clicks r.
    pub clicks: u64,
    /// Empirical click probability. Equals r/R for sampled records; in
    /// exact-probability mode it stores the model value and r = round(p·R).
    pub p_cl: f64,
    pub set_id: u32,
    /// Ground-truth f_B of the record's set, for benchmarking.
    pub truth_f_b_mhz: f64,
}

impl DatasetRecord {
    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::invalid("record has zero repetitions"));
        }
        if self.clicks > self.repetitions {
            return Err(Error::invalid(format!(
                "clicks {} exceed repetitions {}",
                self.clicks, self.repetitions
            )));
        }
        if !(0.0..=1.0).contains(&self.p_cl) {
            return Err(Error::invalid(format!("p_cl {} outside [0,1]", self.p_cl)));
        }
        // r/R for sampled data, within rounding of p·R for exact-mode data.
        let slack = (0.5 + 1e-6) / self.repetitions as f64;
        let emp = self.clicks as f64 / self.repetitions as f64;
        if (self.p_cl - emp).abs() > slack {
            return Err(Error::invalid(format!(
                "p_cl {} inconsistent with r/R = {emp}",
                self.p_cl
            )));
        }
        if !self.truth_f_b_mhz.is_finite() {
            return Err(Error::invalid("truth frequency must be finite"));
        }
        Ok(())
    }
}

/// Shape of a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetPlan {
    pub n_frequency_sets: usize,
    pub taus_per_set: usize,
    pub f_range_mhz: (f64, f64),
    pub tau_range_us: (f64, f64),
    pub phi_range_rad: (f64, f64),
    /// Repetitions R per batch.
    pub repetitions: u64,
    /// Nominal detector coefficients; per-batch values drift by calib_jitter.
    pub nominal_pi0: f64,
    pub nominal_pi1: f64,
    /// Noise draws used to estimate ⟨Z⟩ per batch.
    pub mc_shots: usize,
    /// Store the model click probability exactly instead of sampling counts
    /// (the infinite-R surrogate; r is set to round(p·R)).
    pub exact_probabilities: bool,
}

impl Default for DatasetPlan {
    fn default() -> Self {
        DatasetPlan {
            n_frequency_sets: 1,
            taus_per_set: 32,
            f_range_mhz: (0.0, 2.0),
            tau_range_us: (0.1, 3.2),
            phi_range_rad: (0.0, 2.0 * std::f64::consts::PI),
            repetitions: 100_000,
            nominal_pi0: 0.03,
            nominal_pi1: 0.02,
            mc_shots: 1000,
            exact_probabilities: false,
        }
    }
}

impl DatasetPlan {
    pub fn validate(&self) -> Result<()> {
        if self.n_frequency_sets == 0 {
            return Err(Error::invalid("plan needs at least one frequency set"));
        }
        if self.taus_per_set == 0 {
            return Err(Error::invalid("plan needs at least one tau per set"));
        }
        for (name, (lo, hi)) in [
            ("f_range_mhz", self.f_range_mhz),
            ("tau_range_us", self.tau_range_us),
            ("phi_range_rad", self.phi_range_rad),
        ] {
            if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                return Err(Error::invalid(format!(
                    "{name} must be a non-degenerate finite range, got ({lo}, {hi})"
                )));
            }
        }
        if self.tau_range_us.0 < 0.0 {
            return Err(Error::invalid("tau range must be non-negative"));
        }
        if self.repetitions == 0 {
            return Err(Error::invalid("repetitions must be at least 1"));
        }
        if self.mc_shots == 0 {
            return Err(Error::invalid("mc_shots must be at least 1"));
        }
        ReadoutCalibration::new(self.nominal_pi0, self.nominal_pi1)?;
        Ok(())
    }

    fn tau_values(&self) -> Vec<f64> {
        let (lo, hi) = self.tau_range_us;
        let n = self.taus_per_set;
        if n == 1 {
            return vec![0.5 * (lo + hi)];
        }
        (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect()
    }
}

/// Generate a full dataset: per set, draw hidden (f_B, φ), sweep τ in
/// shuffled acquisition order, and simulate each batch with a freshly
/// drifted calibration. Deterministic given (plan, config, seed).
pub fn generate_dataset(
    plan: &DatasetPlan,
    config: &NoiseConfig,
    seed: StreamSeed,
) -> Result<Vec<DatasetRecord>> {
    plan.validate()?;
    config.validate()?;
    let nominal = ReadoutCalibration::new(plan.nominal_pi0, plan.nominal_pi1)?;
    let taus = plan.tau_values();
    let mut records = Vec::with_capacity(plan.n_frequency_sets * plan.taus_per_set);

    for set in 0..plan.n_frequency_sets {
        let set_seed = seed.child(set as u64);
        let mut rng = set_seed.child(0).rng();
        let f_b = rng.random_range(plan.f_range_mhz.0..plan.f_range_mhz.1);
        let phi = rng.random_range(plan.phi_range_rad.0..plan.phi_range_rad.1);
        let mut order: Vec<usize> = (0..taus.len()).collect();
        order.shuffle(&mut rng);

        for (k, &tau_idx) in order.iter().enumerate() {
            let settings = PulseSettings::new(taus[tau_idx], phi, f_b)?;
            let batch_seed = set_seed.child(1 + k as u64);
            let mut record = if plan.exact_probabilities {
                exact_batch(&settings, config, &nominal, plan, batch_seed)?
            } else {
                simulate_batch(
                    &settings,
                    config,
                    &nominal,
                    plan.repetitions,
                    plan.mc_shots,
                    batch_seed,
                )?
            };
            record.set_id = set as u32;
            records.push(record);
        }
    }
    Ok(records)
}

/// Infinite-R surrogate batch: p_cl is the model value, counts are rounded.
fn exact_batch(
    settings: &PulseSettings,
    config: &NoiseConfig,
    nominal: &ReadoutCalibration,
    plan: &DatasetPlan,
    seed: StreamSeed,
) -> Result<DatasetRecord> {
    let mut rng = seed.child(0).rng();
    let calib = jittered_calibration(nominal, config.calib_jitter, &mut rng);
    let (z_mean, _) = mc_expectation_z(settings, config, plan.mc_shots, seed.child(1))?;
    let p_cl = click_probability(z_mean, &calib)?;
    let clicks = (p_cl * plan.repetitions as f64).round() as u64;
    Ok(DatasetRecord {
        settings: settings.clone(),
        calib,
        repetitions: plan.repetitions,
        clicks,
        p_cl,
        set_id: 0,
        truth_f_b_mhz: settings.f_b_mhz,
    })
}

#[derive(Serialize, Deserialize)]
struct Row {
    tau_us: f64,
    phi_rad: f64,
    #[serde(rename = "fB_MHz")]
    f_b_mhz: f64,
    chi: Vec<f64>,
    pi0: f64,
    pi1: f64,
    #[serde(rename = "R")]
    repetitions: u64,
    r: u64,
    p_cl: f64,
    set_id: u32,
    #[serde(rename = "truth_fB_MHz")]
    truth_f_b_mhz: f64,
}

impl From<&DatasetRecord> for Row {
    fn from(rec: &DatasetRecord) -> Self {
        Row {
            tau_us: rec.settings.tau_us,
            phi_rad: rec.settings.phi_rad,
            f_b_mhz: rec.settings.f_b_mhz,
            chi: rec.settings.chi.clone(),
            pi0: rec.calib.pi0,
            pi1: rec.calib.pi1,
            repetitions: rec.repetitions,
            r: rec.clicks,
            p_cl: rec.p_cl,
            set_id: rec.set_id,
            truth_f_b_mhz: rec.truth_f_b_mhz,
        }
    }
}

impl Row {
    fn into_record(self) -> Result<DatasetRecord> {
        let record = DatasetRecord {
            settings: PulseSettings::with_chi(self.tau_us, self.phi_rad, self.f_b_mhz, self.chi)?,
            calib: ReadoutCalibration::new(self.pi0, self.pi1)?,
            repetitions: self.repetitions,
            clicks: self.r,
            p_cl: self.p_cl,
            set_id: self.set_id,
            truth_f_b_mhz: self.truth_f_b_mhz,
        };
        record.validate()?;
        Ok(record)
    }
}

pub fn write_dataset(path: &Path, records: &[DatasetRecord]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut out = BufWriter::new(file);
    for rec in records {
        let line = jsonfmt::to_string_full(&Row::from(rec)).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        out.write_all(line.as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Vec<DatasetRecord>> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: Row = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            message: format!("line {}: {e}", lineno + 1),
        })?;
        records.push(row.into_record().map_err(|e| Error::Parse {
            path: path.display().to_string(),
            message: format!("line {}: {e}", lineno + 1),
        })?);
    }
    Ok(records)
}
