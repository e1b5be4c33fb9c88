//! Python bindings for the graysense pipeline: simulator, graybox model,
//! and the Bayesian frequency estimator. Build with
//! `cargo build --release -p graysense-py`; the resulting cdylib imports as
//! `graysense_py` (see python/smoke_test.py for the loading dance).

use std::path::{Path, PathBuf};

use pyo3::exceptions::{PyArithmeticError, PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use graysense::bayes::{
    run_estimation, EstimationOptions, GrayboxProvider, LikelihoodProvider, MeasurementBatch,
    WhiteboxProvider,
};
use graysense::graybox::{
    gb_predict_grid, load_checkpoint, save_checkpoint, train, GrayboxParams, TrainOptions,
};
use graysense::quantum::{ramsey_phase, PulseSettings, ReadoutCalibration};
use graysense::sim::{self, DatasetPlan, DatasetRecord};
use graysense::whitebox::{wb_click_probability, WhiteboxConfig};
use graysense::{ErrorClass, StreamSeed};

fn to_py(err: graysense::Error) -> PyErr {
    match err.class() {
        ErrorClass::Validation => PyValueError::new_err(err.to_string()),
        ErrorClass::Numeric => PyArithmeticError::new_err(err.to_string()),
        ErrorClass::Io => PyIOError::new_err(err.to_string()),
    }
}

fn calibration(pi0: f64, pi1: f64) -> PyResult<ReadoutCalibration> {
    ReadoutCalibration::new(pi0, pi1).map_err(to_py)
}

/// Noise model for the qubit simulator. All knobs default to off; the
/// preparation channel is parameterized by its flip probability eps.
#[pyclass(module = "graysense_py")]
#[derive(Clone)]
struct NoiseConfig {
    inner: sim::NoiseConfig,
}

#[pymethods]
impl NoiseConfig {
    #[new]
    #[pyo3(signature = (*, sigma_f_mhz=0.0, ou_amplitude_mhz=0.0, ou_tau_c_us=0.0,
                        pulse_width_us=0.0, distortion_tau_us=0.0, amp_error=0.0,
                        calib_jitter=0.0, prep_epsilon=0.0))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        sigma_f_mhz: f64,
        ou_amplitude_mhz: f64,
        ou_tau_c_us: f64,
        pulse_width_us: f64,
        distortion_tau_us: f64,
        amp_error: f64,
        calib_jitter: f64,
        prep_epsilon: f64,
    ) -> PyResult<Self> {
        let inner = sim::NoiseConfig {
            sigma_f_mhz,
            ou_amplitude_mhz,
            ou_tau_c_us,
            pulse_width_us,
            distortion_tau_us,
            amp_error,
            calib_jitter,
            ..sim::NoiseConfig::noiseless()
        }
        .with_prep_epsilon(prep_epsilon)
        .map_err(to_py)?;
        inner.validate().map_err(to_py)?;
        Ok(NoiseConfig { inner })
    }

    #[getter]
    fn sigma_f_mhz(&self) -> f64 {
        self.inner.sigma_f_mhz
    }

    #[getter]
    fn prep_epsilon(&self) -> f64 {
        self.inner.prep_epsilon()
    }

    fn __repr__(&self) -> String {
        let c = &self.inner;
        format!(
            "NoiseConfig(sigma_f_mhz={}, ou_amplitude_mhz={}, ou_tau_c_us={}, pulse_width_us={}, \
             distortion_tau_us={}, amp_error={}, calib_jitter={}, prep_epsilon={})",
            c.sigma_f_mhz,
            c.ou_amplitude_mhz,
            c.ou_tau_c_us,
            c.pulse_width_us,
            c.distortion_tau_us,
            c.amp_error,
            c.calib_jitter,
            c.prep_epsilon()
        )
    }
}

/// Trained graybox model: network head, operator reconstruction, and the
/// exact Ramsey layers behind a click-probability surface.
#[pyclass(module = "graysense_py")]
struct Graybox {
    inner: GrayboxParams,
}

#[pymethods]
impl Graybox {
    /// Load a model from a versioned checkpoint file.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Graybox {
            inner: load_checkpoint(&path).map_err(to_py)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_checkpoint(&self.inner, &path).map_err(to_py)
    }

    /// Train a fresh model on a JSONL dataset (90/10 split by default).
    /// Returns (model, final_train_mse, final_test_mse or None).
    #[staticmethod]
    #[pyo3(signature = (dataset, *, iterations=20_000, hidden=vec![32, 32],
                        learning_rate=1e-3, seed=0))]
    fn train(
        dataset: PathBuf,
        iterations: u64,
        hidden: Vec<usize>,
        learning_rate: f64,
        seed: u64,
    ) -> PyResult<(Self, f64, Option<f64>)> {
        let records = sim::read_dataset(&dataset).map_err(to_py)?;
        let root = StreamSeed::new(seed);
        let init = GrayboxParams::for_dataset(&records, &hidden, root.child(0)).map_err(to_py)?;
        let mut opts = TrainOptions::new(root.child(1));
        opts.iterations = iterations;
        opts.adam.learning_rate = learning_rate;
        let (model, report) = train(init, &records, &opts).map_err(to_py)?;
        Ok((
            Graybox { inner: model },
            report.final_train_mse,
            report.final_test_mse,
        ))
    }

    /// Model click probability at one pulse setting over a frequency grid.
    #[pyo3(signature = (tau_us, phi_rad, f_b_mhz, *, pi0=0.03, pi1=0.02))]
    fn predict(
        &self,
        tau_us: f64,
        phi_rad: f64,
        f_b_mhz: Vec<f64>,
        pi0: f64,
        pi1: f64,
    ) -> PyResult<Vec<f64>> {
        let calib = calibration(pi0, pi1)?;
        gb_predict_grid(&self.inner, tau_us, phi_rad, &calib, &[], &f_b_mhz).map_err(to_py)
    }

    /// Run the Bayesian estimator over one frequency set of a JSONL dataset
    /// with this model as the likelihood. Returns a summary dict.
    #[pyo3(signature = (dataset, *, set_id=None, fmin_mhz=0.0, fmax_mhz=2.0,
                        grid_m=5000, orderings=100, seed=0))]
    #[allow(clippy::too_many_arguments)]
    fn estimate<'py>(
        &self,
        py: Python<'py>,
        dataset: PathBuf,
        set_id: Option<u32>,
        fmin_mhz: f64,
        fmax_mhz: f64,
        grid_m: usize,
        orderings: usize,
        seed: u64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let provider = GrayboxProvider::new(self.inner.clone()).map_err(to_py)?;
        estimate_impl(
            py, &dataset, set_id, &provider, fmin_mhz, fmax_mhz, grid_m, orderings, seed,
        )
    }
}

fn select_set(records: &[DatasetRecord], set_id: Option<u32>) -> PyResult<Vec<&DatasetRecord>> {
    if records.is_empty() {
        return Err(PyValueError::new_err("dataset is empty"));
    }
    let chosen = match set_id {
        Some(id) => id,
        None => {
            let first = records[0].set_id;
            if records.iter().any(|r| r.set_id != first) {
                return Err(PyValueError::new_err(
                    "dataset holds several frequency sets; pass set_id",
                ));
            }
            first
        }
    };
    let selected: Vec<&DatasetRecord> = records.iter().filter(|r| r.set_id == chosen).collect();
    if selected.is_empty() {
        return Err(PyValueError::new_err(format!(
            "dataset has no records for set {chosen}"
        )));
    }
    Ok(selected)
}

#[allow(clippy::too_many_arguments)]
fn estimate_impl<'py>(
    py: Python<'py>,
    dataset: &Path,
    set_id: Option<u32>,
    provider: &dyn LikelihoodProvider,
    fmin_mhz: f64,
    fmax_mhz: f64,
    grid_m: usize,
    orderings: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let records = sim::read_dataset(dataset).map_err(to_py)?;
    let selected = select_set(&records, set_id)?;
    let truth = selected[0].truth_f_b_mhz;
    let batches: Vec<MeasurementBatch> =
        selected.iter().map(|r| MeasurementBatch::from(*r)).collect();
    let opts = EstimationOptions {
        grid_m,
        orderings,
        ..EstimationOptions::new(fmin_mhz, fmax_mhz, StreamSeed::new(seed))
    };
    let result = run_estimation(&batches, truth, provider, &opts).map_err(to_py)?;
    let last = result.trace.rows.last().expect("non-empty trace");
    let out = PyDict::new(py);
    out.set_item("provider", provider.name())?;
    out.set_item("set_id", selected[0].set_id)?;
    out.set_item("truth_f_b_mhz", truth)?;
    out.set_item("n_batches", batches.len())?;
    out.set_item("fhat_mhz", last.mean_fhat_mhz)?;
    out.set_item("e_mhz2", last.mean_e_mhz2)?;
    out.set_item("v_mhz2", last.mean_v_mhz2)?;
    out.set_item(
        "n_skipped",
        result
            .per_ordering
            .iter()
            .map(|o| o.n_skipped)
            .sum::<usize>(),
    )?;
    Ok(out)
}

/// Closed-form click probability of the ideal (noiseless, no-decay) Ramsey
/// sequence: P_cl = pi0 P(0) + pi1 (1 - P(0)).
#[pyfunction]
#[pyo3(signature = (tau_us, phi_rad, f_b_mhz, *, pi0=0.03, pi1=0.02))]
fn ramsey_click_probability(
    tau_us: f64,
    phi_rad: f64,
    f_b_mhz: f64,
    pi0: f64,
    pi1: f64,
) -> PyResult<f64> {
    let settings = PulseSettings::new(tau_us, phi_rad, f_b_mhz).map_err(to_py)?;
    wb_click_probability(&settings, &WhiteboxConfig::no_decay(), &calibration(pi0, pi1)?)
        .map_err(to_py)
}

/// Whitebox click probability with the Gaussian T2* coherence envelope.
#[pyfunction]
#[pyo3(signature = (tau_us, phi_rad, f_b_mhz, t2_star_us, *, pi0=0.03, pi1=0.02))]
fn whitebox_click_probability(
    tau_us: f64,
    phi_rad: f64,
    f_b_mhz: f64,
    t2_star_us: f64,
    pi0: f64,
    pi1: f64,
) -> PyResult<f64> {
    let settings = PulseSettings::new(tau_us, phi_rad, f_b_mhz).map_err(to_py)?;
    let cfg = WhiteboxConfig::new(t2_star_us).map_err(to_py)?;
    wb_click_probability(&settings, &cfg, &calibration(pi0, pi1)?).map_err(to_py)
}

/// Interferometric phase 2 pi f_B tau + phi of a pulse setting.
#[pyfunction(name = "ramsey_phase")]
fn ramsey_phase_py(tau_us: f64, phi_rad: f64, f_b_mhz: f64) -> PyResult<f64> {
    Ok(ramsey_phase(
        &PulseSettings::new(tau_us, phi_rad, f_b_mhz).map_err(to_py)?,
    ))
}

/// Monte-Carlo estimate of <Z> after the noisy Ramsey sequence.
/// Returns (mean, standard error).
#[pyfunction]
#[pyo3(signature = (tau_us, phi_rad, f_b_mhz, *, noise=None, shots=1000, seed=0))]
fn mc_expectation_z(
    tau_us: f64,
    phi_rad: f64,
    f_b_mhz: f64,
    noise: Option<NoiseConfig>,
    shots: usize,
    seed: u64,
) -> PyResult<(f64, f64)> {
    let settings = PulseSettings::new(tau_us, phi_rad, f_b_mhz).map_err(to_py)?;
    let config = noise.map_or_else(sim::NoiseConfig::noiseless, |n| n.inner);
    sim::mc_expectation_z(&settings, &config, shots, StreamSeed::new(seed)).map_err(to_py)
}

/// T2* of the Gaussian quasi-static detuning with spread sigma_f (MHz -> us).
#[pyfunction]
fn t2_star_from_sigma_f(sigma_f_mhz: f64) -> f64 {
    sim::t2_star_from_sigma_f(sigma_f_mhz)
}

/// Simulate a dataset of measurement batches and write it as JSONL.
/// Returns the number of records written.
#[pyfunction]
#[pyo3(signature = (path, *, n_sets=1, taus_per_set=32, noise=None, seed=0,
                    repetitions=100_000, mc_shots=1000, exact=false))]
#[allow(clippy::too_many_arguments)]
fn generate_dataset(
    path: PathBuf,
    n_sets: usize,
    taus_per_set: usize,
    noise: Option<NoiseConfig>,
    seed: u64,
    repetitions: u64,
    mc_shots: usize,
    exact: bool,
) -> PyResult<usize> {
    let plan = DatasetPlan {
        n_frequency_sets: n_sets,
        taus_per_set,
        repetitions,
        mc_shots,
        exact_probabilities: exact,
        ..DatasetPlan::default()
    };
    let config = noise.map_or_else(sim::NoiseConfig::noiseless, |n| n.inner);
    let records = sim::generate_dataset(&plan, &config, StreamSeed::new(seed)).map_err(to_py)?;
    sim::write_dataset(&path, &records).map_err(to_py)?;
    Ok(records.len())
}

/// Read a JSONL dataset as a list of per-batch dicts.
#[pyfunction]
fn load_dataset(py: Python<'_>, path: PathBuf) -> PyResult<Vec<Bound<'_, PyDict>>> {
    let records = sim::read_dataset(&path).map_err(to_py)?;
    records
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("tau_us", r.settings.tau_us)?;
            d.set_item("phi_rad", r.settings.phi_rad)?;
            d.set_item("f_b_mhz", r.settings.f_b_mhz)?;
            d.set_item("chi", r.settings.chi.clone())?;
            d.set_item("pi0", r.calib.pi0)?;
            d.set_item("pi1", r.calib.pi1)?;
            d.set_item("repetitions", r.repetitions)?;
            d.set_item("clicks", r.clicks)?;
            d.set_item("p_cl", r.p_cl)?;
            d.set_item("set_id", r.set_id)?;
            d.set_item("truth_f_b_mhz", r.truth_f_b_mhz)?;
            Ok(d)
        })
        .collect()
}

/// Bayesian frequency estimate with the analytic whitebox likelihood.
#[pyfunction]
#[pyo3(signature = (dataset, t2_star_us, *, set_id=None, fmin_mhz=0.0, fmax_mhz=2.0,
                    grid_m=5000, orderings=100, seed=0))]
#[allow(clippy::too_many_arguments)]
fn whitebox_estimate<'py>(
    py: Python<'py>,
    dataset: PathBuf,
    t2_star_us: f64,
    set_id: Option<u32>,
    fmin_mhz: f64,
    fmax_mhz: f64,
    grid_m: usize,
    orderings: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let provider = WhiteboxProvider::new(WhiteboxConfig::new(t2_star_us).map_err(to_py)?);
    estimate_impl(
        py, &dataset, set_id, &provider, fmin_mhz, fmax_mhz, grid_m, orderings, seed,
    )
}

#[pymodule]
fn graysense_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<NoiseConfig>()?;
    m.add_class::<Graybox>()?;
    m.add_function(wrap_pyfunction!(ramsey_click_probability, m)?)?;
    m.add_function(wrap_pyfunction!(whitebox_click_probability, m)?)?;
    m.add_function(wrap_pyfunction!(ramsey_phase_py, m)?)?;
    m.add_function(wrap_pyfunction!(mc_expectation_z, m)?)?;
    m.add_function(wrap_pyfunction!(t2_star_from_sigma_f, m)?)?;
    m.add_function(wrap_pyfunction!(generate_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(load_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(whitebox_estimate, m)?)?;
    Ok(())
}
