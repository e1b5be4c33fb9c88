//! Hybrid likelihood model: a dense network predicts a small noise-operator
//! parameterization from the pulse settings, and exact single-qubit algebra
//! turns that operator into a click probability. The network never sees the
//! detector calibration — (π0, π1) enter only through the final affine map, so
//! a model trained under one calibration transfers to another.
//!
//! Gradients flow through the quantum block analytically (commutator adjoints
//! of the Euler rotations), then through the network via the reverse pass in
//! [`crate::nn`].

mod checkpoint;
mod training;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use training::{train, write_loss_csv, TrainOptions, TrainReport};

use crate::error::{Error, Result};
use crate::nn::{
    backward, loss_and_gradient, network_forward, Activation, GradBuffer, LayerSpec, LossKind,
    NetworkParams, Tape,
};
use crate::quantum::{
    click_probability, evolve, noisy_expectation, rotation, u_ramsey, Axis, NoiseOperator,
    Operator2, PulseSettings, QubitState, ReadoutCalibration,
};
use crate::seed::StreamSeed;
use crate::sim::DatasetRecord;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Width of the network head: three Euler angles plus two eigenvalues.
pub const HEAD_WIDTH: usize = 5;
/// The angles are emitted by linear units; the eigenvalues by tanh units.
const HEAD_LINEAR: usize = 3;

/// Records summed per task when accumulating batch gradients. Chunks are
/// reduced in index order, so the result is independent of thread count.
const GRAD_CHUNK: usize = 32;

/// Euler-angle-and-eigenvalue parameterization of a Hermitian noise operator
/// V = Q·diag(μ1, μ2)·Q† with Q = R_Z(θ1)·R_Y(θ2)·R_Z(θ3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseOperatorParams {
    pub theta1: f64,
    pub theta2: f64,
    pub theta3: f64,
    pub mu1: f64,
    pub mu2: f64,
}

impl NoiseOperatorParams {
    pub fn new(theta1: f64, theta2: f64, theta3: f64, mu1: f64, mu2: f64) -> Result<Self> {
        for (name, v) in [("theta1", theta1), ("theta2", theta2), ("theta3", theta3)] {
            if !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be finite, got {v}")));
            }
        }
        for (name, v) in [("mu1", mu1), ("mu2", mu2)] {
            if !(v.is_finite() && v.abs() <= 1.0) {
                return Err(Error::invalid(format!("{name} must lie in [-1,1], got {v}")));
            }
        }
        Ok(NoiseOperatorParams {
            theta1,
            theta2,
            theta3,
            mu1,
            mu2,
        })
    }

    /// Interpret a raw network head. The tanh head units keep |μ| < 1, which
    /// in turn keeps every click probability strictly inside the physical
    /// band [min(π0,π1), max(π0,π1)].
    pub fn from_head(head: &[f64; HEAD_WIDTH]) -> Result<Self> {
        NoiseOperatorParams::new(head[0], head[1], head[2], head[3], head[4])
    }

    /// The eigenbasis rotation Q.
    pub fn frame(&self) -> Operator2 {
        rotation(Axis::Z, self.theta1)
            .mul(&rotation(Axis::Y, self.theta2))
            .mul(&rotation(Axis::Z, self.theta3))
    }
}

/// Build V = Q·diag(μ1, μ2)·Q†. Hermitian with eigenvalues exactly {μ1, μ2},
/// so its spectral norm never exceeds max(|μ1|, |μ2|).
pub fn reconstruct_noise_operator(params: &NoiseOperatorParams) -> NoiseOperator {
    let q = params.frame();
    let d = Operator2::diag(params.mu1, params.mu2);
    NoiseOperator::from_matrix(q.mul(&d).mul(&q.adjoint()))
}

/// Which physical quantity feeds each network input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Tau,
    Phi,
    Frequency,
    Chi(usize),
}

/// Affine map applied to one raw feature before it enters the network:
/// x ↦ (x − offset)/scale, chosen so the training data lands in [−1, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureNorm {
    pub offset: f64,
    pub scale: f64,
}

impl FeatureNorm {
    fn from_range(lo: f64, hi: f64) -> Self {
        let half = 0.5 * (hi - lo);
        FeatureNorm {
            offset: 0.5 * (lo + hi),
            // A constant feature maps to 0 instead of dividing by zero.
            scale: if half > 0.0 { half } else { 1.0 },
        }
    }
}

/// The trainable model: network weights plus the fixed input pipeline
/// (feature layout and normalization) they were trained against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrayboxParams {
    pub net: NetworkParams,
    pub layout: Vec<FeatureKind>,
    pub normalization: Vec<FeatureNorm>,
}

impl GrayboxParams {
    /// Fresh model over the standard feature layout (τ, φ, f_B, χ…), with
    /// normalization ranges taken from the training records. `hidden` lists
    /// the tanh hidden-layer widths; the 5-unit head is appended.
    pub fn for_dataset(
        records: &[DatasetRecord],
        hidden: &[usize],
        seed: StreamSeed,
    ) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::invalid("cannot derive feature ranges from an empty dataset"));
        }
        let chi_len = records[0].settings.chi.len();
        if records.iter().any(|r| r.settings.chi.len() != chi_len) {
            return Err(Error::invalid("records disagree on chi length"));
        }
        let layout = standard_layout(chi_len);
        let mut normalization = Vec::with_capacity(layout.len());
        for kind in &layout {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for rec in records {
                let v = raw_feature(kind, &rec.settings)?;
                lo = lo.min(v);
                hi = hi.max(v);
            }
            normalization.push(FeatureNorm::from_range(lo, hi));
        }
        let mut specs: Vec<LayerSpec> = hidden.iter().map(|&w| LayerSpec::tanh(w)).collect();
        specs.push(LayerSpec {
            width: HEAD_WIDTH,
            activation: Activation::Split { linear: HEAD_LINEAR },
        });
        let net = NetworkParams::init(layout.len(), &specs, seed)?;
        let gb = GrayboxParams {
            net,
            layout,
            normalization,
        };
        gb.validate()?;
        Ok(gb)
    }

    pub fn validate(&self) -> Result<()> {
        self.net.validate()?;
        let head = self.net.layers.last().expect("validated non-empty");
        if head.out_width != HEAD_WIDTH
            || head.activation != (Activation::Split { linear: HEAD_LINEAR })
        {
            return Err(Error::invalid(format!(
                "model head must be {HEAD_WIDTH} wide with {HEAD_LINEAR} linear units, got \
                 width {} with {:?}",
                head.out_width, head.activation
            )));
        }
        if self.layout.len() != self.net.input_width {
            return Err(Error::LayoutMismatch(format!(
                "layout describes {} features, network expects {}",
                self.layout.len(),
                self.net.input_width
            )));
        }
        if self.normalization.len() != self.layout.len() {
            return Err(Error::LayoutMismatch(format!(
                "{} normalization entries for {} features",
                self.normalization.len(),
                self.layout.len()
            )));
        }
        for (i, n) in self.normalization.iter().enumerate() {
            if !n.offset.is_finite() || !n.scale.is_finite() || n.scale <= 0.0 {
                return Err(Error::invalid(format!(
                    "feature {i} has invalid normalization (offset {}, scale {})",
                    n.offset, n.scale
                )));
            }
        }
        Ok(())
    }

    /// Number of χ entries the model's inputs require.
    pub fn chi_len(&self) -> usize {
        self.layout
            .iter()
            .filter_map(|k| match k {
                FeatureKind::Chi(i) => Some(i + 1),
                _ => None,
            })
            .max()
            .unwrap_or(0)
    }

    /// Reject settings whose χ vector does not match the trained layout.
    pub fn require_chi_len(&self, chi_len: usize) -> Result<()> {
        if self.chi_len() != chi_len {
            return Err(Error::LayoutMismatch(format!(
                "model was trained with {} chi entries, data provides {chi_len}",
                self.chi_len()
            )));
        }
        Ok(())
    }

    fn features(&self, settings: &PulseSettings) -> Result<Vec<f64>> {
        self.layout
            .iter()
            .zip(&self.normalization)
            .map(|(kind, norm)| Ok((raw_feature(kind, settings)? - norm.offset) / norm.scale))
            .collect()
    }
}

/// τ, φ, f_B, then any χ entries, in that order.
pub fn standard_layout(chi_len: usize) -> Vec<FeatureKind> {
    let mut layout = vec![FeatureKind::Tau, FeatureKind::Phi, FeatureKind::Frequency];
    layout.extend((0..chi_len).map(FeatureKind::Chi));
    layout
}

fn raw_feature(kind: &FeatureKind, settings: &PulseSettings) -> Result<f64> {
    Ok(match *kind {
        FeatureKind::Tau => settings.tau_us,
        FeatureKind::Phi => settings.phi_rad,
        FeatureKind::Frequency => settings.f_b_mhz,
        FeatureKind::Chi(i) => *settings.chi.get(i).ok_or_else(|| {
            Error::LayoutMismatch(format!(
                "model input needs chi[{i}], settings carry {} entries",
                settings.chi.len()
            ))
        })?,
    })
}

/// Everything one forward pass records: the network tape plus the quantum
/// intermediates needed to run the analytic head adjoints.
#[derive(Debug, Clone)]
pub struct GbTape {
    pub nn_tape: Tape,
    pub head: [f64; HEAD_WIDTH],
    /// Eigenbasis rotation Q of the reconstructed operator.
    q: Operator2,
    /// Reconstructed noise operator V.
    v: Operator2,
    /// ρ̃·Z for the ideal-Ramsey state ρ̃ of this input.
    a: Operator2,
    /// Corrected expectation ⟨Z⟩ = Re tr(V ρ̃ Z).
    pub z: f64,
    /// ∂P_cl/∂⟨Z⟩ = α·V_vis for the batch calibration.
    pub dp_dz: f64,
    pub p_hat: f64,
}

/// Full model evaluation: settings → features → network → noise operator →
/// exact Ramsey state → corrected ⟨Z⟩ → click probability.
pub fn gb_forward(
    gb: &GrayboxParams,
    settings: &PulseSettings,
    calib: &ReadoutCalibration,
) -> Result<GbTape> {
    let features = gb.features(settings)?;
    let (head_vec, nn_tape) = network_forward(&gb.net, &features)?;
    let head: [f64; HEAD_WIDTH] = head_vec
        .try_into()
        .map_err(|_| Error::invalid("network head is not 5 wide"))?;
    let params = NoiseOperatorParams::from_head(&head)?;
    let q = params.frame();
    let v = q
        .mul(&Operator2::diag(params.mu1, params.mu2))
        .mul(&q.adjoint());
    let state = evolve(&QubitState::ground(), &u_ramsey(settings))?;
    let a = state.density().mul(&Operator2::pauli_z());
    let z = noisy_expectation(
        &NoiseOperator::from_matrix(v),
        &state,
        &Operator2::pauli_z(),
    )
    .value;
    let p_hat = click_probability(z, calib)?;
    Ok(GbTape {
        nn_tape,
        head,
        q,
        v,
        a,
        z,
        dp_dz: calib.alpha() * calib.visibility(),
        p_hat,
    })
}

/// Convenience: the predicted click probability alone.
pub fn gb_click_probability(
    gb: &GrayboxParams,
    settings: &PulseSettings,
    calib: &ReadoutCalibration,
) -> Result<f64> {
    Ok(gb_forward(gb, settings, calib)?.p_hat)
}

/// The quantum tail of the model on its own: any noise operator → click
/// probability under the ideal Ramsey state for `settings`.
pub fn click_from_noise_operator(
    v: &NoiseOperator,
    settings: &PulseSettings,
    calib: &ReadoutCalibration,
) -> Result<f64> {
    let state = evolve(&QubitState::ground(), &u_ramsey(settings))?;
    let z = noisy_expectation(v, &state, &Operator2::pauli_z()).value;
    click_probability(z, calib)
}

// −i σz/2, the generator of R_Z.
fn gen_z() -> Operator2 {
    Operator2::new([
        [Complex64::new(0.0, -0.5), Complex64::ZERO],
        [Complex64::ZERO, Complex64::new(0.0, 0.5)],
    ])
}

// −i σy/2, the generator of R_Y.
fn gen_y() -> Operator2 {
    Operator2::new([
        [Complex64::ZERO, Complex64::new(-0.5, 0.0)],
        [Complex64::new(0.5, 0.0), Complex64::ZERO],
    ])
}

/// ∂⟨Z⟩/∂head, derived in closed form.
///
/// With V(θ, μ) = Q D Q†, z = Re tr(V·A) and A = ρ̃Z:
///   ∂V/∂θ1 = [G_z, V]           (G_z = −i σz/2 acts from the left of Q)
///   ∂V/∂θ2 = [R_Z(θ1) G_y R_Z(θ1)†, V]
///   ∂V/∂θ3 = Q [G_z, D] Q† = 0  (G_z and D are both diagonal)
///   ∂z/∂μ_k = Re (Q† A Q)_kk
/// The θ3 direction is the gauge freedom of diagonalizing D; its gradient
/// vanishes identically and the unit simply never trains.
pub fn head_z_gradient(tape: &GbTape) -> [f64; HEAD_WIDTH] {
    let gz = gen_z();
    let d_theta1 = gz.commutator(&tape.v).mul(&tape.a).trace().re;

    let rz1 = rotation(Axis::Z, tape.head[0]);
    let gy = rz1.mul(&gen_y()).mul(&rz1.adjoint());
    let d_theta2 = gy.commutator(&tape.v).mul(&tape.a).trace().re;

    let qaq = tape.q.adjoint().mul(&tape.a).mul(&tape.q);
    let d_mu1 = qaq.entries[0][0].re;
    let d_mu2 = qaq.entries[1][1].re;

    [d_theta1, d_theta2, 0.0, d_mu1, d_mu2]
}

/// Loss over a batch without gradients.
pub fn gb_loss(gb: &GrayboxParams, records: &[DatasetRecord], kind: LossKind) -> Result<f64> {
    let preds = batch_predictions(gb, records)?;
    let targets: Vec<f64> = records.iter().map(|r| r.p_cl).collect();
    let (loss, _) = loss_and_gradient(kind, &preds, &targets)?;
    Ok(loss)
}

/// Plain mean squared error of the click probability over a batch.
pub fn gb_mse(gb: &GrayboxParams, records: &[DatasetRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::invalid("mse over an empty batch"));
    }
    let preds = batch_predictions(gb, records)?;
    Ok(preds
        .iter()
        .zip(records)
        .map(|(p, r)| (p - r.p_cl) * (p - r.p_cl))
        .sum::<f64>()
        / records.len() as f64)
}

fn batch_predictions(gb: &GrayboxParams, records: &[DatasetRecord]) -> Result<Vec<f64>> {
    records
        .par_iter()
        .map(|r| Ok(gb_forward(gb, &r.settings, &r.calib)?.p_hat))
        .collect()
}

/// Batch loss and its gradient with respect to every network parameter.
/// Deterministic: records are forwarded in order and partial gradients are
/// reduced chunk by chunk in index order.
pub fn gb_loss_gradient(
    gb: &GrayboxParams,
    records: &[DatasetRecord],
    kind: LossKind,
) -> Result<(f64, GradBuffer)> {
    let tapes: Vec<GbTape> = records
        .par_iter()
        .map(|r| gb_forward(gb, &r.settings, &r.calib))
        .collect::<Result<_>>()?;
    let preds: Vec<f64> = tapes.iter().map(|t| t.p_hat).collect();
    let targets: Vec<f64> = records.iter().map(|r| r.p_cl).collect();
    let (loss, dpred) = loss_and_gradient(kind, &preds, &targets)?;
    if !loss.is_finite() {
        return Err(Error::NumericOverflow(format!(
            "non-finite loss over a batch of {}",
            records.len()
        )));
    }

    let indices: Vec<usize> = (0..records.len()).collect();
    let partials: Vec<Result<GradBuffer>> = indices
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut acc = GradBuffer::zeros_like(&gb.net);
            for &i in chunk {
                let tape = &tapes[i];
                let scale = dpred[i] * tape.dp_dz;
                let dz = head_z_gradient(tape);
                let head_grad: Vec<f64> = dz.iter().map(|d| d * scale).collect();
                acc.add_assign(&backward(&gb.net, &tape.nn_tape, &head_grad)?);
            }
            Ok(acc)
        })
        .collect();
    let mut total = GradBuffer::zeros_like(&gb.net);
    for p in partials {
        total.add_assign(&p?);
    }
    Ok((loss, total))
}

/// Model click probability swept over a frequency grid at fixed everything
/// else — the likelihood curve the Bayesian update consumes.
pub fn gb_predict_grid(
    gb: &GrayboxParams,
    tau_us: f64,
    phi_rad: f64,
    calib: &ReadoutCalibration,
    chi: &[f64],
    f_grid_mhz: &[f64],
) -> Result<Vec<f64>> {
    if f_grid_mhz.is_empty() {
        return Err(Error::invalid("empty frequency grid"));
    }
    f_grid_mhz
        .par_iter()
        .map(|&f| {
            let settings = PulseSettings::with_chi(tau_us, phi_rad, f, chi.to_vec())?;
            Ok(gb_forward(gb, &settings, calib)?.p_hat)
        })
        .collect()
}
