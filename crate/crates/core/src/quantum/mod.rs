//! Closed-form quantum objects for a single qubit: rotations, the ideal Ramsey
//! unitary, density-matrix evolution, noise-operator expectations, and the map
//! from <Z> to a detector click probability.
//!
//! Units: time in microseconds, frequency in MHz. Their product is
//! dimensionless, so trigonometric arguments carry no hidden powers of ten.

pub mod op2;

use crate::error::{Error, Result};
use num_complex::Complex64;
pub use op2::{su2_exponential, Operator2};
use std::f64::consts::{FRAC_PI_2, PI};

pub const MATRIX_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

/// Density matrix of one qubit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QubitState {
    rho: Operator2,
}

impl QubitState {
    /// Validates trace 1, Hermiticity, and positivity (up to 1e-12).
    pub fn from_density(rho: Operator2) -> Result<Self> {
        if !rho.is_finite() {
            return Err(Error::invalid("density matrix has non-finite entries"));
        }
        if (rho.trace() - Complex64::ONE).norm() > MATRIX_TOL {
            return Err(Error::invalid(format!(
                "density matrix trace {} != 1",
                rho.trace()
            )));
        }
        if !rho.is_hermitian(MATRIX_TOL) {
            return Err(Error::invalid("density matrix not Hermitian"));
        }
        let (lo, _) = rho.hermitian_eigenvalues();
        if lo < -MATRIX_TOL {
            return Err(Error::invalid(format!(
                "density matrix has negative eigenvalue {lo}"
            )));
        }
        Ok(QubitState { rho })
    }

    pub fn ground() -> Self {
        QubitState {
            rho: Operator2::diag(1.0, 0.0),
        }
    }

    pub fn excited() -> Self {
        QubitState {
            rho: Operator2::diag(0.0, 1.0),
        }
    }

    /// |+> = (|0> + |1>)/√2.
    pub fn plus() -> Self {
        let h = Complex64::new(0.5, 0.0);
        QubitState {
            rho: Operator2::new([[h, h], [h, h]]),
        }
    }

    /// |+i> = (|0> + i|1>)/√2.
    pub fn plus_i() -> Self {
        let h = Complex64::new(0.5, 0.0);
        let mi = Complex64::new(0.0, -0.5);
        let pi_ = Complex64::new(0.0, 0.5);
        QubitState {
            rho: Operator2::new([[h, mi], [pi_, h]]),
        }
    }

    pub fn maximally_mixed() -> Self {
        QubitState {
            rho: Operator2::diag(0.5, 0.5),
        }
    }

    pub fn density(&self) -> &Operator2 {
        &self.rho
    }

    /// tr(ρ Z) — real for any physical ρ.
    pub fn expectation_z(&self) -> f64 {
        (self.rho.entries[0][0] - self.rho.entries[1][1]).re
    }

    /// Population of |1>.
    pub fn excited_population(&self) -> f64 {
        self.rho.entries[1][1].re
    }
}

/// Ideal Ramsey sequence parameters plus an opaque external-parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseSettings {
    pub tau_us: f64,
    pub phi_rad: f64,
    pub f_b_mhz: f64,
    pub chi: Vec<f64>,
}

impl PulseSettings {
    pub fn new(tau_us: f64, phi_rad: f64, f_b_mhz: f64) -> Result<Self> {
        Self::with_chi(tau_us, phi_rad, f_b_mhz, Vec::new())
    }

    pub fn with_chi(tau_us: f64, phi_rad: f64, f_b_mhz: f64, chi: Vec<f64>) -> Result<Self> {
        if !tau_us.is_finite() || tau_us < 0.0 {
            return Err(Error::invalid(format!("tau must be finite and >= 0, got {tau_us}")));
        }
        if !phi_rad.is_finite() {
            return Err(Error::invalid("phi must be finite"));
        }
        if !f_b_mhz.is_finite() {
            return Err(Error::invalid("f_B must be finite"));
        }
        if chi.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("chi entries must be finite"));
        }
        Ok(PulseSettings {
            tau_us,
            phi_rad,
            f_b_mhz,
            chi,
        })
    }
}

/// Per-batch detector coefficients (π0, π1) with the derived affine map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReadoutCalibration {
    pub pi0: f64,
    pub pi1: f64,
}

impl ReadoutCalibration {
    pub fn new(pi0: f64, pi1: f64) -> Result<Self> {
        for (name, v) in [("pi0", pi0), ("pi1", pi1)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("{name} must lie in [0,1], got {v}")));
            }
        }
        if pi0 + pi1 == 0.0 {
            return Err(Error::DegenerateCalibration);
        }
        Ok(ReadoutCalibration { pi0, pi1 })
    }

    /// α = (π0 + π1)/2.
    pub fn alpha(&self) -> f64 {
        0.5 * (self.pi0 + self.pi1)
    }

    /// V = (π0 − π1)/(π0 + π1).
    pub fn visibility(&self) -> f64 {
        (self.pi0 - self.pi1) / (self.pi0 + self.pi1)
    }
}

/// 2x2 operator correcting the ideal Pauli-Z expectation: <Z> = Re tr(V ρ̃ Z).
/// The identity recovers closed-system dynamics. Generally non-Hermitian when
/// estimated from noise averages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseOperator {
    pub matrix: Operator2,
}

impl NoiseOperator {
    pub fn identity() -> Self {
        NoiseOperator {
            matrix: Operator2::identity(),
        }
    }

    pub fn from_matrix(matrix: Operator2) -> Self {
        NoiseOperator { matrix }
    }
}

/// Result of a noise-operator expectation: the physical (real) value plus the
/// imaginary residue of the trace, kept for diagnostics because the noise
/// operator need not be Hermitian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoisyExpectation {
    pub value: f64,
    pub imag_residue: f64,
}

pub(crate) fn rotation(axis: Axis, angle: f64) -> Operator2 {
    let half = 0.5 * angle;
    match axis {
        Axis::X => su2_exponential([half, 0.0, 0.0]),
        Axis::Y => su2_exponential([0.0, half, 0.0]),
        Axis::Z => su2_exponential([0.0, 0.0, half]),
    }
}

/// exp(−i·angle·σ_axis/2).
pub fn axis_rotation(axis: Axis, angle: f64) -> Result<Operator2> {
    if !angle.is_finite() {
        return Err(Error::invalid(format!("rotation angle must be finite, got {angle}")));
    }
    Ok(rotation(axis, angle))
}

/// Accumulated Ramsey phase θ = 2π f_B τ + φ.
pub fn ramsey_phase(settings: &PulseSettings) -> f64 {
    2.0 * PI * settings.f_b_mhz * settings.tau_us + settings.phi_rad
}

/// Ideal Ramsey unitary R_X(π/2)·R_Z(θ)·R_X(π/2).
pub fn u_ramsey(settings: &PulseSettings) -> Operator2 {
    let theta = ramsey_phase(settings);
    let rx = rotation(Axis::X, FRAC_PI_2);
    rx.mul(&rotation(Axis::Z, theta)).mul(&rx)
}

/// ρ ↦ UρU†.
pub fn evolve(state: &QubitState, u: &Operator2) -> Result<QubitState> {
    if !u.is_unitary(MATRIX_TOL) {
        return Err(Error::invalid("evolve requires a unitary operator"));
    }
    let rho = u.mul(state.density()).mul(&u.adjoint());
    // Unitarity preserves trace/Hermiticity/positivity; skip revalidation.
    Ok(QubitState { rho })
}

/// <O> = Re tr(V ρ̃ O). The imaginary part of the trace is returned alongside
/// so Monte-Carlo oracles can assert it stays below sampling error.
pub fn noisy_expectation(
    v: &NoiseOperator,
    state_tilde: &QubitState,
    observable: &Operator2,
) -> NoisyExpectation {
    debug_assert!(observable.is_hermitian(MATRIX_TOL));
    let t = v.matrix.mul(state_tilde.density()).mul(observable).trace();
    NoisyExpectation {
        value: t.re,
        imag_residue: t.im,
    }
}

/// P_cl = α(1 + V·<Z>). Tolerates |<Z>| ≤ 1 + 1e-9 (clamped); larger
/// excursions indicate a genuine model violation and are rejected.
pub fn click_probability(z_expectation: f64, calib: &ReadoutCalibration) -> Result<f64> {
    if !z_expectation.is_finite() || z_expectation.abs() > 1.0 + 1e-9 {
        return Err(Error::invalid(format!(
            "<Z> = {z_expectation} outside [-1, 1]"
        )));
    }
    if calib.pi0 + calib.pi1 == 0.0 {
        return Err(Error::DegenerateCalibration);
    }
    let z = z_expectation.clamp(-1.0, 1.0);
    Ok(calib.alpha() * (1.0 + calib.visibility() * z))
}

/// Imperfectly prepared initial state diag(1−ε, ε).
pub fn prep_error_state(epsilon: f64) -> Result<QubitState> {
    if !(0.0..0.5).contains(&epsilon) {
        return Err(Error::invalid(format!(
            "prep epsilon must lie in [0, 0.5), got {epsilon}"
        )));
    }
    Ok(QubitState {
        rho: Operator2::diag(1.0 - epsilon, epsilon),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn axis_rotation_identity_and_diagonal_cases() {
        let u = axis_rotation(Axis::X, 0.0).unwrap();
        assert!(u.max_abs_diff(&Operator2::identity()) < 1e-15);

        let theta = 0.7;
        let u = axis_rotation(Axis::Z, theta).unwrap();
        let want = Operator2::new([
            [Complex64::from_polar(1.0, -theta / 2.0), Complex64::ZERO],
            [Complex64::ZERO, Complex64::from_polar(1.0, theta / 2.0)],
        ]);
        assert!(u.max_abs_diff(&want) < 1e-15);
    }

    #[test]
    fn pi_pulse_flips_ground_state() {
        let u = axis_rotation(Axis::X, PI).unwrap();
        let flipped = evolve(&QubitState::ground(), &u).unwrap();
        assert!(flipped.density().max_abs_diff(QubitState::excited().density()) < 1e-12);
    }

    #[test]
    fn rejects_non_finite_angle() {
        assert!(axis_rotation(Axis::Y, f64::NAN).is_err());
    }

    #[test]
    fn ramsey_phase_arithmetic() {
        let s = PulseSettings::new(0.0, 0.0, 3.7).unwrap();
        assert_eq!(ramsey_phase(&s), 0.0);
        let s = PulseSettings::new(1.0, 0.0, 0.5).unwrap();
        assert!((ramsey_phase(&s) - PI).abs() < 1e-15);
        let s = PulseSettings::new(1.0, FRAC_PI_2, 0.0).unwrap();
        assert!((ramsey_phase(&s) - FRAC_PI_2).abs() < 1e-15);
    }

    fn p0_after_ramsey(settings: &PulseSettings) -> f64 {
        let final_state = evolve(&QubitState::ground(), &u_ramsey(settings)).unwrap();
        1.0 - final_state.excited_population()
    }

    #[test]
    fn u_ramsey_limit_cases() {
        // θ = π: both pulses cancel, qubit returns to |0>
        let s = PulseSettings::new(1.0, 0.0, 0.5).unwrap();
        assert!((p0_after_ramsey(&s) - 1.0).abs() < 1e-12);
        // θ = 0: pulses compose to R_X(π), qubit ends in |1>
        let s = PulseSettings::new(0.0, 0.0, 0.0).unwrap();
        assert!(p0_after_ramsey(&s).abs() < 1e-12);
        assert!(u_ramsey(&s).max_abs_diff(&rotation(Axis::X, PI)) < 1e-12);
    }

    #[test]
    fn evolve_requires_unitary() {
        let not_unitary = Operator2::diag(2.0, 1.0);
        assert!(evolve(&QubitState::ground(), &not_unitary).is_err());
    }

    #[test]
    fn maximally_mixed_is_invariant() {
        let u = u_ramsey(&PulseSettings::new(0.3, 1.1, 2.0).unwrap());
        let out = evolve(&QubitState::maximally_mixed(), &u).unwrap();
        assert!(out.density().max_abs_diff(QubitState::maximally_mixed().density()) < 1e-12);
    }

    #[test]
    fn noisy_expectation_identity_recovers_closed_system() {
        let s = PulseSettings::new(0.8, 0.4, 1.3).unwrap();
        let rho = evolve(&QubitState::ground(), &u_ramsey(&s)).unwrap();
        let e = noisy_expectation(&NoiseOperator::identity(), &rho, &Operator2::pauli_z());
        assert!((e.value + ramsey_phase(&s).cos()).abs() < 1e-12);
        assert!(e.imag_residue.abs() < 1e-12);
    }

    #[test]
    fn noisy_expectation_is_linear_in_v() {
        let s = PulseSettings::new(0.8, 0.4, 1.3).unwrap();
        let rho = evolve(&QubitState::ground(), &u_ramsey(&s)).unwrap();
        let z = Operator2::pauli_z();
        let zero = noisy_expectation(&NoiseOperator::from_matrix(Operator2::zero()), &rho, &z);
        assert_eq!(zero.value, 0.0);
        let mu = 0.37;
        let scaled = noisy_expectation(
            &NoiseOperator::from_matrix(Operator2::identity().scale_re(mu)),
            &rho,
            &z,
        );
        let ident = noisy_expectation(&NoiseOperator::identity(), &rho, &z);
        assert!((scaled.value - mu * ident.value).abs() < 1e-12);
    }

    #[test]
    fn click_probability_cases() {
        let calib = ReadoutCalibration::new(0.03, 0.02).unwrap();
        assert!((click_probability(1.0, &calib).unwrap() - 0.03).abs() < 1e-15);
        assert!((click_probability(0.0, &calib).unwrap() - 0.025).abs() < 1e-15);
        let flat = ReadoutCalibration::new(0.7, 0.7).unwrap();
        assert!((click_probability(-0.4, &flat).unwrap() - 0.7).abs() < 1e-15);
        // slight overshoot is clamped, larger is an error
        assert!(click_probability(1.0 + 5e-10, &calib).is_ok());
        assert!(click_probability(1.1, &calib).is_err());
    }

    #[test]
    fn click_probability_two_forms_agree() {
        for &pi0 in &[0.0, 0.02, 0.3, 1.0] {
            for &pi1 in &[0.0, 0.03, 0.5, 1.0] {
                if pi0 + pi1 == 0.0 {
                    continue;
                }
                let calib = ReadoutCalibration::new(pi0, pi1).unwrap();
                for i in 0..=20 {
                    let z = -1.0 + 0.1 * i as f64;
                    let p = click_probability(z, &calib).unwrap();
                    let p0 = 0.5 * (1.0 + z);
                    let direct = pi0 * p0 + pi1 * (1.0 - p0);
                    assert!((p - direct).abs() < 1e-15, "pi0={pi0} pi1={pi1} z={z}");
                    assert!(p >= pi0.min(pi1) - 1e-15 && p <= pi0.max(pi1) + 1e-15);
                }
            }
        }
    }

    #[test]
    fn degenerate_calibration_is_rejected() {
        assert!(matches!(
            ReadoutCalibration::new(0.0, 0.0),
            Err(Error::DegenerateCalibration)
        ));
    }

    #[test]
    fn prep_error_state_cases() {
        let s = prep_error_state(0.0).unwrap();
        assert!(s.density().max_abs_diff(QubitState::ground().density()) < 1e-15);
        let s = prep_error_state(0.25).unwrap();
        assert_eq!(s.excited_population(), 0.25);
        let (lo, hi) = s.density().hermitian_eigenvalues();
        assert_eq!((lo, hi), (0.25, 0.75));
        assert!(prep_error_state(0.5).is_err());
        assert!(prep_error_state(-0.1).is_err());
    }

    proptest! {
        #[test]
        fn rotations_compose_additively(
            a in -10.0f64..10.0,
            b in -10.0f64..10.0,
            axis in prop_oneof![Just(Axis::X), Just(Axis::Y), Just(Axis::Z)],
        ) {
            let lhs = rotation(axis, a).mul(&rotation(axis, b));
            let rhs = rotation(axis, a + b);
            prop_assert!(lhs.max_abs_diff(&rhs) < 1e-10);
        }

        #[test]
        fn u_ramsey_is_unitary(
            tau in 0.0f64..50.0,
            phi in -7.0f64..7.0,
            fb in -20.0f64..20.0,
        ) {
            let s = PulseSettings::new(tau, phi, fb).unwrap();
            prop_assert!(u_ramsey(&s).is_unitary(1e-12));
        }

        #[test]
        fn closed_system_matches_cosine_form(
            tau in 0.0f64..50.0,
            phi in -7.0f64..7.0,
            fb in -20.0f64..20.0,
        ) {
            let s = PulseSettings::new(tau, phi, fb).unwrap();
            let rho = evolve(&QubitState::ground(), &u_ramsey(&s)).unwrap();
            let e = noisy_expectation(&NoiseOperator::identity(), &rho, &Operator2::pauli_z());
            let p0 = 0.5 * (1.0 + e.value);
            let want = 0.5 * (1.0 - ramsey_phase(&s).cos());
            prop_assert!((p0 - want).abs() < 1e-10);
        }
    }
}
