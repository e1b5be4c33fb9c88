//! Exact 2x2 complex matrix algebra: the only linear algebra this crate needs.

use num_complex::Complex64;

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Operator2 {
    pub entries: [[Complex64; 2]; 2],
}

impl Operator2 {
    pub const fn new(entries: [[Complex64; 2]; 2]) -> Self {
        Operator2 { entries }
    }

    pub fn zero() -> Self {
        Operator2::new([[Complex64::ZERO; 2]; 2])
    }

    pub fn identity() -> Self {
        Operator2::new([
            [Complex64::ONE, Complex64::ZERO],
            [Complex64::ZERO, Complex64::ONE],
        ])
    }

    pub fn pauli_x() -> Self {
        Operator2::new([
            [Complex64::ZERO, Complex64::ONE],
            [Complex64::ONE, Complex64::ZERO],
        ])
    }

    pub fn pauli_y() -> Self {
        Operator2::new([[Complex64::ZERO, -I], [I, Complex64::ZERO]])
    }

    pub fn pauli_z() -> Self {
        Operator2::new([
            [Complex64::ONE, Complex64::ZERO],
            [Complex64::ZERO, -Complex64::ONE],
        ])
    }

    /// Real diagonal matrix diag(a, b).
    pub fn diag(a: f64, b: f64) -> Self {
        Operator2::new([
            [Complex64::new(a, 0.0), Complex64::ZERO],
            [Complex64::ZERO, Complex64::new(b, 0.0)],
        ])
    }

    pub fn mul(&self, rhs: &Operator2) -> Operator2 {
        let a = &self.entries;
        let b = &rhs.entries;
        Operator2::new([
            [
                a[0][0] * b[0][0] + a[0][1] * b[1][0],
                a[0][0] * b[0][1] + a[0][1] * b[1][1],
            ],
            [
                a[1][0] * b[0][0] + a[1][1] * b[1][0],
                a[1][0] * b[0][1] + a[1][1] * b[1][1],
            ],
        ])
    }

    pub fn add(&self, rhs: &Operator2) -> Operator2 {
        let mut out = *self;
        for r in 0..2 {
            for c in 0..2 {
                out.entries[r][c] += rhs.entries[r][c];
            }
        }
        out
    }

    pub fn sub(&self, rhs: &Operator2) -> Operator2 {
        let mut out = *self;
        for r in 0..2 {
            for c in 0..2 {
                out.entries[r][c] -= rhs.entries[r][c];
            }
        }
        out
    }

    pub fn scale(&self, s: Complex64) -> Operator2 {
        let mut out = *self;
        for r in 0..2 {
            for c in 0..2 {
                out.entries[r][c] *= s;
            }
        }
        out
    }

    pub fn scale_re(&self, s: f64) -> Operator2 {
        self.scale(Complex64::new(s, 0.0))
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Operator2 {
        let a = &self.entries;
        Operator2::new([
            [a[0][0].conj(), a[1][0].conj()],
            [a[0][1].conj(), a[1][1].conj()],
        ])
    }

    pub fn trace(&self) -> Complex64 {
        self.entries[0][0] + self.entries[1][1]
    }

    pub fn det(&self) -> Complex64 {
        self.entries[0][0] * self.entries[1][1] - self.entries[0][1] * self.entries[1][0]
    }

    pub fn commutator(&self, rhs: &Operator2) -> Operator2 {
        self.mul(rhs).sub(&rhs.mul(self))
    }

    /// Largest entrywise |difference| to another matrix.
    pub fn max_abs_diff(&self, rhs: &Operator2) -> f64 {
        let mut m = 0.0f64;
        for r in 0..2 {
            for c in 0..2 {
                m = m.max((self.entries[r][c] - rhs.entries[r][c]).norm());
            }
        }
        m
    }

    pub fn is_finite(&self) -> bool {
        self.entries
            .iter()
            .flatten()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.adjoint().mul(self).max_abs_diff(&Operator2::identity()) <= tol
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.max_abs_diff(&self.adjoint()) <= tol
    }

    /// Largest singular value, from the closed-form eigenvalues of A†A.
    pub fn spectral_norm(&self) -> f64 {
        let g = self.adjoint().mul(self);
        let half_t = 0.5 * g.trace().re;
        let d = g.det().re;
        let disc = (half_t * half_t - d).max(0.0);
        (half_t + disc.sqrt()).max(0.0).sqrt()
    }

    /// Eigenvalues of a Hermitian matrix, ascending. Caller guarantees Hermiticity.
    pub fn hermitian_eigenvalues(&self) -> (f64, f64) {
        let m = 0.5 * self.trace().re;
        let d = self.det().re;
        let s = (m * m - d).max(0.0).sqrt();
        (m - s, m + s)
    }
}

impl std::ops::Mul for Operator2 {
    type Output = Operator2;
    fn mul(self, rhs: Operator2) -> Operator2 {
        Operator2::mul(&self, &rhs)
    }
}

impl std::ops::Add for Operator2 {
    type Output = Operator2;
    fn add(self, rhs: Operator2) -> Operator2 {
        Operator2::add(&self, &rhs)
    }
}

impl std::ops::Sub for Operator2 {
    type Output = Operator2;
    fn sub(self, rhs: Operator2) -> Operator2 {
        Operator2::sub(&self, &rhs)
    }
}

/// exp(-i (c_x σx + c_y σy + c_z σz)) via the closed form
/// cos(r) I - i sin(r)/r (c·σ), r = |c|. Exactly unitary up to rounding.
pub fn su2_exponential(c: [f64; 3]) -> Operator2 {
    let [cx, cy, cz] = c;
    let r2 = cx * cx + cy * cy + cz * cz;
    // Squaring overflows for |c| ≳ 1e154 even though the norm itself is
    // representable; fall back to the slower overflow-free form.
    let r = if r2.is_finite() {
        r2.sqrt()
    } else {
        cx.hypot(cy).hypot(cz)
    };
    let (cos_r, sinc) = if r < 1e-30 {
        (1.0, 1.0)
    } else {
        (r.cos(), r.sin() / r)
    };
    let k = Complex64::new(cos_r, 0.0);
    Operator2::new([
        [
            k - I * Complex64::new(sinc * cz, 0.0),
            Complex64::new(-sinc * cy, -sinc * cx),
        ],
        [
            Complex64::new(sinc * cy, -sinc * cx),
            k + I * Complex64::new(sinc * cz, 0.0),
        ],
    ])
}
