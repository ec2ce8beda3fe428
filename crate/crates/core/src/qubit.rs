//! Exact qubit state algebra.
//!
//! States are stored as 2x2 complex density matrices. Every quantity used by
//! the estimators and protocols (purity, fidelity, spectra, the Chernoff
//! exponent) has a closed form for qubits, which is what this module uses.

use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TomoError};

/// Slack allowed on `|r| <= 1` for physical Bloch vectors.
pub const BALL_TOLERANCE: f64 = 1e-9;
/// Entrywise Hermiticity and trace tolerance for density matrices.
pub const MATRIX_TOLERANCE: f64 = 1e-12;
/// Most negative eigenvalue accepted as rounding noise.
pub const EIGEN_TOLERANCE: f64 = 1e-10;
/// Eigenvalue gap below which the spectrum is treated as degenerate.
pub const DEGENERACY_TOLERANCE: f64 = 1e-10;
/// Smallest eigenvalue for which the quadratic infidelity expansion is defined.
pub const FULL_RANK_TOLERANCE: f64 = 1e-8;

const GOLDEN_TOLERANCE: f64 = 1e-8;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };
const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Expectation values `(<σx>, <σy>, <σz>)` of a qubit state.
///
/// Physical states live in the closed unit ball. The same type is also used
/// for raw estimator output (see [`crate::linear_inversion`]) which may leave
/// the ball; such values are documented where they are produced.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BlochVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl BlochVector {
    pub const ZERO: BlochVector = BlochVector::new(0.0, 0.0, 0.0);
    pub const X: BlochVector = BlochVector::new(1.0, 0.0, 0.0);
    pub const Y: BlochVector = BlochVector::new(0.0, 1.0, 0.0);
    pub const Z: BlochVector = BlochVector::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        BlochVector { x, y, z }
    }

    pub fn from_array(v: [f64; 3]) -> Self {
        BlochVector::new(v[0], v[1], v[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(self, other: BlochVector) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(self, other: BlochVector) -> BlochVector {
        BlochVector::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    /// Unit vector in the same direction, or `None` for the zero vector.
    pub fn normalized(self) -> Option<BlochVector> {
        let n = self.norm();
        (n > 0.0).then(|| self * (1.0 / n))
    }

    pub fn max_abs_diff(self, other: BlochVector) -> f64 {
        (self.x - other.x)
            .abs()
            .max((self.y - other.y).abs())
            .max((self.z - other.z).abs())
    }
}

impl Add for BlochVector {
    type Output = BlochVector;
    fn add(self, rhs: BlochVector) -> BlochVector {
        BlochVector::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl Sub for BlochVector {
    type Output = BlochVector;
    fn sub(self, rhs: BlochVector) -> BlochVector {
        BlochVector::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl Mul<f64> for BlochVector {
    type Output = BlochVector;
    fn mul(self, rhs: f64) -> BlochVector {
        BlochVector::new(self.x * rhs, self.y * rhs, self.z * rhs)
    }
}

impl Neg for BlochVector {
    type Output = BlochVector;
    fn neg(self) -> BlochVector {
        BlochVector::new(-self.x, -self.y, -self.z)
    }
}

/// A general 2x2 complex matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Matrix2(pub [[Complex64; 2]; 2]);

impl Matrix2 {
    pub const IDENTITY: Matrix2 = Matrix2([[ONE, ZERO], [ZERO, ONE]]);

    pub fn zeros() -> Matrix2 {
        Matrix2([[ZERO; 2]; 2])
    }

    pub fn pauli_x() -> Matrix2 {
        Matrix2([[ZERO, ONE], [ONE, ZERO]])
    }

    pub fn pauli_y() -> Matrix2 {
        Matrix2([[ZERO, -I], [I, ZERO]])
    }

    pub fn pauli_z() -> Matrix2 {
        Matrix2([[ONE, ZERO], [ZERO, -ONE]])
    }

    /// `|ψ><ψ|`.
    pub fn outer(psi: [Complex64; 2]) -> Matrix2 {
        let mut m = Matrix2::zeros();
        for (i, row) in m.0.iter_mut().enumerate() {
            for (j, entry) in row.iter_mut().enumerate() {
                *entry = psi[i] * psi[j].conj();
            }
        }
        m
    }

    pub fn trace(&self) -> Complex64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn det(&self) -> Complex64 {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    pub fn adjoint(&self) -> Matrix2 {
        let m = &self.0;
        Matrix2([
            [m[0][0].conj(), m[1][0].conj()],
            [m[0][1].conj(), m[1][1].conj()],
        ])
    }

    pub fn scale(&self, s: f64) -> Matrix2 {
        let mut out = *self;
        out.0.iter_mut().flatten().for_each(|e| *e *= s);
        out
    }

    pub fn matmul(&self, rhs: &Matrix2) -> Matrix2 {
        let (a, b) = (&self.0, &rhs.0);
        let mut out = Matrix2::zeros();
        for i in 0..2 {
            for j in 0..2 {
                out.0[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        out
    }

    /// `<u|M|v>`.
    pub fn sandwich(&self, u: [Complex64; 2], v: [Complex64; 2]) -> Complex64 {
        let m = &self.0;
        let mv = [
            m[0][0] * v[0] + m[0][1] * v[1],
            m[1][0] * v[0] + m[1][1] * v[1],
        ];
        u[0].conj() * mv[0] + u[1].conj() * mv[1]
    }

    pub fn max_abs_diff(&self, other: &Matrix2) -> f64 {
        self.0
            .iter()
            .flatten()
            .zip(other.0.iter().flatten())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn hermiticity_defect(&self) -> f64 {
        self.max_abs_diff(&self.adjoint())
    }
}

impl Add for Matrix2 {
    type Output = Matrix2;
    fn add(self, rhs: Matrix2) -> Matrix2 {
        let mut out = self;
        for (e, r) in out.0.iter_mut().flatten().zip(rhs.0.iter().flatten()) {
            *e += r;
        }
        out
    }
}

impl Sub for Matrix2 {
    type Output = Matrix2;
    fn sub(self, rhs: Matrix2) -> Matrix2 {
        self + rhs.scale(-1.0)
    }
}

/// A validated qubit density matrix: Hermitian, unit trace, positive
/// semidefinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix(Matrix2);

impl DensityMatrix {
    /// Validates `m` against the density-matrix invariants.
    pub fn new(m: Matrix2) -> Result<DensityMatrix> {
        let herm = m.hermiticity_defect();
        if herm > MATRIX_TOLERANCE {
            return Err(TomoError::InvalidState(format!(
                "matrix is not Hermitian (defect {herm:e})"
            )));
        }
        let tr = m.trace();
        if (tr - ONE).norm() > MATRIX_TOLERANCE {
            return Err(TomoError::InvalidState(format!(
                "trace {tr} differs from 1"
            )));
        }
        let r = bloch_of_matrix(&m);
        let min_eig = 0.5 * (1.0 - r.norm());
        if min_eig < -EIGEN_TOLERANCE {
            return Err(TomoError::InvalidState(format!(
                "negative eigenvalue {min_eig:e}"
            )));
        }
        Ok(DensityMatrix(m))
    }

    pub fn maximally_mixed() -> DensityMatrix {
        DensityMatrix(Matrix2::IDENTITY.scale(0.5))
    }

    /// Projector onto a (not necessarily normalised) state vector.
    pub fn pure(psi: [Complex64; 2]) -> Result<DensityMatrix> {
        let n2 = psi[0].norm_sqr() + psi[1].norm_sqr();
        if n2 == 0.0 || !n2.is_finite() {
            return Err(TomoError::InvalidState("zero state vector".into()));
        }
        let s = n2.sqrt().recip();
        Ok(DensityMatrix(Matrix2::outer([psi[0] * s, psi[1] * s])))
    }

    pub fn matrix(&self) -> &Matrix2 {
        &self.0
    }

    pub fn entry(&self, i: usize, j: usize) -> Complex64 {
        self.0 .0[i][j]
    }

    pub fn bloch(&self) -> BlochVector {
        bloch_of_matrix(&self.0)
    }
}

fn bloch_of_matrix(m: &Matrix2) -> BlochVector {
    let off = m.0[0][1];
    BlochVector::new(2.0 * off.re, -2.0 * off.im, (m.0[0][0] - m.0[1][1]).re)
}

fn matrix_of_bloch(r: BlochVector) -> Matrix2 {
    Matrix2([
        [
            Complex64::new(0.5 * (1.0 + r.z), 0.0),
            Complex64::new(0.5 * r.x, -0.5 * r.y),
        ],
        [
            Complex64::new(0.5 * r.x, 0.5 * r.y),
            Complex64::new(0.5 * (1.0 - r.z), 0.0),
        ],
    ])
}

/// `ρ = (1 + r·σ)/2`. Fails for vectors outside the Bloch ball.
pub fn bloch_to_density(r: BlochVector) -> Result<DensityMatrix> {
    let n = r.norm();
    if !n.is_finite() || n > 1.0 + BALL_TOLERANCE {
        return Err(TomoError::InvalidState(format!(
            "Bloch vector norm {n} exceeds 1"
        )));
    }
    Ok(DensityMatrix(matrix_of_bloch(r)))
}

/// `r_k = Tr(ρ σ_k)`.
pub fn density_to_bloch(rho: &DensityMatrix) -> BlochVector {
    rho.bloch()
}

pub fn purity(rho: &DensityMatrix) -> f64 {
    0.5 * (1.0 + rho.bloch().norm_squared())
}

/// Spectral decomposition with `λ₁ >= λ₂`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenDecomposition {
    pub values: [f64; 2],
    pub vectors: [[Complex64; 2]; 2],
}

impl EigenDecomposition {
    pub fn reconstruct(&self) -> Matrix2 {
        Matrix2::outer(self.vectors[0]).scale(self.values[0])
            + Matrix2::outer(self.vectors[1]).scale(self.values[1])
    }
}

/// Multiplies `v` by a global phase so that its first component is real and
/// non-negative (or, if that component vanishes, the second is real positive).
fn fix_phase(v: [Complex64; 2]) -> [Complex64; 2] {
    let pivot = if v[0].norm() > 1e-300 { v[0] } else { v[1] };
    let n = pivot.norm();
    if n == 0.0 {
        return v;
    }
    let phase = pivot.conj() / n;
    let mut out = [v[0] * phase, v[1] * phase];
    // Remove the rounding residue left on the pivot component.
    if v[0].norm() > 1e-300 {
        out[0] = Complex64::new(out[0].norm(), 0.0);
    } else {
        out[0] = ZERO;
        out[1] = Complex64::new(out[1].norm(), 0.0);
    }
    out
}

/// State vector whose Bloch vector is the unit vector `n`.
fn ket_of_axis(n: BlochVector) -> [Complex64; 2] {
    let cos_half = (0.5 * (1.0 + n.z)).max(0.0).sqrt();
    let sin_half = (0.5 * (1.0 - n.z)).max(0.0).sqrt();
    let transverse = n.x.hypot(n.y);
    let phase = if transverse > 0.0 {
        Complex64::new(n.x / transverse, n.y / transverse)
    } else {
        ONE
    };
    fix_phase([Complex64::new(cos_half, 0.0), phase * sin_half])
}

/// Bloch vector of the pure state `ψ` (normalised internally).
pub fn axis_of_ket(psi: [Complex64; 2]) -> BlochVector {
    let n2 = psi[0].norm_sqr() + psi[1].norm_sqr();
    let c = psi[0].conj() * psi[1] * (2.0 / n2);
    BlochVector::new(c.re, c.im, (psi[0].norm_sqr() - psi[1].norm_sqr()) / n2)
}

/// Eigendecomposition of a qubit state.
///
/// Eigenvalues are `(1 ± |r|)/2` with eigenvectors along `±r`. A degenerate
/// spectrum returns the computational basis. Eigenvectors follow the phase
/// convention of a real non-negative first component.
pub fn eigendecompose(rho: &DensityMatrix) -> EigenDecomposition {
    let r = rho.bloch();
    let len = r.norm().min(1.0);
    let values = [0.5 * (1.0 + len), 0.5 * (1.0 - len)];
    if len < DEGENERACY_TOLERANCE {
        return EigenDecomposition {
            values,
            vectors: [[ONE, ZERO], [ZERO, ONE]],
        };
    }
    let n = r * (1.0 / r.norm());
    EigenDecomposition {
        values,
        vectors: [ket_of_axis(n), ket_of_axis(-n)],
    }
}

/// Uhlmann fidelity `F = (Tr√(√ρ σ √ρ))²`, via the qubit closed form
/// `F = Tr(ρσ) + 2√(det ρ · det σ)`.
pub fn fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> f64 {
    (1.0 - infidelity(rho, sigma)).clamp(0.0, 1.0)
}

/// `1 - F(ρ, σ)`, evaluated directly to keep precision for nearby states.
pub fn infidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> f64 {
    let (r, s) = (rho.bloch(), sigma.bloch());
    let mixedness = ((1.0 - r.norm_squared()).max(0.0) * (1.0 - s.norm_squared()).max(0.0)).sqrt();
    (0.5 * (1.0 - r.dot(s) - mixedness)).clamp(0.0, 1.0)
}

/// Second-order expansion of `1 - F(ρ, ρ + Δ)`:
/// `½ Σ_ij |<i|Δ|j>|² / (λ_i + λ_j)` in the eigenbasis of `ρ`.
///
/// Requires a full-rank `ρ`; near a rank-deficient state the infidelity is
/// linear rather than quadratic in `Δ`.
pub fn infidelity_quadratic_approx(rho: &DensityMatrix, delta: &Matrix2) -> Result<f64> {
    let herm = delta.hermiticity_defect();
    if herm > MATRIX_TOLERANCE {
        return Err(TomoError::InvalidPerturbation(format!(
            "Hermiticity defect {herm:e}"
        )));
    }
    let tr = delta.trace().norm();
    if tr > MATRIX_TOLERANCE {
        return Err(TomoError::InvalidPerturbation(format!("trace {tr:e}")));
    }
    let eig = eigendecompose(rho);
    if eig.values[1] < FULL_RANK_TOLERANCE {
        return Err(TomoError::RankDeficient {
            min_eigenvalue: eig.values[1],
        });
    }
    let mut sum = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let dij = delta.sandwich(eig.vectors[i], eig.vectors[j]);
            sum += dij.norm_sqr() / (eig.values[i] + eig.values[j]);
        }
    }
    Ok(0.5 * sum)
}

fn clamp_eigenvalue(v: f64) -> f64 {
    if v < 0.0 {
        0.0
    } else {
        v
    }
}

/// `x^s` with the support-projector convention `0^s = 0`.
fn spectral_power(x: f64, s: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x.powf(s)
    }
}

/// Quantum Chernoff exponent `D = -log min_{s∈[0,1]} Tr(ρ^s σ^{1-s})`.
///
/// Returns `f64::INFINITY` when the minimum trace vanishes, i.e. the states
/// have orthogonal supports.
pub fn chernoff_exponent(rho: &DensityMatrix, sigma: &DensityMatrix) -> f64 {
    let a = eigendecompose(rho);
    let b = eigendecompose(sigma);
    let la = a.values.map(clamp_eigenvalue);
    let lb = b.values.map(clamp_eigenvalue);
    let mut overlap = [[0.0; 2]; 2];
    for (i, row) in overlap.iter_mut().enumerate() {
        for (j, o) in row.iter_mut().enumerate() {
            let ip =
                a.vectors[i][0].conj() * b.vectors[j][0] + a.vectors[i][1].conj() * b.vectors[j][1];
            *o = ip.norm_sqr();
        }
    }
    let q = |s: f64| -> f64 {
        let mut t = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                t += spectral_power(la[i], s) * spectral_power(lb[j], 1.0 - s) * overlap[i][j];
            }
        }
        t
    };
    let q_min = golden_section_min(q, 0.0, 1.0, GOLDEN_TOLERANCE);
    if q_min <= 0.0 {
        f64::INFINITY
    } else {
        (-q_min.ln()).max(0.0)
    }
}

/// Minimum value of a unimodal function on `[lo, hi]`, endpoints included.
fn golden_section_min(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    [fc, fd, f(0.5 * (a + b)), f(lo), f(hi)]
        .into_iter()
        .fold(f64::INFINITY, f64::min)
}

/// Three measurement axes, pairwise orthogonal on the Bloch sphere, whose
/// eigenbases are mutually unbiased.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisTriplet {
    pub axes: [BlochVector; 3],
}

/// Builds the measurement frame around an eigenbasis `{ψ₁, ψ₂}`: the axis of
/// `ψ₁`, then the axes of `(ψ₁ + ψ₂)/√2` and `(ψ₁ + iψ₂)/√2`.
pub fn mub_triplet(e: &EigenDecomposition) -> BasisTriplet {
    let [p1, p2] = e.vectors;
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let plus = [(p1[0] + p2[0]) * h, (p1[1] + p2[1]) * h];
    let plus_i = [(p1[0] + I * p2[0]) * h, (p1[1] + I * p2[1]) * h];
    BasisTriplet {
        axes: [axis_of_ket(p1), axis_of_ket(plus), axis_of_ket(plus_i)],
    }
}
