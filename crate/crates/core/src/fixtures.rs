//! Canonical states shared by tests, benches and the CLI.
//!
//! Both states are written in the standard Pauli convention
//! `ρ₀₁ = (<σx> - i<σy>)/2`, so that the target's Bloch vector is
//! `(1/2, 1/√2, 1/2)`. Printed versions of these states that use the opposite
//! sign for `σy` are the complex conjugates of the matrices below; purity and
//! mutual fidelity are unaffected by that choice.

use num_complex::Complex64;

use crate::qubit::{BlochVector, DensityMatrix, Matrix2};

/// Bloch vector of the pure target state.
pub fn target_bloch() -> BlochVector {
    BlochVector::new(0.5, std::f64::consts::FRAC_1_SQRT_2, 0.5)
}

/// State vector of the target: `(√3/2, 1/(2√3) + i/√6)`.
pub fn target_ket() -> [Complex64; 2] {
    let s3 = 3f64.sqrt();
    let s6 = 6f64.sqrt();
    [
        Complex64::new(s3 / 2.0, 0.0),
        Complex64::new(1.0 / (2.0 * s3), 2.0 / (2.0 * s6)),
    ]
}

/// Pure target state with Bloch vector `(1/2, 1/√2, 1/2)`, not aligned with
/// any Pauli axis.
pub fn target_state() -> DensityMatrix {
    DensityMatrix::pure(target_ket()).expect("fixture ket is nonzero")
}

/// Slightly mixed state calibrated from a long static-tomography run
/// (purity 0.991, fidelity 0.992 with [`target_state`]).
pub fn measured_state() -> DensityMatrix {
    let off = Complex64::new(0.2010, -0.3624);
    DensityMatrix::new(Matrix2([
        [Complex64::new(0.7711, 0.0), off],
        [off.conj(), Complex64::new(0.2289, 0.0)],
    ]))
    .expect("fixture matrix is a valid state")
}
