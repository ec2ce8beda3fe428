//! Density-matrix reconstruction from count records.
//!
//! The maximum-likelihood estimator minimises the quadratic approximation to
//! the negative log-likelihood
//!
//! ```text
//! ℓ(ρ) = Σ_k N_k (Tr[ρ E_k] - f_k)² / (f̃_k (1 - f̃_k))
//! ```
//!
//! over the Bloch ball, where `E_k` is the `+1` projector of the intended
//! axis of setting `k`, `f_k = n_k / N_k`, and `f̃_k = (n_k + ½)/(N_k + 1)` is
//! the add-half hedged frequency used only in the weight. Writing
//! `Tr[ρ E_k] = (1 + a_k·r)/2` turns `ℓ` into a convex quadratic in `r`, so the
//! minimiser is either the unconstrained weighted least-squares solution or,
//! if that leaves the ball, the point on the unit sphere found by a scalar
//! search on the Lagrange multiplier.

use std::cmp::Ordering;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TomoError};
use crate::measurement::{CountRecord, MeasurementAxis};
use crate::qubit::{bloch_to_density, BlochVector, DensityMatrix};

/// `|r̂|` within this of 1 marks an estimate on the boundary.
pub const BOUNDARY_TOLERANCE: f64 = 1e-9;
const SPHERE_TOLERANCE: f64 = 1e-12;
const RANK_TOLERANCE: f64 = 1e-9;
const MAX_BISECTIONS: usize = 400;

/// All count records of one tomography experiment.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Dataset {
    records: Vec<CountRecord>,
}

impl Dataset {
    pub fn new(records: Vec<CountRecord>) -> Dataset {
        Dataset { records }
    }

    pub fn records(&self) -> &[CountRecord] {
        &self.records
    }

    pub fn push(&mut self, record: CountRecord) {
        self.records.push(record);
    }

    pub fn extend(&mut self, records: impl IntoIterator<Item = CountRecord>) {
        self.records.extend(records);
    }

    pub fn total_shots(&self) -> u64 {
        self.records.iter().map(|r| r.shots).sum()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Pools records that share an intended axis, sorted by axis so the
    /// result does not depend on record order. Empty settings are dropped.
    pub fn merged(&self) -> Vec<MergedSetting> {
        let mut items: Vec<MergedSetting> = self
            .records
            .iter()
            .filter(|r| r.shots > 0)
            .map(|r| MergedSetting {
                axis: r.intended_axis,
                shots: r.shots,
                plus_counts: r.plus_counts,
            })
            .collect();
        items.sort_by(|a, b| axis_order(a.axis, b.axis));
        let mut out: Vec<MergedSetting> = Vec::with_capacity(items.len());
        for item in items {
            match out.last_mut() {
                Some(last) if last.axis == item.axis => {
                    last.shots += item.shots;
                    last.plus_counts += item.plus_counts;
                }
                _ => out.push(item),
            }
        }
        out
    }
}

fn axis_order(a: MeasurementAxis, b: MeasurementAxis) -> Ordering {
    let (a, b) = (a.vector(), b.vector());
    a.x.total_cmp(&b.x)
        .then(a.y.total_cmp(&b.y))
        .then(a.z.total_cmp(&b.z))
}

/// Counts pooled over every record with the same intended axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergedSetting {
    pub axis: MeasurementAxis,
    pub shots: u64,
    pub plus_counts: u64,
}

impl MergedSetting {
    pub fn frequency(&self) -> f64 {
        self.plus_counts as f64 / self.shots as f64
    }

    /// Least-squares weight `N / (f̃(1 - f̃))`.
    pub fn weight(&self) -> f64 {
        let f = hedged_frequency(self.plus_counts, self.shots);
        self.shots as f64 / (f * (1.0 - f))
    }
}

/// Add-half smoothed frequency `(n + ½)/(N + 1)`, strictly inside `(0, 1)`.
pub fn hedged_frequency(plus_counts: u64, shots: u64) -> f64 {
    (plus_counts as f64 + 0.5) / (shots as f64 + 1.0)
}

/// Result of [`mle`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub rho: DensityMatrix,
    /// `ℓ(ρ̂)`.
    pub objective: f64,
    /// Whether the estimate is pure, `|r̂| = 1` within 1e-9.
    pub on_boundary: bool,
}

/// Linear-inversion estimate `r_k = 2 f_k - 1` from Pauli-frame data.
///
/// The returned vector is raw: it is not projected into the Bloch ball and
/// may have norm up to `√3`.
pub fn linear_inversion(data: &Dataset) -> Result<BlochVector> {
    let mut shots = [0u64; 3];
    let mut plus = [0u64; 3];
    for rec in data.records() {
        let k = MeasurementAxis::PAULI
            .iter()
            .position(|&a| a == rec.intended_axis)
            .ok_or_else(|| {
                TomoError::InsufficientData(format!(
                    "linear inversion needs Pauli-frame data, got axis {:?}",
                    rec.intended_axis.vector()
                ))
            })?;
        shots[k] += rec.shots;
        plus[k] += rec.plus_counts;
    }
    let mut r = [0.0; 3];
    for k in 0..3 {
        if shots[k] == 0 {
            return Err(TomoError::InsufficientData(format!(
                "no shots on Pauli axis {}",
                ["x", "y", "z"][k]
            )));
        }
        r[k] = 2.0 * plus[k] as f64 / shots[k] as f64 - 1.0;
    }
    Ok(BlochVector::from_array(r))
}

/// Quadratic negative log-likelihood `ℓ(ρ)` over all settings of `data`.
pub fn negative_loglikelihood(rho: &DensityMatrix, data: &Dataset) -> f64 {
    let r = rho.bloch();
    data.merged()
        .iter()
        .map(|s| {
            let p = 0.5 * (1.0 + s.axis.vector().dot(r));
            s.weight() * (p - s.frequency()).powi(2)
        })
        .sum()
}

fn to_vector(v: BlochVector) -> Vector3<f64> {
    Vector3::new(v.x, v.y, v.z)
}

fn from_vector(v: &Vector3<f64>) -> BlochVector {
    BlochVector::new(v[0], v[1], v[2])
}

/// Constrained maximum-likelihood estimate over the Bloch ball.
///
/// Fails with [`TomoError::Underdetermined`] when the measured axes do not
/// span 3-space.
pub fn mle(data: &Dataset) -> Result<Estimate> {
    let settings = data.merged();

    let mut scatter = Matrix3::zeros();
    for s in &settings {
        let a = to_vector(s.axis.vector());
        scatter += a * a.transpose();
    }
    let eig = SymmetricEigen::new(scatter);
    let (imin, &lmin) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("3x3 spectrum");
    if settings.is_empty() || lmin < RANK_TOLERANCE {
        let n = eig.eigenvectors.column(imin);
        return Err(TomoError::Underdetermined {
            null_direction: [n[0], n[1], n[2]],
        });
    }

    // ℓ(r) = Σ w_k (a_k·r - c_k)²/4 with c_k = 2 f_k - 1; weights are rescaled
    // by their maximum, which leaves the minimiser unchanged.
    let weights: Vec<f64> = settings.iter().map(MergedSetting::weight).collect();
    let wmax = weights.iter().cloned().fold(0.0, f64::max);
    let mut a_mat = Matrix3::zeros();
    let mut b_vec = Vector3::zeros();
    for (s, w) in settings.iter().zip(&weights) {
        let w = w / wmax;
        let a = to_vector(s.axis.vector());
        let c = 2.0 * s.frequency() - 1.0;
        a_mat += a * a.transpose() * w;
        b_vec += a * (w * c);
    }

    let solve = |mu: f64| -> Vector3<f64> {
        let shifted = a_mat + Matrix3::identity() * mu;
        shifted
            .cholesky()
            .map(|c| c.solve(&b_vec))
            .unwrap_or_else(|| shifted.lu().solve(&b_vec).unwrap_or_else(Vector3::zeros))
    };

    let unconstrained = solve(0.0);
    let r = if unconstrained.norm() <= 1.0 {
        from_vector(&unconstrained)
    } else {
        // |r(μ)| decreases monotonically for μ >= 0; at μ = |b| it is below 1.
        let (mut lo, mut hi) = (0.0, b_vec.norm());
        let mut r = solve(hi);
        for _ in 0..MAX_BISECTIONS {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            r = solve(mid);
            let len = r.norm();
            if (len - 1.0).abs() < SPHERE_TOLERANCE {
                break;
            }
            if len > 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        from_vector(&(r / r.norm()))
    };

    let rho = bloch_to_density(r)?;
    Ok(Estimate {
        rho,
        objective: negative_loglikelihood(&rho, data),
        on_boundary: (r.norm() - 1.0).abs() <= BOUNDARY_TOLERANCE,
    })
}
