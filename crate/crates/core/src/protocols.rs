//! Tomography strategies and their shot budgets.
//!
//! Every protocol spends exactly `N` shots. Within a phase, the phase budget
//! is split across its settings as `⌊B/k⌋` each, with the remainder handed to
//! the earliest settings (x, then y, for the Pauli frame).
//!
//! Adaptive variants measure the Pauli frame on `N₀` shots, form a
//! preliminary maximum-likelihood estimate `ρ̂₀`, and spend the remaining
//! `N - N₀` shots in a frame built around the eigenbasis of `ρ̂₀`. The final
//! estimate uses the records of both phases.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TomoError};
use crate::estimators::{mle, Dataset, Estimate};
use crate::measurement::{measure_setting, ErrorModelSpec, MeasurementAxis, RngContext};
use crate::qubit::{eigendecompose, infidelity, mub_triplet, DensityMatrix};

/// Preliminary-sample exponent used by [`ProtocolSpec::AdaptivePow`].
pub const DEFAULT_POW_EXPONENT: f64 = 2.0 / 3.0;

const PHASE_PRELIMINARY: u64 = 0;
const PHASE_ADAPTED: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "protocol", rename_all = "snake_case")]
pub enum ProtocolSpec {
    /// Pauli frame, `N/3` shots per axis.
    Static,
    /// Adaptive with `N₀ = round(αN)`.
    Adaptive { alpha: f64 },
    /// Adaptive with `N₀ = round(N^exponent)`.
    AdaptivePow { exponent: f64 },
    /// Adaptive with the whole second phase on the diagonal axis of `ρ̂₀`.
    ReducedAdaptive { alpha: f64 },
    /// Frame aligned with the true eigenbasis for all shots. A diagnostic
    /// ceiling, not a realizable protocol.
    KnownBasis,
}

impl ProtocolSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ProtocolSpec::Adaptive { alpha } | ProtocolSpec::ReducedAdaptive { alpha } => {
                if !(alpha > 0.0 && alpha < 1.0) {
                    return Err(TomoError::InvalidParameter(format!(
                        "alpha must lie in (0, 1), got {alpha}"
                    )));
                }
            }
            ProtocolSpec::AdaptivePow { exponent } => {
                if !(exponent > 0.0 && exponent < 1.0) {
                    return Err(TomoError::InvalidParameter(format!(
                        "exponent must lie in (0, 1), got {exponent}"
                    )));
                }
            }
            ProtocolSpec::Static | ProtocolSpec::KnownBasis => {}
        }
        Ok(())
    }

    /// Shots spent on the preliminary Pauli-frame phase, if any.
    pub fn preliminary_shots(&self, n: u64) -> Option<u64> {
        match *self {
            ProtocolSpec::Adaptive { alpha } | ProtocolSpec::ReducedAdaptive { alpha } => {
                Some((alpha * n as f64).round() as u64)
            }
            ProtocolSpec::AdaptivePow { exponent } => {
                Some((n as f64).powf(exponent).round() as u64)
            }
            ProtocolSpec::Static | ProtocolSpec::KnownBasis => None,
        }
    }

    /// Checks that every setting of the protocol receives at least one shot.
    pub fn check_budget(&self, n: u64) -> Result<()> {
        let ok = match (self, self.preliminary_shots(n)) {
            (ProtocolSpec::ReducedAdaptive { .. }, Some(n0)) => n0 >= 3 && n0 < n,
            (_, Some(n0)) => n0 >= 3 && n >= n0 + 3,
            (_, None) => n >= 3,
        };
        if ok {
            Ok(())
        } else {
            let required = match self {
                ProtocolSpec::Static | ProtocolSpec::KnownBasis => 3,
                ProtocolSpec::ReducedAdaptive { .. } => 4,
                _ => 6,
            };
            Err(TomoError::Budget { n, required })
        }
    }
}

impl fmt::Display for ProtocolSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProtocolSpec::Static => write!(f, "static"),
            ProtocolSpec::Adaptive { alpha } => write!(f, "adaptive(alpha={alpha})"),
            ProtocolSpec::AdaptivePow { exponent } => {
                write!(f, "adaptive-pow(exponent={exponent})")
            }
            ProtocolSpec::ReducedAdaptive { alpha } => write!(f, "reduced-adaptive(alpha={alpha})"),
            ProtocolSpec::KnownBasis => write!(f, "known-basis"),
        }
    }
}

/// Outcome of one simulated tomography experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub estimate: Estimate,
    pub preliminary: Option<Estimate>,
    pub dataset: Dataset,
    pub infidelity: f64,
    pub total_shots: u64,
}

/// Splits `budget` over `k` settings: `⌊budget/k⌋` each, remainder to the
/// first settings.
pub fn split_budget(budget: u64, k: usize) -> Vec<u64> {
    let k64 = k as u64;
    (0..k64)
        .map(|i| budget / k64 + u64::from(i < budget % k64))
        .collect()
}

fn measure_frame(
    rho: &DensityMatrix,
    axes: &[MeasurementAxis],
    budget: u64,
    err: &ErrorModelSpec,
    ctx: &RngContext,
) -> Vec<crate::measurement::CountRecord> {
    axes.iter()
        .zip(split_budget(budget, axes.len()))
        .enumerate()
        .map(|(i, (&axis, shots))| {
            measure_setting(rho, axis, shots, err, &ctx.with_setting(i as u64))
        })
        .collect()
}

fn frame_axes(rho: &DensityMatrix) -> Result<[MeasurementAxis; 3]> {
    let triplet = mub_triplet(&eigendecompose(rho));
    Ok([
        MeasurementAxis::from_direction(triplet.axes[0])?,
        MeasurementAxis::from_direction(triplet.axes[1])?,
        MeasurementAxis::from_direction(triplet.axes[2])?,
    ])
}

/// Simulates one experiment of `spec` on `rho_true` with `n` shots.
///
/// The experiment index is taken from `rng`. Systematic errors affect every
/// setting of both phases; the estimators only see intended axes.
pub fn run_protocol(
    spec: &ProtocolSpec,
    rho_true: &DensityMatrix,
    n: u64,
    err: &ErrorModelSpec,
    rng: &RngContext,
) -> Result<RunResult> {
    spec.validate()?;
    err.validate()?;
    spec.check_budget(n)?;

    let phase1 = rng.with_phase(PHASE_PRELIMINARY);
    let phase2 = rng.with_phase(PHASE_ADAPTED);
    let mut dataset = Dataset::default();
    let mut preliminary = None;

    match *spec {
        ProtocolSpec::Static => {
            dataset.extend(measure_frame(
                rho_true,
                &MeasurementAxis::PAULI,
                n,
                err,
                &phase1,
            ));
        }
        ProtocolSpec::KnownBasis => {
            let axes = frame_axes(rho_true)?;
            dataset.extend(measure_frame(rho_true, &axes, n, err, &phase1));
        }
        ProtocolSpec::Adaptive { .. }
        | ProtocolSpec::AdaptivePow { .. }
        | ProtocolSpec::ReducedAdaptive { .. } => {
            let n0 = spec
                .preliminary_shots(n)
                .expect("adaptive protocols have a first phase");
            dataset.extend(measure_frame(
                rho_true,
                &MeasurementAxis::PAULI,
                n0,
                err,
                &phase1,
            ));
            let est0 = mle(&dataset)?;
            let axes = frame_axes(&est0.rho)?;
            let adapted: &[MeasurementAxis] = match spec {
                ProtocolSpec::ReducedAdaptive { .. } => &axes[..1],
                _ => &axes,
            };
            dataset.extend(measure_frame(rho_true, adapted, n - n0, err, &phase2));
            preliminary = Some(est0);
        }
    }

    let estimate = mle(&dataset)?;
    Ok(RunResult {
        infidelity: infidelity(&estimate.rho, rho_true),
        total_shots: dataset.total_shots(),
        estimate,
        preliminary,
        dataset,
    })
}
