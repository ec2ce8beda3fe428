//! Single-qubit state tomography with one-step basis adaptation.
//!
//! The crate is organised bottom-up:
//!
//! - [`qubit`]: exact qubit state algebra (Bloch/density conversions, spectra,
//!   fidelity, Chernoff exponent, mutually unbiased basis construction).
//! - [`measurement`]: Born-rule probabilities, exact binomial photon counting,
//!   and systematic waveplate misalignment models.
//! - [`estimators`]: linear inversion and the weighted least-squares
//!   maximum-likelihood estimator constrained to the Bloch ball.
//! - [`protocols`]: static, adaptive, reduced-adaptive and known-basis
//!   tomography strategies with exact shot accounting.
//! - [`harness`]: reproducible Monte Carlo campaigns, power-law fits, alpha
//!   sweeps and noise-floor sweeps.
//! - [`fixtures`]: the canonical target states used across tests and the CLI.

pub mod error;
pub mod estimators;
pub mod fixtures;
pub mod harness;
pub mod measurement;
pub mod protocols;
pub mod qubit;

pub use error::{Result, TomoError};
pub use estimators::{linear_inversion, mle, negative_loglikelihood, Dataset, Estimate};
pub use harness::{
    alpha_sweep, fit_power_law, noise_floor_sweep, run_campaign, CampaignResult, CampaignRow,
    CampaignSpec, ErrorFamily, FloorStatus, NoiseFloorReport, NoiseFloorSpec, ScalingFit,
};
pub use measurement::{
    born_probability, measure_setting, perturb_axes, sample_counts, CountRecord, ErrorModelSpec,
    MeasurementAxis, RngContext,
};
pub use protocols::{run_protocol, ProtocolSpec, RunResult};
pub use qubit::{
    bloch_to_density, chernoff_exponent, density_to_bloch, eigendecompose, fidelity, infidelity,
    infidelity_quadratic_approx, mub_triplet, purity, BasisTriplet, BlochVector, DensityMatrix,
    EigenDecomposition, Matrix2,
};
