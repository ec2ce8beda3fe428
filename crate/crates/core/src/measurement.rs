//! Projective polarization measurements on a single qubit.
//!
//! A measurement setting is an intended Bloch axis; the detector reports
//! `+1` counts distributed binomially with the Born probability of the axis
//! that was actually realized. Waveplate misalignment is modelled as a small
//! rotation of the realized axis away from the intended one. Estimators only
//! ever see the intended axis.
//!
//! The misalignment models map a waveplate angle error `δθ` to a tilt of
//! [`BLOCH_ANGLE_PER_WAVEPLATE_ANGLE`]` · δθ` on the Bloch sphere. The tilt
//! happens about an axis perpendicular to the intended axis (rotations about
//! the axis itself do not change the measurement):
//!
//! - Model 1: independent `δθ ~ N(0, E²)` and a uniformly random tilt
//!   direction for every setting of every experiment.
//! - Model 2: one `δθ ~ N(0, E²)` per experiment, applied as a tilt of the
//!   analyzer about a random direction perpendicular to its `ẑ` axis. Each
//!   setting carries that tilt to its own axis (see
//!   `tilt_in_analyzer_frame`), so the settings are not rotated rigidly
//!   together; a rigid rotation would be an undetectable change of frame.
//! - Model 3: as Model 2 with `δθ = E` and the analyzer tilted about the
//!   component of a fixed axis perpendicular to `ẑ`, so every experiment
//!   sees the same deterministic distortion.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TomoError};
use crate::qubit::{BlochVector, DensityMatrix};

/// Bloch-sphere tilt produced by a unit waveplate angle error, taking the
/// half-wave plate as the element that errs. Turning a half-wave plate by
/// `δθ` turns the output polarization by `2δθ`, which is `4δθ` on the
/// Poincaré sphere.
pub const BLOCH_ANGLE_PER_WAVEPLATE_ANGLE: f64 = 4.0;

const UNIT_TOLERANCE: f64 = 1e-10;

/// A unit Bloch vector; the outcomes are the projectors `(1 ± a·σ)/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BlochVector", into = "BlochVector")]
pub struct MeasurementAxis(BlochVector);

impl MeasurementAxis {
    pub const X: MeasurementAxis = MeasurementAxis(BlochVector::X);
    pub const Y: MeasurementAxis = MeasurementAxis(BlochVector::Y);
    pub const Z: MeasurementAxis = MeasurementAxis(BlochVector::Z);
    pub const PAULI: [MeasurementAxis; 3] = [Self::X, Self::Y, Self::Z];

    pub fn new(v: BlochVector) -> Result<MeasurementAxis> {
        let n = v.norm();
        if (n - 1.0).abs() > UNIT_TOLERANCE {
            return Err(TomoError::InvalidAxis(format!("norm {n} is not 1")));
        }
        Ok(MeasurementAxis(v))
    }

    /// Normalises `v`; fails only for the zero vector.
    pub fn from_direction(v: BlochVector) -> Result<MeasurementAxis> {
        v.normalized()
            .map(MeasurementAxis)
            .ok_or_else(|| TomoError::InvalidAxis("zero direction".into()))
    }

    pub fn vector(self) -> BlochVector {
        self.0
    }

    /// A fixed orthonormal pair spanning the plane perpendicular to the axis.
    pub fn perpendicular_basis(self) -> (BlochVector, BlochVector) {
        let a = self.0;
        let helper = if a.x.abs() <= a.y.abs() && a.x.abs() <= a.z.abs() {
            BlochVector::X
        } else if a.y.abs() <= a.z.abs() {
            BlochVector::Y
        } else {
            BlochVector::Z
        };
        let e1 = (helper - a * helper.dot(a))
            .normalized()
            .expect("helper axis is never parallel to a unit vector");
        (e1, a.cross(e1))
    }

    /// Tilts the axis by `angle` about the unit axis `about`, which must be
    /// perpendicular to it.
    fn tilt(self, about: BlochVector, angle: f64) -> MeasurementAxis {
        let v = self.0 * angle.cos() + about.cross(self.0) * angle.sin();
        MeasurementAxis(v * (1.0 / v.norm()))
    }

    /// Tilts by `angle` as if the analyzer itself were turned by `angle`
    /// about `about`, a unit vector perpendicular to `ẑ`.
    ///
    /// The analyzer always projects on `ẑ`; a setting is the rotation that
    /// carries `ẑ` onto this axis along a great circle. The tilt of the
    /// analyzer is carried along with it, so its direction on the sphere
    /// depends on the setting.
    fn tilt_in_analyzer_frame(self, about: BlochVector, angle: f64) -> MeasurementAxis {
        let direction = setting_rotation(self.0, about.cross(BlochVector::Z));
        let v = self.0 * angle.cos() + direction * angle.sin();
        MeasurementAxis(v * (1.0 / v.norm()))
    }
}

impl TryFrom<BlochVector> for MeasurementAxis {
    type Error = TomoError;
    fn try_from(v: BlochVector) -> Result<Self> {
        MeasurementAxis::new(v)
    }
}

impl From<MeasurementAxis> for BlochVector {
    fn from(a: MeasurementAxis) -> BlochVector {
        a.0
    }
}

/// Counts gathered at one measurement setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountRecord {
    pub intended_axis: MeasurementAxis,
    pub realized_axis: MeasurementAxis,
    pub shots: u64,
    pub plus_counts: u64,
}

impl CountRecord {
    /// Error-free record, `realized_axis == intended_axis`.
    pub fn new(axis: MeasurementAxis, shots: u64, plus_counts: u64) -> Result<CountRecord> {
        if plus_counts > shots {
            return Err(TomoError::InvalidParameter(format!(
                "{plus_counts} plus counts exceed {shots} shots"
            )));
        }
        Ok(CountRecord {
            intended_axis: axis,
            realized_axis: axis,
            shots,
            plus_counts,
        })
    }

    pub fn frequency(&self) -> f64 {
        self.plus_counts as f64 / self.shots as f64
    }
}

/// Systematic waveplate-misalignment model. `e` is the waveplate angle error
/// scale in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ErrorModelSpec {
    #[default]
    None,
    Model1 {
        e: f64,
    },
    Model2 {
        e: f64,
    },
    Model3 {
        e: f64,
        axis: BlochVector,
    },
}

impl ErrorModelSpec {
    pub fn magnitude(&self) -> f64 {
        match *self {
            ErrorModelSpec::None => 0.0,
            ErrorModelSpec::Model1 { e } | ErrorModelSpec::Model2 { e } => e,
            ErrorModelSpec::Model3 { e, .. } => e,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let e = self.magnitude();
        if !(e.is_finite() && e >= 0.0) {
            return Err(TomoError::InvalidParameter(format!(
                "error magnitude must be a finite non-negative angle, got {e}"
            )));
        }
        if let ErrorModelSpec::Model3 { axis, .. } = self {
            if axis.normalized().is_none() || !axis.norm().is_finite() {
                return Err(TomoError::InvalidParameter(
                    "model 3 rotation axis must be a nonzero vector".into(),
                ));
            }
        }
        Ok(())
    }
}

#[repr(u64)]
#[derive(Debug, Clone, Copy)]
enum Stream {
    Counts = 0x636f_756e_7473,
    SettingMisalignment = 0x0073_6574_7469_6e67,
    ExperimentMisalignment = 0x0065_7870_6572_696d,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds a sequence of labels into a seed. Distinct label paths give
/// unrelated seeds.
pub fn derive_seed(seed: u64, labels: &[u64]) -> u64 {
    labels.iter().fold(splitmix64(seed), |h, &l| {
        splitmix64(h.rotate_left(23) ^ splitmix64(l))
    })
}

/// Labelled source of random streams.
///
/// Every draw is a pure function of `(seed, experiment, phase, setting)` and
/// the purpose of the draw, so results never depend on scheduling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngContext {
    seed: u64,
    experiment: u64,
    phase: u64,
    setting: u64,
}

impl RngContext {
    pub fn new(seed: u64) -> RngContext {
        RngContext {
            seed,
            experiment: 0,
            phase: 0,
            setting: 0,
        }
    }

    pub fn with_experiment(self, experiment: u64) -> RngContext {
        RngContext { experiment, ..self }
    }

    pub fn with_phase(self, phase: u64) -> RngContext {
        RngContext { phase, ..self }
    }

    pub fn with_setting(self, setting: u64) -> RngContext {
        RngContext { setting, ..self }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn experiment(&self) -> u64 {
        self.experiment
    }

    pub fn phase(&self) -> u64 {
        self.phase
    }

    pub fn setting(&self) -> u64 {
        self.setting
    }

    fn setting_stream(&self, purpose: Stream) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(derive_seed(
            self.seed,
            &[purpose as u64, self.experiment, self.phase, self.setting],
        ))
    }

    fn experiment_stream(&self, purpose: Stream) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &[purpose as u64, self.experiment]))
    }
}

/// Probability of the `+1` outcome, `(1 + a·r)/2`.
pub fn born_probability(rho: &DensityMatrix, axis: MeasurementAxis) -> f64 {
    (0.5 * (1.0 + axis.vector().dot(rho.bloch()))).clamp(0.0, 1.0)
}

/// `(p₊, p₋)` with `p₋ = 1 - p₊`.
pub fn outcome_probabilities(rho: &DensityMatrix, axis: MeasurementAxis) -> (f64, f64) {
    let p = born_probability(rho, axis);
    (p, 1.0 - p)
}

/// Exact `Binomial(shots, p)` draw from the context's count stream.
pub fn sample_counts(p: f64, shots: u64, rng: &RngContext) -> u64 {
    let p = p.clamp(0.0, 1.0);
    let dist = Binomial::new(shots, p).expect("p is clamped to [0, 1]");
    dist.sample(&mut rng.setting_stream(Stream::Counts))
}

fn gaussian_angle(rng: &mut ChaCha8Rng, e: f64) -> f64 {
    if e == 0.0 {
        return 0.0;
    }
    Normal::new(0.0, e)
        .expect("finite non-negative scale")
        .sample(rng)
}

/// Component of `axis` perpendicular to `ẑ`, or `x̂` when there is none.
fn analyzer_tilt_axis(axis: BlochVector) -> BlochVector {
    BlochVector::new(axis.x, axis.y, 0.0)
        .normalized()
        .filter(|_| axis.x.hypot(axis.y) > 1e-9)
        .unwrap_or(BlochVector::X)
}

/// Applies the great-circle rotation taking `ẑ` to the unit vector `a` to
/// `v`. Taking `ẑ` to `-ẑ` turns about `x̂`.
fn setting_rotation(a: BlochVector, v: BlochVector) -> BlochVector {
    let cos = a.z;
    let axis = BlochVector::Z.cross(a);
    let sin = axis.norm();
    let k = if sin > 1e-12 {
        axis * (1.0 / sin)
    } else if cos > 0.0 {
        return v;
    } else {
        BlochVector::X
    };
    v * cos + k.cross(v) * sin + k * (k.dot(v) * (1.0 - cos))
}

/// Realized axes for a list of settings. Setting `i` of the list uses the
/// stream labels of setting `rng.setting() + i` in the given experiment.
pub fn perturb_axes(
    intended: &[MeasurementAxis],
    model: &ErrorModelSpec,
    experiment_index: u64,
    rng: &RngContext,
) -> Vec<MeasurementAxis> {
    let ctx = rng.with_experiment(experiment_index);
    let k = BLOCH_ANGLE_PER_WAVEPLATE_ANGLE;
    match *model {
        ErrorModelSpec::None => intended.to_vec(),
        ErrorModelSpec::Model1 { e } => intended
            .iter()
            .enumerate()
            .map(|(i, &a)| {
                let mut stream = ctx
                    .with_setting(ctx.setting() + i as u64)
                    .setting_stream(Stream::SettingMisalignment);
                let dtheta = gaussian_angle(&mut stream, e);
                let phi = stream.random::<f64>() * TAU;
                let (e1, e2) = a.perpendicular_basis();
                a.tilt(e1 * phi.cos() + e2 * phi.sin(), k * dtheta)
            })
            .collect(),
        ErrorModelSpec::Model2 { e } => {
            let mut stream = ctx.experiment_stream(Stream::ExperimentMisalignment);
            let dtheta = gaussian_angle(&mut stream, e);
            let phi = stream.random::<f64>() * TAU;
            let about = BlochVector::new(phi.cos(), phi.sin(), 0.0);
            intended
                .iter()
                .map(|a| a.tilt_in_analyzer_frame(about, k * dtheta))
                .collect()
        }
        ErrorModelSpec::Model3 { e, axis } => intended
            .iter()
            .map(|a| a.tilt_in_analyzer_frame(analyzer_tilt_axis(axis), k * e))
            .collect(),
    }
}

/// Measures `shots` copies of `rho` at one setting. The experiment index is
/// taken from the context.
pub fn measure_setting(
    rho: &DensityMatrix,
    intended: MeasurementAxis,
    shots: u64,
    model: &ErrorModelSpec,
    rng: &RngContext,
) -> CountRecord {
    let realized = perturb_axes(&[intended], model, rng.experiment(), rng)[0];
    let plus_counts = sample_counts(born_probability(rho, realized), shots, rng);
    CountRecord {
        intended_axis: intended,
        realized_axis: realized,
        shots,
        plus_counts,
    }
}
