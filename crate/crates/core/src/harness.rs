//! Monte Carlo campaigns over protocols, sample sizes and error models.
//!
//! A campaign runs `R` independent experiments at each `N` of a grid and
//! reports the mean infidelity and its standard error. Every experiment draws
//! from a random stream labelled by `(stream key, N index, repetition)`, so
//! results are identical for any thread count or scheduling order.
//!
//! The stream key covers the true state, the error model and the master
//! seed, but not the protocol or the grid. Campaigns that differ only in
//! protocol therefore see common random numbers, which sharpens protocol
//! comparisons, and single-point campaigns at different `N` share their
//! misalignment draws, which makes noise floors easy to detect.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, TomoError};
use crate::measurement::{derive_seed, ErrorModelSpec, RngContext};
use crate::protocols::{run_protocol, ProtocolSpec};
use crate::qubit::{BlochVector, DensityMatrix};

pub const DEFAULT_REPETITIONS: usize = 150;
/// Relative change per doubling of `N` below which a noise floor is declared.
pub const FLOOR_TOLERANCE: f64 = 0.1;
/// Rows within this many standard errors of a floor are left out of fits.
pub const FLOOR_EXCLUSION_SIGMAS: f64 = 3.0;

/// `count` integers log-spaced over `[min, max]`, rounded and deduplicated.
pub fn log_grid(min: u64, max: u64, count: usize) -> Vec<u64> {
    let mut out: Vec<u64> = log_space(min as f64, max as f64, count)
        .into_iter()
        .map(|v| v.round() as u64)
        .collect();
    out.dedup();
    out
}

/// `count` reals log-spaced over `[min, max]`, endpoints included.
pub fn log_space(min: f64, max: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![min],
        _ => {
            let (lo, hi) = (min.ln(), max.ln());
            (0..count)
                .map(|i| {
                    if i == count - 1 {
                        max
                    } else if i == 0 {
                        min
                    } else {
                        (lo + (hi - lo) * i as f64 / (count - 1) as f64).exp()
                    }
                })
                .collect()
        }
    }
}

/// Default sample-size grid: ten log-spaced points over `[10², 3·10⁴]`.
pub fn default_n_grid() -> Vec<u64> {
    log_grid(100, 30_000, 10)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignSpec {
    pub protocol: ProtocolSpec,
    pub state: DensityMatrix,
    pub n_grid: Vec<u64>,
    pub repetitions: usize,
    pub error_model: ErrorModelSpec,
    pub seed: u64,
}

impl CampaignSpec {
    pub fn new(protocol: ProtocolSpec, state: DensityMatrix, n_grid: Vec<u64>) -> CampaignSpec {
        CampaignSpec {
            protocol,
            state,
            n_grid,
            repetitions: DEFAULT_REPETITIONS,
            error_model: ErrorModelSpec::None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.protocol.validate()?;
        self.error_model.validate()?;
        if self.n_grid.is_empty() {
            return Err(TomoError::InvalidParameter("empty N grid".into()));
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(TomoError::InvalidParameter(
                "N grid must be strictly increasing".into(),
            ));
        }
        if self.repetitions < 2 {
            return Err(TomoError::InvalidParameter(format!(
                "need at least 2 repetitions, got {}",
                self.repetitions
            )));
        }
        for &n in &self.n_grid {
            self.protocol.check_budget(n)?;
        }
        Ok(())
    }

    fn state_bytes(&self, hasher: &mut Sha256) {
        for v in self.state.bloch().to_array() {
            hasher.update(v.to_bits().to_le_bytes());
        }
    }

    /// Key of the random streams shared by all campaigns with the same
    /// state, error model and seed.
    pub fn stream_key(&self) -> u64 {
        let mut h = Sha256::new();
        h.update(b"stream");
        self.state_bytes(&mut h);
        h.update(serde_json::to_vec(&self.error_model).expect("serializable"));
        h.update(self.seed.to_le_bytes());
        first_u64(&h.finalize())
    }

    /// Digest of the complete specification, for provenance records.
    pub fn spec_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(b"campaign");
        h.update(serde_json::to_vec(&self.protocol).expect("serializable"));
        self.state_bytes(&mut h);
        for n in &self.n_grid {
            h.update(n.to_le_bytes());
        }
        h.update((self.repetitions as u64).to_le_bytes());
        h.update(serde_json::to_vec(&self.error_model).expect("serializable"));
        h.update(self.seed.to_le_bytes());
        format!("{:016x}", first_u64(&h.finalize()))
    }

    /// Context for repetition `rep` at grid position `n_index`.
    pub fn run_context(&self, n_index: usize, rep: usize) -> RngContext {
        experiment_context(self.seed, self.stream_key(), n_index, rep)
    }
}

fn experiment_context(seed: u64, stream_key: u64, n_index: usize, rep: usize) -> RngContext {
    RngContext::new(derive_seed(seed, &[stream_key, n_index as u64])).with_experiment(rep as u64)
}

fn first_u64(digest: &[u8]) -> u64 {
    let mut b = [0u8; 8];
    b.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CampaignRow {
    pub n: u64,
    pub reps: usize,
    pub mean_infidelity: f64,
    /// Sample standard deviation over `√R`.
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignResult {
    pub protocol: ProtocolSpec,
    pub rows: Vec<CampaignRow>,
    pub spec_hash: String,
    pub seed: u64,
}

impl CampaignResult {
    pub fn points(&self) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .map(|r| (r.n as f64, r.mean_infidelity))
            .collect()
    }

    /// Power-law fit over all rows, leaving out rows within three standard
    /// errors of `floor` when one is given.
    pub fn fit(&self, floor: Option<f64>) -> Result<ScalingFit> {
        let points: Vec<(f64, f64)> = self
            .rows
            .iter()
            .filter(|r| match floor {
                Some(f) => (r.mean_infidelity - f).abs() > FLOOR_EXCLUSION_SIGMAS * r.stderr,
                None => true,
            })
            .map(|r| (r.n as f64, r.mean_infidelity))
            .collect();
        fit_power_law(&points)
    }
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let r = values.len() as f64;
    let mean = values.iter().sum::<f64>() / r;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1.0);
    (mean, (var / r).sqrt())
}

/// Infidelity of every experiment, ordered by `(N index, repetition)`.
fn campaign_infidelities(spec: &CampaignSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let reps = spec.repetitions;
    let key = spec.stream_key();
    (0..spec.n_grid.len() * reps)
        .into_par_iter()
        .map(|job| {
            let (ni, rep) = (job / reps, job % reps);
            let ctx = experiment_context(spec.seed, key, ni, rep);
            run_protocol(
                &spec.protocol,
                &spec.state,
                spec.n_grid[ni],
                &spec.error_model,
                &ctx,
            )
            .map(|r| r.infidelity)
        })
        .collect()
}

/// Runs `R` experiments per grid point, in parallel, and aggregates them in
/// `(N index, repetition)` order.
pub fn run_campaign(spec: &CampaignSpec) -> Result<CampaignResult> {
    let reps = spec.repetitions;
    let infidelities = campaign_infidelities(spec)?;
    let rows = spec
        .n_grid
        .iter()
        .zip(infidelities.chunks(reps))
        .map(|(&n, chunk)| {
            let (mean, stderr) = mean_and_stderr(chunk);
            CampaignRow {
                n,
                reps,
                mean_infidelity: mean,
                stderr,
            }
        })
        .collect();
    Ok(CampaignResult {
        protocol: spec.protocol,
        rows,
        spec_hash: spec.spec_hash(),
        seed: spec.seed,
    })
}

/// Least-squares fit of `y = β N^p` on log-log axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub beta: f64,
    pub p: f64,
    pub sigma_p: f64,
    /// Standard error of `ln β`.
    pub sigma_log_beta: f64,
    pub n_min: f64,
    pub n_max: f64,
}

/// Ordinary least squares of `ln y` on `ln N`, with the usual slope standard
/// error `√(s² / Sxx)` and `s² = SSR/(n - 2)`.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<ScalingFit> {
    if points.len() < 3 {
        return Err(TomoError::InsufficientData(format!(
            "power-law fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    if let Some(&(n, y)) = points.iter().find(|&&(n, y)| !(n > 0.0 && y > 0.0)) {
        return Err(TomoError::Domain(format!(
            "cannot take logarithm of point ({n}, {y})"
        )));
    }
    let m = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let xbar = xs.iter().sum::<f64>() / m;
    let ybar = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - xbar).powi(2)).sum();
    if sxx == 0.0 {
        return Err(TomoError::Domain("all N values coincide".into()));
    }
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - xbar) * (y - ybar))
        .sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let ssr: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let s2 = ssr / (m - 2.0);
    let sum_x2: f64 = xs.iter().map(|x| x * x).sum();
    let (n_min, n_max) = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.0), hi.max(p.0))
        });
    Ok(ScalingFit {
        beta: intercept.exp(),
        p: slope,
        sigma_p: (s2 / sxx).sqrt(),
        sigma_log_beta: (s2 * sum_x2 / (m * sxx)).sqrt(),
        n_min,
        n_max,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaSweepPoint {
    pub alpha: f64,
    pub campaign: CampaignResult,
    pub fit: ScalingFit,
}

/// One `Adaptive(α)` campaign and power-law fit per `α`; all other campaign
/// settings come from `base`.
pub fn alpha_sweep(alphas: &[f64], base: &CampaignSpec) -> Result<Vec<AlphaSweepPoint>> {
    alphas
        .iter()
        .map(|&alpha| {
            let spec = CampaignSpec {
                protocol: ProtocolSpec::Adaptive { alpha },
                ..base.clone()
            };
            let campaign = run_campaign(&spec)?;
            let fit = campaign.fit(None)?;
            Ok(AlphaSweepPoint {
                alpha,
                campaign,
                fit,
            })
        })
        .collect()
}

/// Error model family swept over magnitudes in a noise-floor study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ErrorFamily {
    Model1,
    Model2,
    Model3 { axis: BlochVector },
}

impl ErrorFamily {
    pub fn with_magnitude(&self, e: f64) -> ErrorModelSpec {
        match *self {
            ErrorFamily::Model1 => ErrorModelSpec::Model1 { e },
            ErrorFamily::Model2 => ErrorModelSpec::Model2 { e },
            ErrorFamily::Model3 { axis } => ErrorModelSpec::Model3 { e, axis },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseFloorSpec {
    pub family: ErrorFamily,
    pub e_grid: Vec<f64>,
    pub protocols: Vec<ProtocolSpec>,
    pub state: DensityMatrix,
    /// First `N` of the doubling search.
    pub start_n: u64,
    /// Largest `N` tried before giving up on a floor.
    pub n_cap: u64,
    pub repetitions: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum FloorStatus {
    Converged { n: u64, floor: f64, stderr: f64 },
    NotConverged { n: u64, mean_infidelity: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FloorPoint {
    pub e: f64,
    pub status: FloorStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseFloorCurve {
    pub protocol: ProtocolSpec,
    pub points: Vec<FloorPoint>,
    /// Fit of `floor = β E^p`; `p` is the log-log slope. `None` with fewer
    /// than three converged magnitudes.
    pub slope: Option<ScalingFit>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseFloorReport {
    pub family: ErrorFamily,
    pub curves: Vec<NoiseFloorCurve>,
}

/// Doubles `N` from `start_n` until the mean infidelity changes by less than
/// [`FLOOR_TOLERANCE`] between successive doublings.
///
/// Successive sample sizes reuse the same repetition streams, so the change
/// is estimated from paired repetitions; it must stay below the tolerance
/// even after adding two standard errors of the paired difference. This
/// keeps heavy-tailed statistical noise from being mistaken for a plateau.
pub fn find_floor(
    protocol: ProtocolSpec,
    state: DensityMatrix,
    error_model: ErrorModelSpec,
    start_n: u64,
    n_cap: u64,
    repetitions: usize,
    seed: u64,
) -> Result<FloorStatus> {
    let campaign_at = |n: u64| -> Result<Vec<f64>> {
        campaign_infidelities(&CampaignSpec {
            protocol,
            state,
            n_grid: vec![n],
            repetitions,
            error_model,
            seed,
        })
    };
    let mut n = start_n;
    let mut prev = campaign_at(n)?;
    loop {
        let next_n = match n.checked_mul(2) {
            Some(v) if v <= n_cap => v,
            _ => {
                return Ok(FloorStatus::NotConverged {
                    n,
                    mean_infidelity: mean_and_stderr(&prev).0,
                })
            }
        };
        let cur = campaign_at(next_n)?;
        let diffs: Vec<f64> = cur.iter().zip(&prev).map(|(c, p)| c - p).collect();
        let (change, change_se) = mean_and_stderr(&diffs);
        let (prev_mean, _) = mean_and_stderr(&prev);
        if change.abs() + 2.0 * change_se < FLOOR_TOLERANCE * prev_mean {
            let (floor, stderr) = mean_and_stderr(&cur);
            return Ok(FloorStatus::Converged {
                n: next_n,
                floor,
                stderr,
            });
        }
        n = next_n;
        prev = cur;
    }
}

/// Locates the noise floor at each error magnitude and fits its log-log
/// slope against the magnitude, per protocol.
pub fn noise_floor_sweep(spec: &NoiseFloorSpec) -> Result<NoiseFloorReport> {
    if spec.e_grid.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
        return Err(TomoError::InvalidParameter(
            "error magnitudes must be finite and non-negative".into(),
        ));
    }
    if spec.e_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(TomoError::InvalidParameter(
            "error grid must be strictly increasing".into(),
        ));
    }
    if spec.start_n > spec.n_cap {
        return Err(TomoError::InvalidParameter(format!(
            "start N {} exceeds cap {}",
            spec.start_n, spec.n_cap
        )));
    }
    let curves = spec
        .protocols
        .iter()
        .map(|&protocol| {
            let points = spec
                .e_grid
                .iter()
                .map(|&e| {
                    let status = find_floor(
                        protocol,
                        spec.state,
                        spec.family.with_magnitude(e),
                        spec.start_n,
                        spec.n_cap,
                        spec.repetitions,
                        spec.seed,
                    )?;
                    Ok(FloorPoint { e, status })
                })
                .collect::<Result<Vec<_>>>()?;
            let converged: Vec<(f64, f64)> = points
                .iter()
                .filter_map(|p| match p.status {
                    FloorStatus::Converged { floor, .. } if p.e > 0.0 => Some((p.e, floor)),
                    _ => None,
                })
                .collect();
            let slope = if converged.len() >= 3 {
                Some(fit_power_law(&converged)?)
            } else {
                None
            };
            Ok(NoiseFloorCurve {
                protocol,
                points,
                slope,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NoiseFloorReport {
        family: spec.family,
        curves,
    })
}
