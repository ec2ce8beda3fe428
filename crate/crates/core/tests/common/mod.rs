//! Independent oracles and randomized checks shared by the property tests
//! and the acceptance suite. Each check returns a description of the first
//! violation it finds.

#![allow(dead_code)]

use nalgebra::Matrix2 as CMatrix;
use num_complex::Complex64;
use qtomo::estimators::hedged_frequency;
use qtomo::qubit::axis_of_ket;
use qtomo::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type Check = std::result::Result<String, String>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_direction(rng: &mut impl Rng) -> BlochVector {
    loop {
        let v = BlochVector::new(
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        );
        if let Some(u) = v.normalized() {
            return u;
        }
    }
}

/// Uniform in the ball of radius `max_radius`.
pub fn random_bloch(rng: &mut impl Rng, max_radius: f64) -> BlochVector {
    random_direction(rng) * (max_radius * rng.random::<f64>().cbrt())
}

pub fn random_state(rng: &mut impl Rng, max_radius: f64) -> DensityMatrix {
    bloch_to_density(random_bloch(rng, max_radius)).unwrap()
}

fn to_complex_matrix(m: &Matrix2) -> CMatrix<Complex64> {
    CMatrix::new(m.0[0][0], m.0[0][1], m.0[1][0], m.0[1][1])
}

/// Principal square root of a positive semidefinite Hermitian matrix.
fn sqrtm(m: &CMatrix<Complex64>) -> CMatrix<Complex64> {
    let hermitian = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = hermitian.symmetric_eigen();
    let roots = eig
        .eigenvalues
        .map(|l| Complex64::new(l.max(0.0).sqrt(), 0.0));
    eig.eigenvectors * CMatrix::from_diagonal(&roots) * eig.eigenvectors.adjoint()
}

/// `(Tr √(√ρ σ √ρ))²` by matrix square roots.
pub fn oracle_fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> f64 {
    let r = to_complex_matrix(rho.matrix());
    let s = to_complex_matrix(sigma.matrix());
    let root = sqrtm(&r);
    let inner = sqrtm(&(root * s * root));
    inner.trace().re.powi(2)
}

pub fn check_fidelity_oracle(pairs: usize, seed: u64) -> Check {
    let mut rng = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..pairs {
        let rho = random_state(&mut rng, 1.0);
        let sigma = random_state(&mut rng, 1.0);
        let (f, oracle) = (fidelity(&rho, &sigma), oracle_fidelity(&rho, &sigma));
        let err = (f - oracle).abs();
        if err > 1e-10 {
            return Err(format!(
                "F = {f} but oracle gives {oracle} for {:?} / {:?}",
                rho.bloch(),
                sigma.bloch()
            ));
        }
        worst = worst.max(err);
    }
    Ok(format!("{pairs} pairs, max deviation {worst:.1e}"))
}

/// Random traceless Hermitian matrix with unit Frobenius norm, and its
/// Bloch-space direction `d` with `Δ = d·σ`.
pub fn random_perturbation(rng: &mut impl Rng) -> (Matrix2, BlochVector) {
    let d = random_direction(rng) * std::f64::consts::FRAC_1_SQRT_2;
    let m = Matrix2::pauli_x().scale(d.x)
        + Matrix2::pauli_y().scale(d.y)
        + Matrix2::pauli_z().scale(d.z);
    (m, d)
}

pub fn check_quadratic_remainder(cases: usize, seed: u64) -> Check {
    let mut rng = rng(seed);
    let mut worst_growth = 0.0f64;
    for _ in 0..cases {
        let r = random_bloch(&mut rng, 0.85);
        let rho = bloch_to_density(r).unwrap();
        let (delta, d) = random_perturbation(&mut rng);
        let remainder = |eps: f64| -> f64 {
            let shifted = bloch_to_density(r + d * (2.0 * eps)).unwrap();
            let exact = infidelity(&rho, &shifted);
            let approx = infidelity_quadratic_approx(&rho, &delta.scale(eps)).unwrap();
            (exact - approx).abs() / eps.powi(3)
        };
        let (r1, r2, r3) = (remainder(1e-1), remainder(1e-2), remainder(1e-3));
        let bound = 2.0 * r1.max(r2) + 1e-5;
        if r3 > bound {
            return Err(format!(
                "remainder/ε³ grows: {r1:.3e}, {r2:.3e}, {r3:.3e} at r = {r:?}"
            ));
        }
        worst_growth = worst_growth.max(r3 / r1.max(r2).max(1e-12));
    }
    Ok(format!(
        "{cases} cases, worst ratio at ε=1e-3 vs coarser {worst_growth:.2}"
    ))
}

pub fn check_chernoff_sandwich(pairs: usize, seed: u64) -> Check {
    let mut rng = rng(seed);
    let mut done = 0;
    while done < pairs {
        let r = random_bloch(&mut rng, 0.99);
        let s = r + random_bloch(&mut rng, 0.6);
        if s.norm() > 0.99 {
            continue;
        }
        let (rho, sigma) = (bloch_to_density(r).unwrap(), bloch_to_density(s).unwrap());
        let f = fidelity(&rho, &sigma);
        if 1.0 - f > 0.1 {
            continue;
        }
        let d = chernoff_exponent(&rho, &sigma);
        if !((1.0 - f) / 2.0 <= d + 1e-9 && d <= -f.ln() + 1e-9) {
            return Err(format!(
                "(1-F)/2 = {}, D = {d}, -ln F = {} for {r:?} / {s:?}",
                (1.0 - f) / 2.0,
                -f.ln()
            ));
        }
        done += 1;
    }
    Ok(format!("{pairs} full-rank pairs with 1-F <= 0.1"))
}

/// `<ψ|σ|ψ>` for each Pauli matrix.
fn pauli_expectations(psi: [Complex64; 2]) -> BlochVector {
    let e = |m: Matrix2| m.sandwich(psi, psi).re;
    BlochVector::new(
        e(Matrix2::pauli_x()),
        e(Matrix2::pauli_y()),
        e(Matrix2::pauli_z()),
    )
}

pub fn check_mub_invariants(cases: usize, seed: u64) -> Check {
    let mut rng = rng(seed);
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let i = Complex64::new(0.0, 1.0);
    for case in 0..cases {
        let rho = match case % 4 {
            0 => bloch_to_density(random_direction(&mut rng)).unwrap(),
            1 if case % 8 == 1 => DensityMatrix::maximally_mixed(),
            _ => random_state(&mut rng, 1.0),
        };
        let eig = eigendecompose(&rho);
        let triplet = mub_triplet(&eig);
        let [p1, p2] = eig.vectors;
        let expected = [
            pauli_expectations(p1),
            pauli_expectations([(p1[0] + p2[0]) * h, (p1[1] + p2[1]) * h]),
            pauli_expectations([(p1[0] + i * p2[0]) * h, (p1[1] + i * p2[1]) * h]),
        ];
        for (k, axis) in triplet.axes.iter().enumerate() {
            if (axis.norm() - 1.0).abs() > 1e-10 {
                return Err(format!("axis {k} has norm {}", axis.norm()));
            }
            if axis.max_abs_diff(expected[k]) > 1e-10 {
                return Err(format!("axis {k} = {axis:?}, expected {:?}", expected[k]));
            }
            for other in &triplet.axes[k + 1..] {
                if axis.dot(*other).abs() > 1e-10 {
                    return Err(format!("axes not orthogonal for {:?}", rho.bloch()));
                }
            }
        }
        let r = rho.bloch();
        if r.norm() > 1e-6 && triplet.axes[0].max_abs_diff(r.normalized().unwrap()) > 1e-9 {
            return Err(format!(
                "first axis {:?} is not along {r:?}",
                triplet.axes[0]
            ));
        }
        if axis_of_ket(p1).max_abs_diff(triplet.axes[0]) > 1e-12 {
            return Err("first axis differs from the leading eigenvector".into());
        }
    }
    Ok(format!("{cases} eigenbases"))
}

/// A few settings on random axes with small shot counts.
pub fn random_small_dataset(rng: &mut impl Rng) -> Dataset {
    let settings = rng.random_range(3..=6);
    let mut data = Dataset::default();
    for _ in 0..settings {
        let axis = MeasurementAxis::from_direction(random_direction(rng)).unwrap();
        let shots = rng.random_range(1..=40u64);
        let plus = rng.random_range(0..=shots);
        data.push(CountRecord::new(axis, shots, plus).unwrap());
    }
    data
}

/// Smallest objective over the cubic grid of the given spacing clipped to
/// the unit ball.
///
/// Along each z column the objective is a convex quadratic, so its grid
/// minimum is at one of the two grid points around the clamped vertex.
pub fn grid_minimum(data: &Dataset, spacing: f64) -> f64 {
    let terms: Vec<(BlochVector, f64, f64)> = data
        .merged()
        .iter()
        .map(|s| {
            let f = hedged_frequency(s.plus_counts, s.shots);
            (
                s.axis.vector(),
                s.shots as f64 / (f * (1.0 - f)),
                s.frequency(),
            )
        })
        .collect();
    let steps = (1.0 / spacing).round() as i64;
    let mut best = f64::INFINITY;
    for i in -steps..=steps {
        let x = i as f64 * spacing;
        for j in -steps..=steps {
            let y = j as f64 * spacing;
            let rest = 1.0 - x * x - y * y;
            if rest < 0.0 {
                continue;
            }
            let kmax = ((rest.sqrt() / spacing) + 1e-12).floor() as i64;
            // Σ w (α + β z)² = A z² + B z + C
            let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
            for (axis, w, f) in &terms {
                let alpha = 0.5 * (1.0 + axis.x * x + axis.y * y) - f;
                let beta = 0.5 * axis.z;
                a += w * beta * beta;
                b += 2.0 * w * alpha * beta;
                c += w * alpha * alpha;
            }
            let eval = |k: i64| {
                let z = k as f64 * spacing;
                a * z * z + b * z + c
            };
            let vertex = if a > 0.0 {
                -b / (2.0 * a) / spacing
            } else {
                0.0
            };
            let lo = (vertex.floor() as i64).clamp(-kmax, kmax);
            let hi = (vertex.ceil() as i64).clamp(-kmax, kmax);
            let col = if a > 0.0 {
                eval(lo).min(eval(hi))
            } else {
                eval(-kmax).min(eval(kmax))
            };
            best = best.min(col);
        }
    }
    best
}

/// Objective with merged settings, written out independently of the
/// estimator module.
pub fn oracle_objective(data: &Dataset, r: BlochVector) -> f64 {
    data.merged()
        .iter()
        .map(|s| {
            let f = hedged_frequency(s.plus_counts, s.shots);
            let p = 0.5 * (1.0 + s.axis.vector().dot(r));
            s.shots as f64 / (f * (1.0 - f)) * (p - s.frequency()).powi(2)
        })
        .sum()
}

pub fn check_grid_dominance(datasets: usize, seed: u64) -> Check {
    let mut rng = rng(seed);
    let mut done = 0;
    let mut closest = f64::INFINITY;
    while done < datasets {
        let data = random_small_dataset(&mut rng);
        // Nearly coplanar axis draws are rejected by the estimator; skip them.
        let Ok(est) = mle(&data) else { continue };
        let at_mle = oracle_objective(&data, est.rho.bloch());
        if (at_mle - negative_loglikelihood(&est.rho, &data)).abs() > 1e-9 * (1.0 + at_mle) {
            return Err("objective disagrees with the independent evaluation".into());
        }
        let grid = grid_minimum(&data, 0.002);
        if at_mle > grid + 1e-6 {
            return Err(format!(
                "mle objective {at_mle} exceeds grid minimum {grid}"
            ));
        }
        closest = closest.min(grid - at_mle);
        done += 1;
    }
    Ok(format!(
        "{datasets} datasets, smallest grid margin {closest:.2e}"
    ))
}

pub fn all_protocols() -> [ProtocolSpec; 5] {
    [
        ProtocolSpec::Static,
        ProtocolSpec::Adaptive { alpha: 0.5 },
        ProtocolSpec::AdaptivePow {
            exponent: 2.0 / 3.0,
        },
        ProtocolSpec::ReducedAdaptive { alpha: 0.5 },
        ProtocolSpec::KnownBasis,
    ]
}

pub fn check_exact_budget() -> Check {
    let rho = fixtures::target_state();
    let mut runs = 0;
    for protocol in all_protocols() {
        for n in 6..=30u64 {
            let res = run_protocol(
                &protocol,
                &rho,
                n,
                &ErrorModelSpec::None,
                &RngContext::new(n),
            )
            .map_err(|e| format!("{protocol} at N = {n}: {e}"))?;
            let summed: u64 = res.dataset.records().iter().map(|r| r.shots).sum();
            if res.total_shots != n || summed != n {
                return Err(format!("{protocol} at N = {n} used {summed} shots"));
            }
            runs += 1;
        }
    }
    Ok(format!("{runs} protocol/N combinations"))
}

pub fn check_thread_reproducibility() -> Check {
    let mut spec = CampaignSpec::new(
        ProtocolSpec::Adaptive { alpha: 0.5 },
        fixtures::target_state(),
        vec![30, 300, 3000],
    );
    spec.repetitions = 2;
    spec.error_model = ErrorModelSpec::Model1 { e: 0.01 };
    spec.seed = 99;
    let run_with = |threads: usize| -> Vec<u8> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        let result = pool.install(|| run_campaign(&spec)).unwrap();
        serde_json::to_vec(&result).unwrap()
    };
    let single = run_with(1);
    let many = run_with(8);
    if single != many {
        return Err("campaign output depends on the thread count".into());
    }
    if single != run_with(1) {
        return Err("repeated single-thread runs differ".into());
    }
    Ok(format!(
        "{} identical bytes on 1 and 8 threads",
        single.len()
    ))
}
