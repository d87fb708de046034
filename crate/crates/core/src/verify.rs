//! Self-check suite behind `vlp verify`.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::sample_measurements_with;
use crate::error::Result;
use crate::estimators::{EstimatorConfig, Method};
use crate::geometry::{forward_model, Family, Position2D, RxLayout, TargetGeometry, TrackSide};
use crate::simulation::{point_trials, MonteCarloSetup};
use crate::statistics::{crlb, fisher_information, measurement_jacobian, predict, score_residual, MotionNoise, StateVector};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub seed: u64,
    pub poses: usize,
    pub efficiency_trials: usize,
    pub workers: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seed: 1,
            poses: 1000,
            efficiency_trials: 20_000,
            workers: 0,
        }
    }
}

/// A road pose ahead of the receivers plus a short approaching step.
pub fn random_pose<R: Rng + ?Sized>(rng: &mut R) -> (Position2D, Position2D) {
    let p = Position2D::new(rng.random_range(-5.0..5.0), rng.random_range(2.0..30.0));
    let q = p.offset(rng.random_range(-1.0..1.0), rng.random_range(-1.0..-0.05));
    (p, q)
}

fn scene(family: Family, layout: &RxLayout, p: Position2D, q: Position2D) -> TargetGeometry {
    match family {
        Family::RunningRange => TargetGeometry::at(p).moving_to(q),
        Family::DifferentialBearing | Family::DifferentialRange => {
            TargetGeometry::at(p).with_tx2(layout.parallel_partner(p))
        }
        _ => TargetGeometry::at(p),
    }
}

fn truth_state(family: Family, p: Position2D, q: Position2D) -> StateVector {
    match family {
        Family::RunningRange => StateVector::running(p, q),
        _ => StateVector::classical(p),
    }
}

fn fixed_sigmas(family: Family, bearing: f64, range: f64, motion: &MotionNoise) -> Vec<f64> {
    match family {
        Family::DirectBearing | Family::DifferentialBearing => vec![bearing; 2],
        Family::DirectRange | Family::DifferentialRange => vec![range; 2],
        Family::RunningRange => vec![range, range, motion.heading_sigma(), motion.distance_sigma],
    }
}

/// Largest coordinate error of noise-free fixes over random poses.
pub fn round_trip_error(layout: &RxLayout, poses: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = EstimatorConfig::default();
    let mut worst = 0.0f64;
    for _ in 0..poses {
        let (p, q) = random_pose(&mut rng);
        for method in Method::ALL {
            let family = method.family();
            let meas = forward_model(layout, family, &scene(family, layout, p, q))?;
            let fix = method.estimate(&meas, layout, TrackSide::of(p, q), &cfg)?;
            for (a, b) in fix.coordinates().iter().zip(truth_state(family, p, q).as_slice()) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    Ok(worst)
}

/// Road pose with an approach step of 0.5-1.5 m. Much shorter steps at long
/// range put the f64 floor of the running-fix score above 1e-8.
pub fn random_step_pose<R: Rng + ?Sized>(rng: &mut R) -> (Position2D, Position2D) {
    let p = Position2D::new(rng.random_range(-5.0..5.0), rng.random_range(2.0..30.0));
    let heading = rng.random_range(0.6 * std::f64::consts::PI..1.4 * std::f64::consts::PI);
    let dv = rng.random_range(0.5..1.5);
    (p, p.offset(dv * heading.sin(), dv * heading.cos()))
}

/// Largest |score| at the closed-form fix for noisy sets; also returns how
/// many draws produced no fix.
pub fn mle_score(layout: &RxLayout, sets: usize, seed: u64) -> Result<(f64, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = EstimatorConfig::default();
    let motion = MotionNoise::default();
    let mut worst = 0.0f64;
    let mut skipped = 0;
    for method in Method::ALL {
        let family = method.family();
        let sigmas = fixed_sigmas(family, 0.5f64.to_radians(), 0.05, &motion);
        for _ in 0..sets {
            let (p, q) = random_step_pose(&mut rng);
            let truth = forward_model(layout, family, &scene(family, layout, p, q))?;
            let noisy = sample_measurements_with(&truth, &sigmas, &mut rng)?;
            let Ok(fix) = method.estimate(&noisy, layout, TrackSide::of(p, q), &cfg) else {
                skipped += 1;
                continue;
            };
            let state = StateVector::from_slice(&fix.coordinates());
            for s in score_residual(&noisy, layout, &state)? {
                worst = worst.max(s.abs());
            }
        }
    }
    Ok((worst, skipped))
}

/// Central-difference Jacobian of the noise-free model.
pub fn numeric_jacobian(family: Family, layout: &RxLayout, state: &StateVector, step: f64) -> Result<Vec<Vec<f64>>> {
    let n = state.len();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let mut plus = state.as_slice().to_vec();
        let mut minus = plus.clone();
        plus[j] += step;
        minus[j] -= step;
        let hp = predict(family, layout, &StateVector::from_slice(&plus))?;
        let hm = predict(family, layout, &StateVector::from_slice(&minus))?;
        cols.push(
            hp.iter()
                .zip(&hm)
                .enumerate()
                .map(|(i, (a, b))| {
                    let d = if family.is_angle(i) { crate::geometry::wrap_angle(a - b) } else { a - b };
                    d / (2.0 * step)
                })
                .collect::<Vec<f64>>(),
        );
    }
    let rows = cols[0].len();
    Ok((0..rows).map(|i| (0..n).map(|j| cols[j][i]).collect()).collect())
}

/// Worst relative mismatch between analytic and numeric Jacobians, each
/// entry scaled by the largest entry of its row.
pub fn jacobian_mismatch(layout: &RxLayout, states: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for family in Family::ALL {
        for _ in 0..states {
            let (p, q) = random_pose(&mut rng);
            let state = truth_state(family, p, q);
            let analytic = measurement_jacobian(family, layout, &state)?;
            let numeric = numeric_jacobian(family, layout, &state, 1e-5)?;
            for (i, row) in numeric.iter().enumerate() {
                let scale = analytic.row(i).iter().fold(0.0f64, |m, v| m.max(v.abs()));
                for (j, v) in row.iter().enumerate() {
                    worst = worst.max((analytic[(i, j)] - v).abs() / scale);
                }
            }
        }
    }
    Ok(worst)
}

/// Monte Carlo variance over CRLB per coordinate for the direct families at
/// a moderate-SNR point.
pub fn efficiency(trials: usize, seed: u64, workers: usize) -> Result<Vec<(Method, f64, f64)>> {
    let p = Position2D::new(1.5, 10.0);
    let setup = MonteCarloSetup {
        iterations: trials,
        seed,
        workers,
        ..Default::default()
    };
    let mut out = Vec::new();
    for method in [Method::DirectBearing, Method::DirectRange] {
        let family = method.family();
        let sigmas = fixed_sigmas(family, 0.5f64.to_radians(), 0.05, &setup.motion);
        let bound = crlb(&fisher_information(family, &setup.layout, &StateVector::classical(p), &sigmas)?);
        let trials = point_trials(&setup, method, &TargetGeometry::at(p), TrackSide::Right, &sigmas)?;
        out.push((method, trials.var[0] / bound.bounds[0], trials.var[1] / bound.bounds[1]));
    }
    Ok(out)
}

pub fn run_all(opts: &VerifyOptions) -> Vec<CheckOutcome> {
    let layout = RxLayout::default();
    let mut out = Vec::new();
    let mut push = |name, r: Result<(bool, String)>| {
        let (passed, detail) = r.unwrap_or_else(|e| (false, format!("error: {e}")));
        out.push(CheckOutcome { name, passed, detail });
    };
    push(
        "round-trip",
        round_trip_error(&layout, opts.poses, opts.seed).map(|e| (e < 1e-9, format!("max error {e:.3e} m"))),
    );
    push(
        "mle-score",
        mle_score(&layout, opts.poses, opts.seed ^ 0x5eed)
            .map(|(s, k)| (s < 1e-8, format!("max |score| {s:.3e}, {k} draws without a fix"))),
    );
    push(
        "jacobian",
        jacobian_mismatch(&layout, opts.poses.min(100), opts.seed ^ 0x1ac)
            .map(|e| (e < 1e-6, format!("max relative mismatch {e:.3e}"))),
    );
    push(
        "efficiency",
        efficiency(opts.efficiency_trials, opts.seed, opts.workers).map(|rows| {
            let ok = rows.iter().all(|(_, a, b)| (0.9..=1.1).contains(a) && (0.9..=1.1).contains(b));
            let detail = rows
                .iter()
                .map(|(m, a, b)| format!("{m} var/crlb x {a:.3} y {b:.3}"))
                .collect::<Vec<_>>()
                .join("; ");
            (ok, detail)
        }),
    );
    out
}
