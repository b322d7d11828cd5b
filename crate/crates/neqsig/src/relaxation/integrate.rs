//! Per-trajectory adaptive integration of the guidance equation.
//!
//! Cash-Karp embedded Runge-Kutta 4(5) with error-per-unit-step control,
//! so the accumulated position error scales with the requested tolerance.
//! Steps that evaluate too close to a wave-function node (where the
//! velocity is singular) are rejected and retried with a smaller step;
//! trajectories provably avoid nodes except on a measure-zero set, so
//! step shrinking is how the integrator sidesteps them.

use super::{velocity_from_coeffs, BoxState, RelaxError, TrajectoryEnsemble};
use crate::exec::indexed_map;

/// Where and when a trajectory ran out of step size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryFailure {
    pub index: usize,
    pub time: f64,
    pub last_position: f64,
}

const MIN_STEP: f64 = 1e-12;
const SAFETY: f64 = 0.9;

// Cash-Karp tableau
const C: [f64; 6] = [0.0, 0.2, 0.3, 0.6, 1.0, 0.875];
const A: [[f64; 5]; 6] = [
    [0.0, 0.0, 0.0, 0.0, 0.0],
    [0.2, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0],
    [0.3, -0.9, 1.2, 0.0, 0.0],
    [-11.0 / 54.0, 2.5, -70.0 / 27.0, 35.0 / 27.0, 0.0],
    [
        1631.0 / 55296.0,
        175.0 / 512.0,
        575.0 / 13824.0,
        44275.0 / 110592.0,
        253.0 / 4096.0,
    ],
];
const B5: [f64; 6] = [
    37.0 / 378.0,
    0.0,
    250.0 / 621.0,
    125.0 / 594.0,
    0.0,
    512.0 / 1771.0,
];
const B4: [f64; 6] = [
    2825.0 / 27648.0,
    0.0,
    18575.0 / 48384.0,
    13525.0 / 55296.0,
    277.0 / 14336.0,
    0.25,
];

fn velocity_at(state: &BoxState, x: f64, t: f64) -> Result<f64, RelaxError> {
    velocity_from_coeffs(&state.evolved_coeffs(t), x, t)
}

/// Integrates one trajectory from `(x0, t0)`, recording the position at
/// each checkpoint time (checkpoints strictly increasing, all > t0).
pub(crate) fn integrate_checkpoints(
    state: &BoxState,
    index: usize,
    x0: f64,
    t0: f64,
    checkpoints: &[f64],
    tol: f64,
) -> Result<Vec<f64>, TrajectoryFailure> {
    let span = checkpoints.last().copied().unwrap_or(t0) - t0;
    let mut x = x0;
    let mut t = t0;
    let mut h = (span / 100.0).max(MIN_STEP);
    let mut out = Vec::with_capacity(checkpoints.len());
    let fail = |t: f64, x: f64| TrajectoryFailure { index, time: t, last_position: x };

    for &target in checkpoints {
        while t < target {
            h = h.min(target - t);
            // one attempted Cash-Karp step
            let mut k = [0.0f64; 6];
            let mut rejected = false;
            for stage in 0..6 {
                let mut xs = x;
                for (j, kj) in k.iter().enumerate().take(stage) {
                    xs += h * A[stage][j] * kj;
                }
                if !(0.0 < xs && xs < 1.0) {
                    rejected = true;
                    break;
                }
                match velocity_at(state, xs, t + C[stage] * h) {
                    Ok(v) => k[stage] = v,
                    Err(_) => {
                        rejected = true;
                        break;
                    }
                }
            }
            if rejected {
                h *= 0.25;
                if h < MIN_STEP {
                    return Err(fail(t, x));
                }
                continue;
            }
            let mut x5 = x;
            let mut x4 = x;
            for s in 0..6 {
                x5 += h * B5[s] * k[s];
                x4 += h * B4[s] * k[s];
            }
            let err = (x5 - x4).abs();
            // floor at a few ulps: |x5 - x4| cannot resolve below roundoff,
            // and without the floor tiny steps can never be accepted
            let tol_step = (tol * (h / span)).max(4.0 * f64::EPSILON * x.abs());
            if err <= tol_step || h <= MIN_STEP * 4.0 {
                t += h;
                x = x5;
                if !(0.0 < x && x < 1.0) {
                    return Err(fail(t, x4.clamp(1e-12, 1.0 - 1e-12)));
                }
                let grow = if err > 0.0 {
                    SAFETY * (tol_step / err).powf(0.25)
                } else {
                    5.0
                };
                h *= grow.clamp(0.2, 5.0);
            } else {
                h *= (SAFETY * (tol_step / err).powf(0.25)).clamp(0.1, 0.9);
                if h < MIN_STEP {
                    return Err(fail(t, x));
                }
            }
        }
        out.push(x);
    }
    Ok(out)
}

/// Advances every trajectory of the ensemble to `t_end` along the
/// guidance flow. Trajectories are independent and integrate in
/// parallel; results do not depend on the worker count.
pub fn evolve(
    ensemble: &TrajectoryEnsemble,
    state: &BoxState,
    t_end: f64,
    tol: f64,
) -> Result<TrajectoryEnsemble, RelaxError> {
    if ensemble.positions.is_empty() {
        return Err(RelaxError::EmptyEnsemble);
    }
    if t_end <= ensemble.time {
        return Err(RelaxError::NonAdvancingTime { t0: ensemble.time, t_end });
    }
    let t0 = ensemble.time;
    let checkpoints = [t_end];
    let results = indexed_map(&ensemble.positions, |i, &x0| {
        integrate_checkpoints(state, i, x0, t0, &checkpoints, tol).map(|v| v[0])
    });
    let mut positions = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(x) => positions.push(x),
            Err(f) => failures.push(f),
        }
    }
    if let Some(first) = failures.first() {
        return Err(RelaxError::StepUnderflow(failures.len(), *first));
    }
    Ok(TrajectoryEnsemble { positions, time: t_end })
}
