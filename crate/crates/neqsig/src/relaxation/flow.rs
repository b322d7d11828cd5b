//! Ensemble transport via the flow map of the guidance equation.
//!
//! In one dimension trajectories never cross, so the time-t flow map
//! `x0 -> x(t)` is monotone and smooth between nodes. Large ensembles
//! are advanced by integrating an adaptively refined set of support
//! trajectories and interpolating the map monotonically (PCHIP), with
//! the support refined until the interpolation error estimate drops
//! below tolerance. This keeps ensembles of 10^5+ samples tractable
//! while every support trajectory still follows the exact adaptive
//! integrator.

use super::integrate::integrate_checkpoints;
use super::{coarse_h, eval_grid_cdf, BoxState, RelaxError, TrajectoryEnsemble};
use crate::analysis::special::ks_test_sorted;
use crate::exec::indexed_map;
use serde::{Deserialize, Serialize};

/// Default interpolation tolerance for flow-map transport.
pub const DEFAULT_FLOW_TOL: f64 = 1e-4;

const MIN_SUPPORT_DX: f64 = 1e-7;
const MAX_SUPPORT: usize = 400_000;
const MAX_PASSES: usize = 30;
const WALL_MARGIN: f64 = 1e-4;

/// Monotone interpolant of the guidance flow at a set of checkpoint
/// times.
#[derive(Debug, Clone)]
pub struct FlowMap {
    checkpoints: Vec<f64>,
    support: Vec<f64>,
    /// `paths[c][s]`: position of support trajectory `s` at checkpoint `c`.
    paths: Vec<Vec<f64>>,
    /// PCHIP slopes per checkpoint.
    slopes: Vec<Vec<f64>>,
}

impl FlowMap {
    /// Integrates support trajectories from `t0` and refines until the
    /// estimated interpolation error is below `tol` everywhere (support
    /// spacing floor and support cap apply).
    pub fn build(
        state: &BoxState,
        t0: f64,
        checkpoints: &[f64],
        tol: f64,
    ) -> Result<FlowMap, RelaxError> {
        assert!(!checkpoints.is_empty());
        assert!(checkpoints.windows(2).all(|w| w[0] < w[1]));
        assert!(checkpoints[0] > t0);
        let integ_tol = tol * 0.1;

        let initial = 257;
        let mut support: Vec<f64> = (0..initial)
            .map(|i| WALL_MARGIN + (1.0 - 2.0 * WALL_MARGIN) * i as f64 / (initial - 1) as f64)
            .collect();
        let mut rows = integrate_support(state, &support, t0, checkpoints, integ_tol)?;

        for _pass in 0..MAX_PASSES {
            if support.len() >= MAX_SUPPORT {
                break;
            }
            let flagged = flag_intervals(&support, &rows, tol);
            if flagged.is_empty() {
                break;
            }
            let midpoints: Vec<f64> = flagged
                .iter()
                .map(|&i| 0.5 * (support[i] + support[i + 1]))
                .collect();
            let mid_rows = integrate_support(state, &midpoints, t0, checkpoints, integ_tol)?;
            // merge, keeping everything sorted by x0
            let mut merged_support = Vec::with_capacity(support.len() + midpoints.len());
            let mut merged_rows = Vec::with_capacity(merged_support.capacity());
            let mut mi = 0;
            for (i, (&x0, row)) in support.iter().zip(rows.iter()).enumerate() {
                merged_support.push(x0);
                merged_rows.push(row.clone());
                if mi < flagged.len() && flagged[mi] == i {
                    merged_support.push(midpoints[mi]);
                    merged_rows.push(mid_rows[mi].clone());
                    mi += 1;
                }
            }
            support = merged_support;
            rows = merged_rows;
        }

        // repair isolated outlier trajectories: a support row outside the
        // band of its neighbors at some checkpoint integrated through a
        // near-node region incorrectly (the true flow is monotone), so
        // re-integrate it tightly and drop it if it stays inconsistent
        let bad = outlier_rows(&rows, tol);
        if !bad.is_empty() {
            let redo: Vec<f64> = bad.iter().map(|&i| support[i]).collect();
            let redone = integrate_support(state, &redo, t0, checkpoints, integ_tol * 0.01)?;
            for (&i, row) in bad.iter().zip(redone) {
                rows[i] = row;
            }
            // clustered outliers shield each other from the neighbor
            // band, so drop iteratively until consistent
            let mut dropped = 0;
            loop {
                let still = outlier_rows(&rows, tol);
                if still.is_empty() {
                    break;
                }
                dropped += still.len();
                if dropped * 20 > support.len() {
                    return Err(RelaxError::NonMonotoneFlow);
                }
                for &i in still.iter().rev() {
                    support.remove(i);
                    rows.remove(i);
                }
            }
        }

        // transpose to per-checkpoint columns and check monotonicity
        let nc = checkpoints.len();
        let mut paths = vec![Vec::with_capacity(support.len()); nc];
        for row in &rows {
            for (c, &x) in row.iter().enumerate() {
                paths[c].push(x);
            }
        }
        for col in paths.iter_mut() {
            enforce_monotone(col, tol)?;
        }
        let slopes = paths
            .iter()
            .map(|col| pchip_slopes(&support, col))
            .collect();
        Ok(FlowMap { checkpoints: checkpoints.to_vec(), support, paths, slopes })
    }

    pub fn checkpoints(&self) -> &[f64] {
        &self.checkpoints
    }

    pub fn support_size(&self) -> usize {
        self.support.len()
    }

    /// Position at checkpoint `c` of the trajectory started at `x0`.
    pub fn advance(&self, c: usize, x0: f64) -> f64 {
        let xs = &self.support;
        let ys = &self.paths[c];
        let ds = &self.slopes[c];
        let x = x0.clamp(xs[0], xs[xs.len() - 1]);
        let i = match xs.binary_search_by(|v| v.total_cmp(&x)) {
            Ok(i) => return ys[i],
            Err(i) => i.clamp(1, xs.len() - 1) - 1,
        };
        let h = xs[i + 1] - xs[i];
        let t = (x - xs[i]) / h;
        let (y0, y1, d0, d1) = (ys[i], ys[i + 1], ds[i], ds[i + 1]);
        // cubic Hermite
        let t2 = t * t;
        let t3 = t2 * t;
        let v = y0 * (2.0 * t3 - 3.0 * t2 + 1.0)
            + y1 * (-2.0 * t3 + 3.0 * t2)
            + h * d0 * (t3 - 2.0 * t2 + t)
            + h * d1 * (t3 - t2);
        v.clamp(y0.min(y1), y0.max(y1))
    }

    /// Maps a whole position vector through checkpoint `c`.
    pub fn map_positions(&self, c: usize, positions: &[f64]) -> Vec<f64> {
        indexed_map(positions, |_, &x| self.advance(c, x))
    }
}

fn integrate_support(
    state: &BoxState,
    x0s: &[f64],
    t0: f64,
    checkpoints: &[f64],
    tol: f64,
) -> Result<Vec<Vec<f64>>, RelaxError> {
    let results = indexed_map(x0s, |i, &x0| {
        integrate_checkpoints(state, i, x0, t0, checkpoints, tol)
    });
    let mut rows = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(row) => rows.push(row),
            Err(f) => failures.push(f),
        }
    }
    if let Some(first) = failures.first() {
        return Err(RelaxError::StepUnderflow(failures.len(), *first));
    }
    Ok(rows)
}

/// Intervals whose estimated linear-interpolation error (from local
/// second divided differences, any checkpoint) exceeds `tol`.
fn flag_intervals(support: &[f64], rows: &[Vec<f64>], tol: f64) -> Vec<usize> {
    let n = support.len();
    let nc = rows[0].len();
    let mut curvature = vec![0.0f64; n];
    for i in 1..n - 1 {
        let h0 = support[i] - support[i - 1];
        let h1 = support[i + 1] - support[i];
        for c in 0..nc {
            let d0 = (rows[i][c] - rows[i - 1][c]) / h0;
            let d1 = (rows[i + 1][c] - rows[i][c]) / h1;
            let f2 = 2.0 * (d1 - d0) / (h0 + h1);
            curvature[i] = curvature[i].max(f2.abs());
        }
    }
    curvature[0] = curvature[1];
    curvature[n - 1] = curvature[n - 2];
    let mut flagged = Vec::new();
    for i in 0..n - 1 {
        let h = support[i + 1] - support[i];
        if h <= MIN_SUPPORT_DX {
            continue;
        }
        let est = 0.125 * curvature[i].max(curvature[i + 1]) * h * h;
        if est > tol {
            flagged.push(i);
        }
    }
    flagged
}

/// Rows lying outside the interval spanned by their neighbors (plus
/// slack) at any checkpoint. Monotonicity of the flow puts every correct
/// row inside that band.
fn outlier_rows(rows: &[Vec<f64>], slack: f64) -> Vec<usize> {
    let n = rows.len();
    let nc = rows[0].len();
    let mut bad = Vec::new();
    for i in 0..n {
        let (lo_row, hi_row) = match i {
            0 => (None, rows.get(1)),
            _ if i == n - 1 => (rows.get(n - 2), None),
            _ => (rows.get(i - 1), rows.get(i + 1)),
        };
        let is_bad = (0..nc).any(|c| {
            let v = rows[i][c];
            let below = lo_row.is_some_and(|r| v < r[c] - slack);
            let above = hi_row.is_some_and(|r| v > r[c] + slack);
            below || above
        });
        if is_bad {
            bad.push(i);
        }
    }
    bad
}

/// Rounding-level inversions are flattened; anything larger means the
/// support integration is inconsistent with a monotone flow.
fn enforce_monotone(col: &mut [f64], tol: f64) -> Result<(), RelaxError> {
    let mut high = col[0];
    for v in col.iter_mut() {
        if *v < high {
            if high - *v > 100.0 * tol {
                return Err(RelaxError::NonMonotoneFlow);
            }
            *v = high;
        } else {
            high = *v;
        }
    }
    Ok(())
}

/// Fritsch-Carlson monotone cubic slopes.
fn pchip_slopes(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut d = vec![0.0; n];
    if n < 2 {
        return d;
    }
    let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = ys
        .windows(2)
        .zip(&h)
        .map(|(w, &hi)| (w[1] - w[0]) / hi)
        .collect();
    d[0] = delta[0];
    d[n - 1] = delta[n - 2];
    for i in 1..n - 1 {
        if delta[i - 1] * delta[i] <= 0.0 {
            d[i] = 0.0;
        } else {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
        }
    }
    // endpoint slopes limited to preserve monotonicity
    if n > 2 {
        d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
        d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    }
    d
}

fn end_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if s * d0 <= 0.0 {
        0.0
    } else if d0 * d1 <= 0.0 && s.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        s
    }
}

/// Result of one equivariance run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquivarianceReport {
    pub ks_statistic: f64,
    pub p_value: f64,
    pub samples: u64,
    pub t_end: f64,
}

/// Samples `n` positions from `|psi_0|^2`, transports them to `t_end`
/// along the guidance flow, and KS-tests them against `|psi(., t_end)|^2`.
/// Equivariance predicts pure sampling noise.
pub fn equivariance_check(
    state: &BoxState,
    n: u64,
    t_end: f64,
    seed: u64,
    tol: f64,
) -> Result<EquivarianceReport, RelaxError> {
    let flow = FlowMap::build(state, 0.0, &[t_end], tol)?;
    equivariance_check_with_flow(state, &flow, n, seed)
}

/// Same check reusing a prebuilt flow map (its last checkpoint is the
/// test time); many seeds can share one flow.
pub fn equivariance_check_with_flow(
    state: &BoxState,
    flow: &FlowMap,
    n: u64,
    seed: u64,
) -> Result<EquivarianceReport, RelaxError> {
    assert!(n >= 1_000, "KS p-values need at least ~10^3 samples");
    let c = flow.checkpoints.len() - 1;
    let t_end = flow.checkpoints[c];
    let initial = TrajectoryEnsemble::born_sampled(state, 0.0, n, seed);
    let mut evolved = flow.map_positions(c, &initial.positions);
    evolved.sort_by(f64::total_cmp);
    let cdf = state.density_cdf_grid(t_end, 1 << 14);
    let (stat, p) = ks_test_sorted(&evolved, |x| eval_grid_cdf(&cdf, x));
    Ok(EquivarianceReport { ks_statistic: stat, p_value: p, samples: n, t_end })
}

/// Parameters of a coarse-grained relaxation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxationConfig {
    pub modes: usize,
    pub trajectories: u64,
    pub cells: usize,
    pub t_end: f64,
    pub checkpoints: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for RelaxationConfig {
    fn default() -> Self {
        // two beat periods of the two lowest modes
        let t_end = 4.0 * std::f64::consts::PI / (BoxState::energy(2) - BoxState::energy(1));
        RelaxationConfig {
            modes: 4,
            trajectories: 100_000,
            cells: 32,
            t_end,
            checkpoints: 16,
            tol: DEFAULT_FLOW_TOL,
            seed: 0,
        }
    }
}

/// H-function checkpoint series of one relaxation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxationRun {
    /// `(t, H_bar)` including the initial point at t = 0.
    pub series: Vec<(f64, f64)>,
    pub final_positions: Vec<f64>,
}

/// Evolves a uniform (nonequilibrium) ensemble under an equal-amplitude
/// random-phase superposition and records the coarse-grained H-function
/// at evenly spaced checkpoints.
pub fn run_relaxation(cfg: &RelaxationConfig) -> Result<RelaxationRun, RelaxError> {
    let state = BoxState::random_phases(cfg.modes, cfg.seed)?;
    let ensemble = TrajectoryEnsemble::uniform(cfg.trajectories, cfg.seed);
    let times: Vec<f64> = (1..=cfg.checkpoints)
        .map(|j| cfg.t_end * j as f64 / cfg.checkpoints as f64)
        .collect();
    let flow = FlowMap::build(&state, 0.0, &times, cfg.tol)?;

    let mut series = Vec::with_capacity(cfg.checkpoints + 1);
    series.push((0.0, coarse_h(&ensemble, &state, cfg.cells)?.h));
    let mut final_positions = Vec::new();
    for (c, &t) in times.iter().enumerate() {
        let positions = flow.map_positions(c, &ensemble.positions);
        let moved = TrajectoryEnsemble { positions, time: t };
        series.push((t, coarse_h(&moved, &state, cfg.cells)?.h));
        if c == times.len() - 1 {
            final_positions = moved.positions;
        }
    }
    Ok(RelaxationRun { series, final_positions })
}
