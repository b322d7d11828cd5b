//! Pilot-wave dynamics in a 1D box (units hbar = m = L = 1).
//!
//! A superposition of box modes guides an ensemble of configurations via
//! `dx/dt = Im(psi* psi_x) / |psi|^2`. Ensembles distributed as `|psi|^2`
//! stay so (equivariance); other ensembles relax toward `|psi|^2` in the
//! coarse-grained sense measured by the KL-type H-function.

mod flow;
mod integrate;

pub use flow::{
    equivariance_check, equivariance_check_with_flow, run_relaxation, EquivarianceReport,
    FlowMap, RelaxationConfig, RelaxationRun,
};
pub use integrate::{evolve, TrajectoryFailure};

use crate::exec::{batch_rng, batched_fill, Purpose};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Below this probability density the guidance velocity is treated as
/// singular (node proximity).
pub const NODE_THRESHOLD: f64 = 1e-14;

#[derive(Debug, Error, PartialEq)]
pub enum RelaxError {
    #[error("box state needs at least 2 modes, got {0}")]
    TooFewModes(usize),
    #[error("mode amplitudes have squared norm {0}, expected 1")]
    NotNormalized(f64),
    #[error("position {0} outside the open box (0, 1)")]
    OutsideBox(f64),
    #[error("velocity evaluated at a node (|psi|^2 = {density:e} at x = {x}, t = {t})")]
    NodeProximity { x: f64, t: f64, density: f64 },
    #[error("{0} trajectories failed step-size control; first: {1:?}")]
    StepUnderflow(usize, TrajectoryFailure),
    #[error("ensemble is empty")]
    EmptyEnsemble,
    #[error("coarse-graining needs at least 8 cells, got {0}")]
    TooFewCells(usize),
    #[error("target time {t_end} is not after ensemble time {t0}")]
    NonAdvancingTime { t0: f64, t_end: f64 },
    #[error("flow map support degenerated (non-monotone positions)")]
    NonMonotoneFlow,
}

/// Wave function in the unit box: `M` complex mode amplitudes `c_k` with
/// energies `E_k = (k pi)^2 / 2`, `psi(x,t) = sum_k c_k sqrt(2) sin(k pi x)
/// exp(-i E_k t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxState {
    coeffs: Vec<Complex64>,
}

impl BoxState {
    pub fn new(coeffs: Vec<Complex64>) -> Result<Self, RelaxError> {
        if coeffs.len() < 2 {
            return Err(RelaxError::TooFewModes(coeffs.len()));
        }
        let norm_sq: f64 = coeffs.iter().map(|c| c.norm_sqr()).sum();
        if (norm_sq - 1.0).abs() > 1e-12 {
            return Err(RelaxError::NotNormalized(norm_sq));
        }
        Ok(BoxState { coeffs })
    }

    /// Equal-amplitude superposition of the first `modes` modes with
    /// seeded random phases.
    pub fn random_phases(modes: usize, seed: u64) -> Result<Self, RelaxError> {
        if modes < 2 {
            return Err(RelaxError::TooFewModes(modes));
        }
        let mut rng = batch_rng(seed, Purpose::ModePhases, 0);
        let amp = 1.0 / (modes as f64).sqrt();
        let coeffs = (0..modes)
            .map(|_| {
                let phase = rng.random::<f64>() * std::f64::consts::TAU;
                Complex64::from_polar(amp, phase)
            })
            .collect();
        Ok(BoxState { coeffs })
    }

    pub fn mode_count(&self) -> usize {
        self.coeffs.len()
    }

    pub fn energy(k: usize) -> f64 {
        let kpi = k as f64 * std::f64::consts::PI;
        0.5 * kpi * kpi
    }

    /// Time-evolved mode amplitudes `c_k exp(-i E_k t)`; hoisting this
    /// out of the spatial loop is the hot-path optimization.
    pub fn evolved_coeffs(&self, t: f64) -> Vec<Complex64> {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let (s, co) = (Self::energy(i + 1) * t).sin_cos();
                c * Complex64::new(co, -s)
            })
            .collect()
    }

    pub fn psi(&self, x: f64, t: f64) -> Complex64 {
        psi_from_coeffs(&self.evolved_coeffs(t), x).0
    }

    pub fn density(&self, x: f64, t: f64) -> f64 {
        self.psi(x, t).norm_sqr()
    }

    /// Guidance velocity `Im(psi* psi_x) / |psi|^2`.
    pub fn velocity(&self, x: f64, t: f64) -> Result<f64, RelaxError> {
        velocity_from_coeffs(&self.evolved_coeffs(t), x, t)
    }

    /// `|psi(., t)|^2` integrated on a uniform grid of `cells * per_cell`
    /// Simpson intervals; returns the grid CDF (length `points + 1`).
    pub(crate) fn density_cdf_grid(&self, t: f64, intervals: usize) -> Vec<f64> {
        let coeffs = self.evolved_coeffs(t);
        let h = 1.0 / intervals as f64;
        let density = |x: f64| psi_from_coeffs(&coeffs, x).0.norm_sqr();
        let mut cdf = Vec::with_capacity(intervals + 1);
        cdf.push(0.0);
        let mut acc = 0.0;
        for i in 0..intervals {
            let a = i as f64 * h;
            // Simpson on each cell keeps the cumulative grid consistent
            acc += h / 6.0 * (density(a) + 4.0 * density(a + 0.5 * h) + density(a + h));
            cdf.push(acc);
        }
        // remove quadrature drift so the CDF ends exactly at 1
        let total = acc;
        for v in cdf.iter_mut() {
            *v /= total;
        }
        cdf
    }
}

/// `(psi, d psi/dx)` for pre-evolved mode amplitudes, via the Chebyshev
/// recurrence for `sin(k pi x)`.
pub(crate) fn psi_from_coeffs(coeffs: &[Complex64], x: f64) -> (Complex64, Complex64) {
    let pi = std::f64::consts::PI;
    let (s1, c1) = (pi * x).sin_cos();
    let sqrt2 = std::f64::consts::SQRT_2;
    let mut sk = s1;
    let mut ck = c1;
    let mut psi = Complex64::ZERO;
    let mut dpsi = Complex64::ZERO;
    for (i, c) in coeffs.iter().enumerate() {
        let k = (i + 1) as f64;
        psi += c * (sqrt2 * sk);
        dpsi += c * (sqrt2 * k * pi * ck);
        let next_s = sk * c1 + ck * s1;
        let next_c = ck * c1 - sk * s1;
        sk = next_s;
        ck = next_c;
    }
    (psi, dpsi)
}

pub(crate) fn velocity_from_coeffs(
    coeffs: &[Complex64],
    x: f64,
    t: f64,
) -> Result<f64, RelaxError> {
    if !(0.0..=1.0).contains(&x) {
        return Err(RelaxError::OutsideBox(x));
    }
    let (psi, dpsi) = psi_from_coeffs(coeffs, x);
    let density = psi.norm_sqr();
    if density < NODE_THRESHOLD {
        return Err(RelaxError::NodeProximity { x, t, density });
    }
    Ok((psi.conj() * dpsi).im / density)
}

/// An ensemble of guided configurations at a common time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEnsemble {
    pub positions: Vec<f64>,
    pub time: f64,
}

impl TrajectoryEnsemble {
    pub fn new(positions: Vec<f64>, time: f64) -> Result<Self, RelaxError> {
        if positions.is_empty() {
            return Err(RelaxError::EmptyEnsemble);
        }
        for &x in &positions {
            if !(x > 0.0 && x < 1.0) {
                return Err(RelaxError::OutsideBox(x));
            }
        }
        Ok(TrajectoryEnsemble { positions, time })
    }

    /// Uniform draws on the open box: the standard nonequilibrium
    /// initial condition.
    pub fn uniform(count: u64, seed: u64) -> Self {
        let positions = batched_fill(count, move |batch, _start, out| {
            let mut rng = batch_rng(seed, Purpose::InitialEnsemble, batch);
            for slot in out.iter_mut() {
                // open-interval draw
                loop {
                    let x: f64 = rng.random();
                    if x > 0.0 {
                        *slot = x;
                        break;
                    }
                }
            }
        });
        TrajectoryEnsemble { positions, time: 0.0 }
    }

    /// Born samples from `|psi(., time)|^2` by inverse CDF on a fine grid.
    pub fn born_sampled(state: &BoxState, time: f64, count: u64, seed: u64) -> Self {
        let cdf = state.density_cdf_grid(time, 1 << 14);
        let positions = batched_fill(count, move |batch, _start, out| {
            let mut rng = batch_rng(seed, Purpose::InitialEnsemble, batch);
            for slot in out.iter_mut() {
                let u: f64 = rng.random();
                *slot = invert_grid_cdf(&cdf, u);
            }
        });
        TrajectoryEnsemble { positions, time }
    }
}

/// Inverse of a grid CDF over [0, 1] by bisection plus linear
/// interpolation within the cell.
pub(crate) fn invert_grid_cdf(cdf: &[f64], u: f64) -> f64 {
    let n = cdf.len() - 1;
    let i = cdf.partition_point(|&v| v < u).clamp(1, n);
    let (lo, hi) = (cdf[i - 1], cdf[i]);
    let frac = if hi > lo { (u - lo) / (hi - lo) } else { 0.5 };
    let x = (i as f64 - 1.0 + frac) / n as f64;
    x.clamp(f64::MIN_POSITIVE, 1.0 - 1e-12)
}

/// Evaluates a grid CDF at `x` in [0, 1] by linear interpolation.
pub(crate) fn eval_grid_cdf(cdf: &[f64], x: f64) -> f64 {
    let n = (cdf.len() - 1) as f64;
    let pos = (x.clamp(0.0, 1.0)) * n;
    let i = (pos.floor() as usize).min(cdf.len() - 2);
    let frac = pos - i as f64;
    cdf[i] + frac * (cdf[i + 1] - cdf[i])
}

/// Cell-averaged comparison of the ensemble against `|psi|^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoarseGrain {
    pub cells: usize,
    pub rho_avg: Vec<f64>,
    pub psi_sq_avg: Vec<f64>,
    /// Coarse-grained H-function; `+inf` when the ensemble puts mass
    /// where the cell-averaged `|psi|^2` vanishes.
    pub h: f64,
}

/// The coarse-grained H-function: cell averages of the ensemble density
/// and of `|psi|^2`, combined as `sum rho_bar ln(rho_bar / psi_bar) dx`
/// with `0 ln 0 = 0`.
pub fn coarse_h(
    ensemble: &TrajectoryEnsemble,
    state: &BoxState,
    cells: usize,
) -> Result<CoarseGrain, RelaxError> {
    if cells < 8 {
        return Err(RelaxError::TooFewCells(cells));
    }
    if ensemble.positions.is_empty() {
        return Err(RelaxError::EmptyEnsemble);
    }
    let dx = 1.0 / cells as f64;
    let n = ensemble.positions.len() as f64;
    let mut rho_avg = vec![0.0; cells];
    for &x in &ensemble.positions {
        let cell = ((x * cells as f64) as usize).min(cells - 1);
        rho_avg[cell] += 1.0;
    }
    for r in rho_avg.iter_mut() {
        *r /= n * dx;
    }

    // 64 Simpson intervals per cell keeps the quadrature error well
    // below the 1e-10 normalization tolerance
    let per_cell = 64;
    let cdf = state.density_cdf_grid(ensemble.time, cells * per_cell);
    let psi_sq_avg: Vec<f64> = (0..cells)
        .map(|j| (cdf[(j + 1) * per_cell] - cdf[j * per_cell]) / dx)
        .collect();

    let mut h = 0.0;
    for (r, p) in rho_avg.iter().zip(&psi_sq_avg) {
        if *r == 0.0 {
            continue;
        }
        if *p <= 0.0 {
            h = f64::INFINITY;
            break;
        }
        h += r * (r / p).ln() * dx;
    }
    // cell-averaged KL is nonnegative up to rounding
    if h.is_finite() && h < 0.0 {
        h = h.max(0.0);
    }
    Ok(CoarseGrain { cells, rho_avg, psi_sq_avg, h })
}
