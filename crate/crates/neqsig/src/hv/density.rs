//! Ensemble measures over the continuous hidden variable `u`.
//!
//! Every supported shape lives on `[-1, 1]` and admits a closed-form CDF,
//! so outcome probabilities are exact integrals, never Monte Carlo.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DensityError {
    #[error("sign weights {plus} + {minus} do not sum to 1")]
    WeightsNotNormalized { plus: f64, minus: f64 },
    #[error("sign weight {0} outside [0, 1]")]
    WeightOutOfRange(f64),
    #[error("density value {0} is negative")]
    NegativeDensity(f64),
    #[error("support point {0} outside [-1, 1]")]
    SupportOutOfRange(f64),
    #[error("density integrates to {0}, not 1")]
    NotNormalized(f64),
    #[error("breakpoints must be strictly increasing")]
    UnsortedBreakpoints,
    #[error("histogram needs edges.len() == masses.len() + 1, got {edges} edges and {masses} masses")]
    HistogramShape { edges: usize, masses: usize },
    #[error("piecewise-linear density needs at least 2 knots")]
    TooFewKnots,
}

/// Distribution of the Bell-type variable `u` on `[-1, 1]` for one sign
/// branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case", deny_unknown_fields)]
pub enum UDensity {
    /// The equilibrium shape: uniform on `[-1, 1]`.
    Uniform,
    /// All mass at a single point (zero-dispersion ensemble).
    Delta { u0: f64 },
    /// Piecewise-constant density over `edges`, with bin probability
    /// `masses[i]` between `edges[i]` and `edges[i+1]`.
    Histogram { edges: Vec<f64>, masses: Vec<f64> },
    /// Density linear between `(u, value)` knots, zero outside the knot
    /// span.
    PiecewiseLinear { knots: Vec<(f64, f64)> },
}

/// Tolerance for a density integrating to one.
pub const DENSITY_NORM_TOL: f64 = 1e-10;

impl UDensity {
    pub fn validate(&self) -> Result<(), DensityError> {
        match self {
            UDensity::Uniform => Ok(()),
            UDensity::Delta { u0 } => {
                if !(-1.0..=1.0).contains(u0) {
                    return Err(DensityError::SupportOutOfRange(*u0));
                }
                Ok(())
            }
            UDensity::Histogram { edges, masses } => {
                if edges.len() != masses.len() + 1 {
                    return Err(DensityError::HistogramShape {
                        edges: edges.len(),
                        masses: masses.len(),
                    });
                }
                for w in edges.windows(2) {
                    if w[1] <= w[0] {
                        return Err(DensityError::UnsortedBreakpoints);
                    }
                }
                for &e in edges {
                    if !(-1.0..=1.0).contains(&e) {
                        return Err(DensityError::SupportOutOfRange(e));
                    }
                }
                let mut total = 0.0;
                for &m in masses {
                    if m < 0.0 {
                        return Err(DensityError::NegativeDensity(m));
                    }
                    total += m;
                }
                if (total - 1.0).abs() > DENSITY_NORM_TOL {
                    return Err(DensityError::NotNormalized(total));
                }
                Ok(())
            }
            UDensity::PiecewiseLinear { knots } => {
                if knots.len() < 2 {
                    return Err(DensityError::TooFewKnots);
                }
                for w in knots.windows(2) {
                    if w[1].0 <= w[0].0 {
                        return Err(DensityError::UnsortedBreakpoints);
                    }
                }
                for &(u, f) in knots {
                    if !(-1.0..=1.0).contains(&u) {
                        return Err(DensityError::SupportOutOfRange(u));
                    }
                    if f < 0.0 {
                        return Err(DensityError::NegativeDensity(f));
                    }
                }
                let total: f64 = knots
                    .windows(2)
                    .map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0))
                    .sum();
                if (total - 1.0).abs() > DENSITY_NORM_TOL {
                    return Err(DensityError::NotNormalized(total));
                }
                Ok(())
            }
        }
    }

    /// Right-continuous cumulative distribution `P(u <= x)` in closed form.
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            UDensity::Uniform => ((x + 1.0) / 2.0).clamp(0.0, 1.0),
            UDensity::Delta { u0 } => {
                if x >= *u0 {
                    1.0
                } else {
                    0.0
                }
            }
            UDensity::Histogram { edges, masses } => {
                if x < edges[0] {
                    return 0.0;
                }
                let mut acc = 0.0;
                for (i, &m) in masses.iter().enumerate() {
                    let (lo, hi) = (edges[i], edges[i + 1]);
                    if x >= hi {
                        acc += m;
                    } else {
                        acc += m * (x - lo) / (hi - lo);
                        return acc.clamp(0.0, 1.0);
                    }
                }
                acc.clamp(0.0, 1.0)
            }
            UDensity::PiecewiseLinear { knots } => {
                if x < knots[0].0 {
                    return 0.0;
                }
                let mut acc = 0.0;
                for w in knots.windows(2) {
                    let (u0, f0) = w[0];
                    let (u1, f1) = w[1];
                    if x >= u1 {
                        acc += 0.5 * (f0 + f1) * (u1 - u0);
                    } else {
                        let t = x - u0;
                        let slope = (f1 - f0) / (u1 - u0);
                        acc += f0 * t + 0.5 * slope * t * t;
                        return acc.clamp(0.0, 1.0);
                    }
                }
                acc.clamp(0.0, 1.0)
            }
        }
    }

    /// One inverse-CDF draw. Consumes at most one uniform variate.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            UDensity::Uniform => 2.0 * rng.random::<f64>() - 1.0,
            UDensity::Delta { u0 } => *u0,
            UDensity::Histogram { edges, masses } => {
                let r: f64 = rng.random();
                let mut acc = 0.0;
                for (i, &m) in masses.iter().enumerate() {
                    if r < acc + m || i == masses.len() - 1 {
                        let frac = if m > 0.0 { (r - acc) / m } else { 0.0 };
                        let (lo, hi) = (edges[i], edges[i + 1]);
                        return (lo + frac.clamp(0.0, 1.0) * (hi - lo)).clamp(lo, hi);
                    }
                    acc += m;
                }
                unreachable!("masses sum to 1");
            }
            UDensity::PiecewiseLinear { knots } => {
                let r: f64 = rng.random();
                let mut acc = 0.0;
                let last = knots.len() - 2;
                for (i, w) in knots.windows(2).enumerate() {
                    let (u0, f0) = w[0];
                    let (u1, f1) = w[1];
                    let seg = 0.5 * (f0 + f1) * (u1 - u0);
                    if r < acc + seg || i == last {
                        let target = (r - acc).clamp(0.0, seg);
                        return invert_linear_segment(u0, f0, u1, f1, target);
                    }
                    acc += seg;
                }
                unreachable!("knot masses sum to 1");
            }
        }
    }
}

/// Solves `f0*t + slope*t^2/2 = target` for the offset into a linear
/// density segment.
fn invert_linear_segment(u0: f64, f0: f64, u1: f64, f1: f64, target: f64) -> f64 {
    let dx = u1 - u0;
    let slope = (f1 - f0) / dx;
    let t = if slope.abs() * dx < 1e-12 * (f0 + f1).max(1e-300) {
        if f0 > 0.0 {
            target / f0
        } else {
            0.0
        }
    } else {
        // numerically stable quadratic root on the branch t in [0, dx]
        let disc = (f0 * f0 + 2.0 * slope * target).max(0.0);
        if slope > 0.0 {
            (disc.sqrt() - f0) / slope
        } else {
            // avoid cancellation when f0 and sqrt(disc) are close
            2.0 * target / (f0 + disc.sqrt())
        }
    };
    (u0 + t).clamp(u0, u1)
}
