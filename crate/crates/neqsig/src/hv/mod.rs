//! Deterministic hidden-variables model for a two-state system.
//!
//! A hidden variable is a pair `(s, u)`: a pure-state selector `s = ±1`
//! and a Bell-type continuous variable `u` in `[-1, 1]`. The outcome map
//!
//! ```text
//!     sigma(m, lambda) = sign( s * (m . n) - u )        (tie -> +1)
//! ```
//!
//! with `u` uniform in equilibrium reproduces the sinusoidal quantum law
//! exactly for every polarisation degree, realized as a two-point mixture
//! over the pure states `±n`. The map never sees the ensemble measure:
//! nonequilibrium changes only the distribution of `lambda`, not the
//! dynamics of a single system.

pub mod density;

use crate::bloch::{born_prob, EnsembleState, OrthonormalTriad, UnitAxis};
use crate::exec::{batch_rng, batched_fill, Purpose};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use density::{DensityError, UDensity, DENSITY_NORM_TOL};

/// A two-valued measurement outcome or pure-state selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Sign {
    #[default]
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn from_value(v: i64) -> Option<Sign> {
        match v {
            1 => Some(Sign::Plus),
            -1 => Some(Sign::Minus),
            _ => None,
        }
    }
}

/// One hidden-variable point.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HiddenVar {
    pub s: Sign,
    pub u: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum HvError {
    #[error("equilibrium polarisation target {0} outside [0, 1]")]
    TargetOutOfRange(f64),
    #[error(transparent)]
    Density(#[from] DensityError),
    #[error("coefficients have squared sum {0}, probe axis is not unit")]
    CoefficientsNotUnit(f64),
    #[error("pointwise check requires c3 = 0, got {0}")]
    NonzeroThirdCoefficient(f64),
    #[error("pointwise check requires c1*c2 != 0")]
    DegenerateCoefficients,
}

/// The underlying pure-state pair `±n` and the equilibrium polarisation
/// magnitude it is mixed to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    n: UnitAxis,
    p_target: f64,
}

impl ModelSpec {
    pub fn new(n: UnitAxis, p_target: f64) -> Result<Self, HvError> {
        if !(0.0..=1.0).contains(&p_target) {
            return Err(HvError::TargetOutOfRange(p_target));
        }
        Ok(ModelSpec { n, p_target })
    }

    pub fn axis(&self) -> &UnitAxis {
        &self.n
    }

    pub fn p_target(&self) -> f64 {
        self.p_target
    }

    /// The quantum state this model equilibrates to: `P = p_target * n`.
    pub fn equilibrium_state(&self) -> EnsembleState {
        let n = self.n.components();
        let p = self.p_target;
        EnsembleState::new([p * n[0], p * n[1], p * n[2]])
            .expect("p_target <= 1 keeps |P| <= 1")
    }
}

/// An ensemble measure over hidden variables: sign weights plus a
/// `u`-density per sign branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaDensity {
    weight_plus: f64,
    weight_minus: f64,
    plus: UDensity,
    minus: UDensity,
}

impl LambdaDensity {
    pub fn new(
        weight_plus: f64,
        weight_minus: f64,
        plus: UDensity,
        minus: UDensity,
    ) -> Result<Self, HvError> {
        if (weight_plus + weight_minus - 1.0).abs() > 1e-12 {
            return Err(DensityError::WeightsNotNormalized {
                plus: weight_plus,
                minus: weight_minus,
            }
            .into());
        }
        for w in [weight_plus, weight_minus] {
            if !(0.0..=1.0 + 1e-12).contains(&w) {
                return Err(DensityError::WeightOutOfRange(w).into());
            }
        }
        plus.validate()?;
        minus.validate()?;
        Ok(LambdaDensity { weight_plus, weight_minus, plus, minus })
    }

    /// All mass at a single hidden-variable point.
    pub fn delta(at: HiddenVar) -> Self {
        let d = UDensity::Delta { u0: at.u };
        match at.s {
            Sign::Plus => LambdaDensity {
                weight_plus: 1.0,
                weight_minus: 0.0,
                plus: d.clone(),
                minus: d,
            },
            Sign::Minus => LambdaDensity {
                weight_plus: 0.0,
                weight_minus: 1.0,
                plus: d.clone(),
                minus: d,
            },
        }
    }

    pub fn weight_plus(&self) -> f64 {
        self.weight_plus
    }

    pub fn weight_minus(&self) -> f64 {
        self.weight_minus
    }

    pub fn branch(&self, s: Sign) -> &UDensity {
        match s {
            Sign::Plus => &self.plus,
            Sign::Minus => &self.minus,
        }
    }

    /// One draw of `lambda`.
    pub fn sample_one<R: Rng>(&self, rng: &mut R) -> HiddenVar {
        let s = if rng.random::<f64>() < self.weight_plus {
            Sign::Plus
        } else {
            Sign::Minus
        };
        HiddenVar { s, u: self.branch(s).sample(rng) }
    }
}

/// The deterministic outcome map. Takes no ensemble measure: the same
/// `lambda` gives the same outcome under any distribution.
pub fn outcome_map(m: &UnitAxis, lambda: &HiddenVar, model: &ModelSpec) -> Sign {
    let t = lambda.s.value() * m.dot(&model.n);
    if t - lambda.u >= 0.0 {
        Sign::Plus
    } else {
        Sign::Minus
    }
}

/// The measure reproducing quantum statistics: sign weights `(1 ± P)/2`
/// and `u` uniform on `[-1, 1]` in both branches.
pub fn equilibrium_density(model: &ModelSpec) -> LambdaDensity {
    LambdaDensity {
        weight_plus: 0.5 * (1.0 + model.p_target),
        weight_minus: 0.5 * (1.0 - model.p_target),
        plus: UDensity::Uniform,
        minus: UDensity::Uniform,
    }
}

/// Exact outcome probability `mu[S+(m)]`, the measure of the set mapped
/// to +1. Closed form: the branch CDFs evaluated at `s * (m . n)`.
pub fn exact_prob_plus(m: &UnitAxis, density: &LambdaDensity, model: &ModelSpec) -> f64 {
    let t = m.dot(&model.n);
    density.weight_plus * density.plus.cdf(t) + density.weight_minus * density.minus.cdf(-t)
}

/// Exact ensemble mean of the outcome, `2 * mu[S+] - 1`.
pub fn exact_mean(m: &UnitAxis, density: &LambdaDensity, model: &ModelSpec) -> f64 {
    2.0 * exact_prob_plus(m, density, model) - 1.0
}

/// Draws `count` i.i.d. hidden variables. Deterministic for a given seed
/// and identical across thread counts (fixed batch-to-stream mapping).
pub fn sample_lambda(density: &LambdaDensity, seed: u64, count: u64) -> Vec<HiddenVar> {
    let density = density.clone();
    batched_fill(count, move |batch, _start, out| {
        let mut rng = batch_rng(seed, Purpose::LambdaSampling, batch);
        for slot in out.iter_mut() {
            *slot = density.sample_one(&mut rng);
        }
    })
}

/// The additivity defect `Delta = E(m) - sum_i c_i E(m_i)` for the probe
/// axis `m = c_i m_i`. Zero (to rounding) under the equilibrium measure,
/// generically nonzero otherwise.
pub fn additivity_residual(
    density: &LambdaDensity,
    model: &ModelSpec,
    triad: &OrthonormalTriad,
    c: &[f64; 3],
) -> Result<f64, HvError> {
    let c_sq: f64 = c.iter().map(|x| x * x).sum();
    if (c_sq - 1.0).abs() > 1e-10 {
        return Err(HvError::CoefficientsNotUnit(c_sq));
    }
    let probe = UnitAxis::from_vector(triad.combine(c)).expect("unit coefficient combination");
    let combined = exact_mean(&probe, density, model);
    let parts: f64 = (0..3)
        .map(|i| c[i] * exact_mean(triad.axis(i), density, model))
        .sum();
    Ok(combined - parts)
}

/// Outcome of testing pointwise expectation additivity at a single
/// hidden-variable point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointwiseCheck {
    /// Whether `sigma(m) = c1 sigma(m1) + c2 sigma(m2)` holds at this point.
    pub holds: bool,
    pub residual: f64,
}

/// Evaluates `sigma(m, l0) - c1 sigma(m1, l0) - c2 sigma(m2, l0)` for the
/// in-plane probe `m = c1 m1 + c2 m2`. With `c1 c2 != 0` and
/// `|c1 ± c2| != 1` this fails for every `l0`: three values of ±1 cannot
/// satisfy the linear relation.
pub fn pointwise_additivity_check(
    lambda0: &HiddenVar,
    model: &ModelSpec,
    triad: &OrthonormalTriad,
    c: &[f64; 3],
) -> Result<PointwiseCheck, HvError> {
    if c[2] != 0.0 {
        return Err(HvError::NonzeroThirdCoefficient(c[2]));
    }
    if c[0] * c[1] == 0.0 {
        return Err(HvError::DegenerateCoefficients);
    }
    let c_sq = c[0] * c[0] + c[1] * c[1];
    if (c_sq - 1.0).abs() > 1e-10 {
        return Err(HvError::CoefficientsNotUnit(c_sq));
    }
    let probe = UnitAxis::from_vector(triad.combine(c)).expect("unit coefficient combination");
    let sigma = outcome_map(&probe, lambda0, model).value();
    let s1 = outcome_map(triad.axis(0), lambda0, model).value();
    let s2 = outcome_map(triad.axis(1), lambda0, model).value();
    let residual = sigma - c[0] * s1 - c[1] * s2;
    Ok(PointwiseCheck { holds: residual.abs() < 1e-9, residual })
}

/// Equilibrium outcome probability predicted by quantum theory for this
/// model, for cross-checking against [`exact_prob_plus`].
pub fn born_prob_plus(m: &UnitAxis, model: &ModelSpec) -> f64 {
    born_prob(m, &model.equilibrium_state()).0
}
