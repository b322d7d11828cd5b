//! Single-photon polariser protocol.
//!
//! Photons arrive one at a time (a time ensemble); each draws a fresh
//! hidden variable from the supplied measure and meets the polariser at
//! an angle chosen per protocol mode. Random resetting draws the angle
//! uniformly from a finite grid for every photon, so each angle bin
//! accumulates an i.i.d. sample of `p+( Theta )`.

use crate::bloch::polariser_axis;
use crate::bloch::UnitAxis;
use crate::exec::{batch_rng, batched_fill, Purpose};
use crate::hv::{LambdaDensity, ModelSpec, Sign};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One measurement record of the time ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhotonEvent {
    pub index: u64,
    /// Polariser angle in radians (real space).
    pub theta: f64,
    pub outcome: Sign,
}

#[derive(Debug, Error, PartialEq)]
pub enum ProtocolError {
    #[error("photon count must be at least 1")]
    EmptyRun,
    #[error("angle grid must be non-empty")]
    NoAngles,
    #[error("angle {0} is not finite")]
    BadAngle(f64),
}

/// How the polariser angle is chosen per photon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolMode {
    /// Uniform i.i.d. draw from the angle grid for every photon.
    RandomReset,
    /// Deterministic round-robin over the angle grid.
    FixedGrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolSpec {
    pub mode: ProtocolMode,
    pub angles: Vec<f64>,
    pub photon_count: u64,
    pub seed: u64,
}

impl ProtocolSpec {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        if self.photon_count == 0 {
            return Err(ProtocolError::EmptyRun);
        }
        if self.angles.is_empty() {
            return Err(ProtocolError::NoAngles);
        }
        for &a in &self.angles {
            if !a.is_finite() {
                return Err(ProtocolError::BadAngle(a));
            }
        }
        Ok(())
    }
}

/// The default angle grid: `count` angles evenly spaced over `[0, pi)`.
pub fn uniform_angle_grid(count: usize) -> Vec<f64> {
    (0..count)
        .map(|k| k as f64 * std::f64::consts::PI / count as f64)
        .collect()
}

/// Runs the full protocol: per photon draw a hidden variable, pick an
/// angle, record the outcome of the deterministic map. Events come back
/// in index order, identical for any worker count.
pub fn run_protocol(
    model: &ModelSpec,
    density: &LambdaDensity,
    spec: &ProtocolSpec,
) -> Result<Vec<PhotonEvent>, ProtocolError> {
    spec.validate()?;
    // The per-angle Bloch geometry reduces to one dot product each.
    let m_dot_n: Vec<f64> = spec
        .angles
        .iter()
        .map(|&theta| polariser_axis(theta).dot(model.axis()))
        .collect();
    let angles = spec.angles.clone();
    let n_angles = angles.len() as u64;
    let density = density.clone();
    let mode = spec.mode;
    let seed = spec.seed;
    let events = batched_fill(spec.photon_count, move |batch, start, out| {
        let mut rng = batch_rng(seed, Purpose::Protocol, batch);
        for (offset, slot) in out.iter_mut().enumerate() {
            let index = start + offset as u64;
            let a = match mode {
                ProtocolMode::RandomReset => rng.random_range(0..n_angles) as usize,
                ProtocolMode::FixedGrid => (index % n_angles) as usize,
            };
            let lambda = density.sample_one(&mut rng);
            let t = lambda.s.value() * m_dot_n[a];
            let outcome = if t - lambda.u >= 0.0 { Sign::Plus } else { Sign::Minus };
            *slot = PhotonEvent { index, theta: angles[a], outcome };
        }
    });
    Ok(events)
}

/// A fixed-setting sub-ensemble: one macroscopically distinct
/// arrangement, with its own seed so distinct arrangements share no
/// hidden-variable draws.
pub fn run_arrangement(
    m: &UnitAxis,
    model: &ModelSpec,
    density: &LambdaDensity,
    count: u64,
    seed: u64,
) -> Result<Vec<Sign>, ProtocolError> {
    if count == 0 {
        return Err(ProtocolError::EmptyRun);
    }
    let t_axis = m.dot(model.axis());
    let density = density.clone();
    Ok(batched_fill(count, move |batch, _start, out| {
        let mut rng = batch_rng(seed, Purpose::Arrangement, batch);
        for slot in out.iter_mut() {
            let lambda = density.sample_one(&mut rng);
            let t = lambda.s.value() * t_axis;
            *slot = if t - lambda.u >= 0.0 { Sign::Plus } else { Sign::Minus };
        }
    }))
}

/// Empirical mean of a ±1 outcome set.
pub fn outcome_mean(outcomes: &[Sign]) -> f64 {
    if outcomes.is_empty() {
        return 0.0;
    }
    outcomes.iter().map(|s| s.value()).sum::<f64>() / outcomes.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hv::{equilibrium_density, exact_prob_plus, HiddenVar};

    fn model(n: [f64; 3], p: f64) -> ModelSpec {
        ModelSpec::new(UnitAxis::from_vector(n).unwrap(), p).unwrap()
    }

    #[test]
    fn single_photon_delta_case() {
        let m = model([1.0, 0.0, 0.0], 1.0);
        let d = LambdaDensity::delta(HiddenVar { s: Sign::Plus, u: 0.3 });
        // At theta = acos(0.5)/2 the Bloch dot product is 0.5 > u0.
        let theta = (0.5f64).acos() / 2.0;
        let spec = ProtocolSpec {
            mode: ProtocolMode::FixedGrid,
            angles: vec![theta],
            photon_count: 1,
            seed: 0,
        };
        let events = run_protocol(&m, &d, &spec).unwrap();
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].outcome, Sign::Plus);
        assert_eq!(events[0].index, 0);
        assert_eq!(events[0].theta, theta);
    }

    #[test]
    fn malus_law_at_sixty_degrees() {
        let m = model([1.0, 0.0, 0.0], 1.0);
        let d = equilibrium_density(&m);
        let spec = ProtocolSpec {
            mode: ProtocolMode::FixedGrid,
            angles: vec![60f64.to_radians()],
            photon_count: 1_000_000,
            seed: 21,
        };
        let events = run_protocol(&m, &d, &spec).unwrap();
        let p_hat = events.iter().filter(|e| e.outcome == Sign::Plus).count() as f64
            / events.len() as f64;
        // 3 sigma binomial around cos^2(60 deg) = 0.25
        assert!((p_hat - 0.25).abs() < 0.0013, "p_hat = {p_hat}");
    }

    #[test]
    fn random_reset_unpolarised_is_flat() {
        let m = model([1.0, 0.0, 0.0], 0.0);
        let d = equilibrium_density(&m);
        let spec = ProtocolSpec {
            mode: ProtocolMode::RandomReset,
            angles: uniform_angle_grid(12),
            photon_count: 600_000,
            seed: 33,
        };
        let events = run_protocol(&m, &d, &spec).unwrap();
        for &theta in &spec.angles {
            let bin: Vec<_> = events.iter().filter(|e| e.theta == theta).collect();
            let n = bin.len() as f64;
            let p_hat = bin.iter().filter(|e| e.outcome == Sign::Plus).count() as f64 / n;
            let four_sigma = 4.0 * (0.25 / n).sqrt();
            assert!((p_hat - 0.5).abs() < four_sigma, "theta {theta}: {p_hat}");
        }
    }

    #[test]
    fn protocol_is_deterministic() {
        let m = model([0.2, 0.5, -0.4], 0.6);
        let d = equilibrium_density(&m);
        let spec = ProtocolSpec {
            mode: ProtocolMode::RandomReset,
            angles: uniform_angle_grid(7),
            photon_count: 50_000,
            seed: 5,
        };
        let a = run_protocol(&m, &d, &spec).unwrap();
        let b = run_protocol(&m, &d, &spec).unwrap();
        assert_eq!(a, b);
        for (i, e) in a.iter().enumerate() {
            assert_eq!(e.index, i as u64);
        }
    }

    #[test]
    fn protocol_matches_exact_probability_per_bin() {
        let m = model([0.3, 0.9, 0.1], 0.9);
        let d = LambdaDensity::new(
            0.75,
            0.25,
            crate::hv::UDensity::Histogram {
                edges: vec![-1.0, -0.1, 1.0],
                masses: vec![0.7, 0.3],
            },
            crate::hv::UDensity::Uniform,
        )
        .unwrap();
        let spec = ProtocolSpec {
            mode: ProtocolMode::FixedGrid,
            angles: uniform_angle_grid(6),
            photon_count: 600_000,
            seed: 77,
        };
        let events = run_protocol(&m, &d, &spec).unwrap();
        for &theta in &spec.angles {
            let p = exact_prob_plus(&polariser_axis(theta), &d, &m);
            let bin: Vec<_> = events.iter().filter(|e| e.theta == theta).collect();
            let n = bin.len() as f64;
            let p_hat = bin.iter().filter(|e| e.outcome == Sign::Plus).count() as f64 / n;
            let tol = 5.0 * (p * (1.0 - p) / n).sqrt().max(1e-9);
            assert!((p_hat - p).abs() < tol, "theta {theta}: {p_hat} vs {p}");
        }
    }

    #[test]
    fn arrangement_statistics() {
        let m = model([1.0, 0.0, 0.0], 0.8);
        let d = equilibrium_density(&m);

        // delta ensemble: zero dispersion
        let delta = LambdaDensity::delta(HiddenVar { s: Sign::Plus, u: -0.2 });
        let outs = run_arrangement(m.axis(), &m, &delta, 1000, 4).unwrap();
        assert!(outs.iter().all(|&s| s == Sign::Plus));

        // m orthogonal to P
        let perp = UnitAxis::new([0.0, 0.0, 1.0]).unwrap();
        let outs = run_arrangement(&perp, &m, &d, 250_000, 5).unwrap();
        let mean = outcome_mean(&outs);
        assert!(mean.abs() < 4.0 / (outs.len() as f64).sqrt());

        // aligned with P = 0.8
        let n = 1_000_000u64;
        let outs = run_arrangement(m.axis(), &m, &d, n, 6).unwrap();
        let mean = outcome_mean(&outs);
        let se = ((1.0 - 0.64) / n as f64).sqrt();
        assert!((mean - 0.8).abs() < 4.0 * se, "mean {mean}");
    }

    #[test]
    fn arrangements_with_distinct_seeds_are_independent() {
        let m = model([1.0, 0.0, 0.0], 0.0);
        let d = equilibrium_density(&m);
        let n = 200_000u64;
        let a = run_arrangement(m.axis(), &m, &d, n, 100).unwrap();
        let b = run_arrangement(m.axis(), &m, &d, n, 101).unwrap();
        let ma = outcome_mean(&a);
        let mb = outcome_mean(&b);
        let r: f64 = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (x.value() - ma) * (y.value() - mb))
            .sum::<f64>()
            / n as f64;
        assert!(r.abs() < 4.0 / (n as f64).sqrt(), "corr {r}");
    }

    #[test]
    fn validation_errors() {
        let spec = ProtocolSpec {
            mode: ProtocolMode::FixedGrid,
            angles: vec![],
            photon_count: 10,
            seed: 0,
        };
        assert_eq!(spec.validate(), Err(ProtocolError::NoAngles));
        let spec = ProtocolSpec {
            mode: ProtocolMode::FixedGrid,
            angles: vec![0.0],
            photon_count: 0,
            seed: 0,
        };
        assert_eq!(spec.validate(), Err(ProtocolError::EmptyRun));
    }
}
