//! Two-state quantum predictions on the Bloch sphere.
//!
//! Measurement axes are unit vectors in the abstract 3-space; an ensemble
//! is summarized by its mean polarisation vector `P` (equivalent to a 2x2
//! density operator). Linear-polarisation measurements live on the
//! equator: a real polariser angle `Theta` maps to Bloch longitude
//! `2 * Theta`, with `Theta = 0` on the `+x` axis.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for algebraic identities evaluated in one or two flops.
pub const ALGEBRAIC_TOL: f64 = 1e-12;
/// Tolerance for composed rotations and normalizations.
pub const ROTATION_TOL: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum BlochError {
    #[error("axis norm {norm} differs from 1 by more than {ALGEBRAIC_TOL}")]
    NotUnit { norm: f64 },
    #[error("axes {i} and {j} are not orthogonal (inner product {dot})")]
    NotOrthogonal { i: usize, j: usize, dot: f64 },
    #[error("polarisation norm {norm} exceeds 1")]
    PolarisationTooLarge { norm: f64 },
    #[error("matrix is not orthogonal (max |R^T R - I| entry = {deviation})")]
    NotRotation { deviation: f64 },
    #[error("cannot normalize a (near-)zero vector")]
    ZeroVector,
}

/// A measurement direction: a point on the Bloch sphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitAxis([f64; 3]);

impl UnitAxis {
    /// Accepts a vector already normalized to within `1e-12`.
    pub fn new(components: [f64; 3]) -> Result<Self, BlochError> {
        let norm = norm3(&components);
        if (norm - 1.0).abs() > ALGEBRAIC_TOL {
            return Err(BlochError::NotUnit { norm });
        }
        Ok(UnitAxis(components))
    }

    /// Normalizes an arbitrary nonzero vector onto the sphere.
    pub fn from_vector(v: [f64; 3]) -> Result<Self, BlochError> {
        let norm = norm3(&v);
        if norm < 1e-300 {
            return Err(BlochError::ZeroVector);
        }
        Ok(UnitAxis([v[0] / norm, v[1] / norm, v[2] / norm]))
    }

    pub fn components(&self) -> [f64; 3] {
        self.0
    }

    pub fn dot(&self, other: &UnitAxis) -> f64 {
        dot3(&self.0, &other.0)
    }

    pub fn dot_vector(&self, v: &[f64; 3]) -> f64 {
        dot3(&self.0, v)
    }
}

/// A general two-state observable `m0*I + m . sigma`; its traceless part
/// need not be normalized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observable {
    pub m0: f64,
    pub axis_part: [f64; 3],
}

impl Observable {
    /// Eigenvalues `(m0 + |m|, m0 - |m|)` of the 2x2 operator.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let r = norm3(&self.axis_part);
        (self.m0 + r, self.m0 - r)
    }
}

/// The quantum ensemble, summarized by its mean polarisation vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleState {
    polarisation: [f64; 3],
}

impl EnsembleState {
    pub fn new(polarisation: [f64; 3]) -> Result<Self, BlochError> {
        let norm = norm3(&polarisation);
        if norm > 1.0 + ALGEBRAIC_TOL {
            return Err(BlochError::PolarisationTooLarge { norm });
        }
        Ok(EnsembleState { polarisation })
    }

    pub fn unpolarised() -> Self {
        EnsembleState { polarisation: [0.0; 3] }
    }

    pub fn polarisation(&self) -> [f64; 3] {
        self.polarisation
    }

    pub fn degree(&self) -> f64 {
        norm3(&self.polarisation)
    }
}

/// Three mutually orthogonal measurement axes, the basis used to probe
/// expectation additivity across distinct experimental arrangements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrthonormalTriad {
    axes: [UnitAxis; 3],
}

impl OrthonormalTriad {
    pub fn new(axes: [UnitAxis; 3]) -> Result<Self, BlochError> {
        for i in 0..3 {
            for j in (i + 1)..3 {
                let dot = axes[i].dot(&axes[j]);
                if dot.abs() > ALGEBRAIC_TOL {
                    return Err(BlochError::NotOrthogonal { i, j, dot });
                }
            }
        }
        Ok(OrthonormalTriad { axes })
    }

    /// The canonical x/y/z triad.
    pub fn canonical() -> Self {
        OrthonormalTriad {
            axes: [
                UnitAxis([1.0, 0.0, 0.0]),
                UnitAxis([0.0, 1.0, 0.0]),
                UnitAxis([0.0, 0.0, 1.0]),
            ],
        }
    }

    pub fn axes(&self) -> &[UnitAxis; 3] {
        &self.axes
    }

    pub fn axis(&self, i: usize) -> &UnitAxis {
        &self.axes[i]
    }

    /// The probe vector `sum_i c_i m_i` (not necessarily unit).
    pub fn combine(&self, c: &[f64; 3]) -> [f64; 3] {
        let mut v = [0.0; 3];
        for (ci, axis) in c.iter().zip(self.axes.iter()) {
            let a = axis.components();
            v[0] += ci * a[0];
            v[1] += ci * a[1];
            v[2] += ci * a[2];
        }
        v
    }
}

/// Born-rule mean of `m . sigma`: the dot product `m . P`.
pub fn born_mean(m: &UnitAxis, state: &EnsembleState) -> f64 {
    m.dot_vector(&state.polarisation)
}

/// Born-rule outcome probabilities `(p_plus, p_minus)`, the sinusoidal
/// law `p± = (1 ± m.P) / 2`.
pub fn born_prob(m: &UnitAxis, state: &EnsembleState) -> (f64, f64) {
    let mean = born_mean(m, state);
    (0.5 * (1.0 + mean), 0.5 * (1.0 - mean))
}

/// Bloch axis of a linear polariser at real-space angle `theta`:
/// `(cos 2T, sin 2T, 0)`, period pi.
pub fn polariser_axis(theta: f64) -> UnitAxis {
    let (s, c) = (2.0 * theta).sin_cos();
    UnitAxis([c, s, 0.0])
}

/// Rotates a triad and transforms expansion coefficients covariantly
/// (`c'_i = R_ij c_j`, column-vector action), leaving the probe vector
/// `c_i m_i` unchanged. Rejects a non-orthogonal `R`.
pub fn rotate_triad(
    r: &Matrix3<f64>,
    triad: &OrthonormalTriad,
    c: &[f64; 3],
) -> Result<(OrthonormalTriad, [f64; 3]), BlochError> {
    let gram = r.transpose() * r;
    let deviation = (gram - Matrix3::identity()).abs().max();
    if deviation > ROTATION_TOL {
        return Err(BlochError::NotRotation { deviation });
    }
    // The basis vectors rotate with R, the components contra-rotate:
    // m'_i = sum_j R_ij m_j keeps c'_i m'_i = c_j m_j for c' = R c.
    let rotate_axis = |axis_index: usize| -> UnitAxis {
        let mut v = [0.0; 3];
        for j in 0..3 {
            let a = triad.axes[j].components();
            let rij = r[(axis_index, j)];
            v[0] += rij * a[0];
            v[1] += rij * a[1];
            v[2] += rij * a[2];
        }
        // R orthogonal within tolerance; renormalize the rounding away.
        UnitAxis::from_vector(v).expect("rotated unit axis cannot vanish")
    };
    let axes = [rotate_axis(0), rotate_axis(1), rotate_axis(2)];
    let cv = Vector3::new(c[0], c[1], c[2]);
    let cp = r * cv;
    let triad = OrthonormalTriad { axes };
    Ok((triad, [cp[0], cp[1], cp[2]]))
}

pub(crate) fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm3(a: &[f64; 3]) -> f64 {
    dot3(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    #[test]
    fn unit_axis_rejects_non_unit() {
        assert!(UnitAxis::new([1.0, 1.0, 0.0]).is_err());
        assert!(UnitAxis::new([1.0, 0.0, 0.0]).is_ok());
    }

    #[test]
    fn born_mean_examples() {
        let z = UnitAxis::new([0.0, 0.0, 1.0]).unwrap();
        let x = UnitAxis::new([1.0, 0.0, 0.0]).unwrap();
        assert_eq!(born_mean(&z, &EnsembleState::unpolarised()), 0.0);
        let pure = EnsembleState::new([1.0, 0.0, 0.0]).unwrap();
        assert_eq!(born_mean(&x, &pure), 1.0);
        // 80% linear polarisation, the strength cited for GRB photons
        let grb = EnsembleState::new([0.8, 0.0, 0.0]).unwrap();
        assert_eq!(born_mean(&x, &grb), 0.8);
    }

    #[test]
    fn born_prob_malus_law() {
        let state = EnsembleState::new([1.0, 0.0, 0.0]).unwrap();
        let m = polariser_axis(60f64.to_radians());
        let (p, q) = born_prob(&m, &state);
        assert_abs_diff_eq!(p, 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(p + q, 1.0, epsilon = 1e-15);

        let any = UnitAxis::new([0.0, 1.0, 0.0]).unwrap();
        assert_eq!(born_prob(&any, &EnsembleState::unpolarised()), (0.5, 0.5));

        // axis orthogonal to a fully polarised state
        let z = UnitAxis::new([0.0, 0.0, 1.0]).unwrap();
        assert_eq!(born_prob(&z, &state), (0.5, 0.5));
    }

    #[test]
    fn eigenvalue_examples() {
        let pauli = Observable { m0: 0.0, axis_part: [0.0, 0.0, 1.0] };
        assert_eq!(pauli.eigenvalues(), (1.0, -1.0));
        let ident = Observable { m0: 5.0, axis_part: [0.0, 0.0, 0.0] };
        assert_eq!(ident.eigenvalues(), (5.0, 5.0));
        // frozen from the 2x2 numerical diagonalization oracle below
        let general = Observable { m0: 1.0, axis_part: [0.0, 3.0, 4.0] };
        assert_eq!(general.eigenvalues(), (6.0, -4.0));
    }

    /// Oracle: diagonalize m0*I + m.sigma as an explicit complex 2x2
    /// matrix and compare with the closed form.
    #[test]
    fn eigenvalues_match_matrix_diagonalization() {
        use nalgebra::Complex;
        use nalgebra::Matrix2;
        let cases = [
            Observable { m0: 1.0, axis_part: [0.0, 3.0, 4.0] },
            Observable { m0: -0.7, axis_part: [0.3, -1.2, 2.5] },
            Observable { m0: 0.0, axis_part: [1.0, 1.0, 1.0] },
        ];
        for obs in cases {
            let [mx, my, mz] = obs.axis_part;
            let c = |re: f64, im: f64| Complex::new(re, im);
            let mat = Matrix2::new(
                c(obs.m0 + mz, 0.0),
                c(mx, -my),
                c(mx, my),
                c(obs.m0 - mz, 0.0),
            );
            let mut eig: Vec<f64> = mat
                .eigenvalues()
                .expect("hermitian 2x2 always diagonalizable")
                .iter()
                .map(|z| z.re)
                .collect();
            eig.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let (hi, lo) = obs.eigenvalues();
            assert_abs_diff_eq!(eig[0], hi, epsilon = 1e-12);
            assert_abs_diff_eq!(eig[1], lo, epsilon = 1e-12);
        }
    }

    #[test]
    fn polariser_axis_convention() {
        let a = polariser_axis(0.0).components();
        assert_abs_diff_eq!(a[0], 1.0, epsilon = 1e-15);
        let b = polariser_axis(FRAC_PI_2).components();
        assert_abs_diff_eq!(b[0], -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b[1], 0.0, epsilon = 1e-12);
        let c = polariser_axis(FRAC_PI_4).components();
        assert_abs_diff_eq!(c[1], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn rotate_triad_identity_and_permutation() {
        let triad = OrthonormalTriad::canonical();
        let c = [1.0, 0.0, 0.0];
        let (t, cp) = rotate_triad(&Matrix3::identity(), &triad, &c).unwrap();
        assert_eq!(t, triad);
        assert_eq!(cp, c);

        // 90 degrees about axis 3
        let r = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        let (_, cp) = rotate_triad(&r, &triad, &c).unwrap();
        assert_abs_diff_eq!(cp[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(cp[1], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn rotate_triad_rejects_non_orthogonal() {
        let r = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        let err = rotate_triad(&r, &OrthonormalTriad::canonical(), &[1.0, 0.0, 0.0]);
        assert!(matches!(err, Err(BlochError::NotRotation { .. })));
    }

    #[test]
    fn rotate_triad_preserves_probe_vector() {
        use rand::Rng;
        let mut rng = crate::exec::batch_rng(11, crate::exec::Purpose::BornSampling, 0);
        let triad = OrthonormalTriad::canonical();
        for _ in 0..50 {
            let axis = nalgebra::Unit::new_normalize(Vector3::new(
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
            ));
            let angle = rng.random::<f64>() * std::f64::consts::TAU;
            let r = nalgebra::Rotation3::from_axis_angle(&axis, angle);
            let raw = [
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
            ];
            let n = norm3(&raw);
            let c = [raw[0] / n, raw[1] / n, raw[2] / n];
            let before = triad.combine(&c);
            let (t2, c2) = rotate_triad(r.matrix(), &triad, &c).unwrap();
            let after = t2.combine(&c2);
            for k in 0..3 {
                assert_abs_diff_eq!(before[k], after[k], epsilon = ROTATION_TOL);
            }
        }
    }
}
