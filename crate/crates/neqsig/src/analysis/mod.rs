//! Statistical detection of the nonequilibrium signature.
//!
//! Binned transmission fractions are fit by weighted linear least squares
//! in the harmonic basis `{1, cos 2jT, sin 2jT}`. The model is linear in
//! the coefficients, so the fit is an exact convex solve with no
//! optimizer nondeterminism; the polarisation amplitude and phase are
//! derived quantities. Equilibrium data carries only the first harmonic,
//! so excess power in higher harmonics (a nested chi-square comparison)
//! flags a broken sinusoidal modulation. Non-additive expectations across
//! fixed-arrangement sub-ensembles are tested with a plain z statistic.

pub mod special;

use crate::experiment::{outcome_mean, PhotonEvent};
use crate::hv::Sign;
use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use special::{chi_square_sf, gamma_p, gamma_q, ks_test_sorted, kolmogorov_q, ln_gamma};

/// Default significance level for all verdicts.
pub const DEFAULT_SIGNIFICANCE: f64 = 0.01;
/// Default alternative harmonic order for the excess test.
pub const DEFAULT_K_ALT: u32 = 3;
/// Default number of angle bins.
pub const DEFAULT_BINS: usize = 24;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("no events to tabulate")]
    EmptyInput,
    #[error("angle {0} is not finite")]
    BadAngle(f64),
    #[error("bin at angle {theta} has zero total count")]
    EmptyBin { theta: f64 },
    #[error("{bins} bins cannot support a fit with {params} parameters")]
    TooFewBins { bins: usize, params: usize },
    #[error("normal equations are rank deficient")]
    RankDeficient,
    #[error("test needs at least 1 degree of freedom, got {0}")]
    BadDof(i64),
    #[error("fit must have harmonic order K = 1, got {0}")]
    NotFirstOrder(u32),
    #[error("nested test needs K_alt > K_null, got {null} and {alt}")]
    NotNested { null: u32, alt: u32 },
    #[error("sub-ensemble {0} is empty")]
    EmptyArrangement(usize),
}

/// One angle bin: counts of transmitted (+1) photons out of the total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleBin {
    pub theta: f64,
    pub n_plus: u64,
    pub n: u64,
}

impl AngleBin {
    pub fn proportion(&self) -> f64 {
        self.n_plus as f64 / self.n as f64
    }
}

/// Binned event counts, sorted by angle in `[0, pi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleBinTable {
    pub rows: Vec<AngleBin>,
}

impl AngleBinTable {
    pub fn total(&self) -> u64 {
        self.rows.iter().map(|r| r.n).sum()
    }
}

/// Exact per-angle counts. Angles are folded into `[0, pi)` (the
/// polariser has period pi) and matched bitwise: distinct floating-point
/// settings produce distinct bins.
pub fn tabulate(events: &[PhotonEvent]) -> Result<AngleBinTable, AnalysisError> {
    if events.is_empty() {
        return Err(AnalysisError::EmptyInput);
    }
    let mut keyed: Vec<(f64, Sign)> = Vec::with_capacity(events.len());
    for e in events {
        if !e.theta.is_finite() {
            return Err(AnalysisError::BadAngle(e.theta));
        }
        keyed.push((e.theta.rem_euclid(std::f64::consts::PI), e.outcome));
    }
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rows: Vec<AngleBin> = Vec::new();
    for (theta, outcome) in keyed {
        match rows.last_mut() {
            Some(row) if row.theta == theta => {
                row.n += 1;
                if outcome == Sign::Plus {
                    row.n_plus += 1;
                }
            }
            _ => rows.push(AngleBin {
                theta,
                n_plus: (outcome == Sign::Plus) as u64,
                n: 1,
            }),
        }
    }
    Ok(AngleBinTable { rows })
}

/// Result of a weighted harmonic least-squares fit
/// `p(T) = a0 + sum_j a_j cos 2jT + b_j sin 2jT`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicFit {
    pub k_max: u32,
    /// `[a0, a1, b1, a2, b2, ...]`.
    pub coefficients: Vec<f64>,
    pub chi2: f64,
    pub dof: u64,
    /// First-harmonic amplitude `2 sqrt(a1^2 + b1^2)`: the estimate of
    /// the polarisation degree P.
    pub amplitude1: f64,
    /// Standard error of `amplitude1` from the fit covariance.
    pub amplitude1_se: f64,
    /// Phase of the first harmonic, `p ~ a0 + (amplitude1/2) cos(2T - phase1)`.
    pub phase1: f64,
}

/// Weighted linear least squares in the harmonic basis. Weights are the
/// inverse binomial variances with add-half smoothing
/// `p~ = (n+ + 0.5) / (n + 1)`, which keeps them finite for the exact
/// 0/1 bins a zero-dispersion ensemble produces.
pub fn fit_harmonics(table: &AngleBinTable, k_max: u32) -> Result<HarmonicFit, AnalysisError> {
    let params = 2 * k_max as usize + 1;
    let bins = table.rows.len();
    if bins < params {
        return Err(AnalysisError::TooFewBins { bins, params });
    }
    for row in &table.rows {
        if row.n == 0 {
            return Err(AnalysisError::EmptyBin { theta: row.theta });
        }
    }
    // duplicate angles do not add rank
    let mut thetas: Vec<f64> = table.rows.iter().map(|r| r.theta).collect();
    thetas.sort_by(f64::total_cmp);
    thetas.dedup();
    if thetas.len() < params {
        return Err(AnalysisError::RankDeficient);
    }

    let mut xtwx = DMatrix::<f64>::zeros(params, params);
    let mut xtwy = DVector::<f64>::zeros(params);
    let mut basis = vec![0.0; params];
    let mut weights = Vec::with_capacity(bins);
    for row in &table.rows {
        let n = row.n as f64;
        let p_smooth = (row.n_plus as f64 + 0.5) / (n + 1.0);
        let w = n / (p_smooth * (1.0 - p_smooth));
        weights.push(w);
        let y = row.proportion();
        basis[0] = 1.0;
        for j in 1..=k_max as usize {
            let (s, c) = (2.0 * j as f64 * row.theta).sin_cos();
            basis[2 * j - 1] = c;
            basis[2 * j] = s;
        }
        for a in 0..params {
            xtwy[a] += w * basis[a] * y;
            for b in a..params {
                xtwx[(a, b)] += w * basis[a] * basis[b];
            }
        }
    }
    for a in 0..params {
        for b in 0..a {
            xtwx[(a, b)] = xtwx[(b, a)];
        }
    }

    let chol = Cholesky::new(xtwx.clone()).ok_or(AnalysisError::RankDeficient)?;
    let beta = chol.solve(&xtwy);
    let covariance = chol.inverse();

    let mut chi2 = 0.0;
    for (row, &w) in table.rows.iter().zip(&weights) {
        basis[0] = 1.0;
        for j in 1..=k_max as usize {
            let (s, c) = (2.0 * j as f64 * row.theta).sin_cos();
            basis[2 * j - 1] = c;
            basis[2 * j] = s;
        }
        let fitted: f64 = basis.iter().zip(beta.iter()).map(|(x, b)| x * b).sum();
        let r = row.proportion() - fitted;
        chi2 += w * r * r;
    }

    let (amplitude1, amplitude1_se, phase1) = if k_max >= 1 {
        let (a1, b1) = (beta[1], beta[2]);
        let r = (a1 * a1 + b1 * b1).sqrt();
        let amp = 2.0 * r;
        let (va, vb, cab) = (covariance[(1, 1)], covariance[(2, 2)], covariance[(1, 2)]);
        let var = if r > 1e-300 {
            // delta method on amp = 2 sqrt(a1^2 + b1^2)
            4.0 * (a1 * a1 * va + b1 * b1 * vb + 2.0 * a1 * b1 * cab) / (r * r)
        } else {
            2.0 * (va + vb)
        };
        (amp, var.max(0.0).sqrt(), b1.atan2(a1))
    } else {
        (0.0, 0.0, 0.0)
    };

    Ok(HarmonicFit {
        k_max,
        coefficients: beta.iter().copied().collect(),
        chi2,
        dof: (bins - params) as u64,
        amplitude1,
        amplitude1_se,
        phase1,
    })
}

/// Outcome of one hypothesis test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub statistic: f64,
    pub dof: u64,
    pub p_value: f64,
    pub significance: f64,
    /// True when the null (quantum-equilibrium statistics) is rejected.
    pub reject: bool,
}

impl TestReport {
    fn at(statistic: f64, dof: u64, p_value: f64, significance: f64) -> Self {
        TestReport {
            statistic,
            dof,
            p_value,
            significance,
            reject: p_value < significance,
        }
    }
}

/// Chi-square goodness of fit of the pure sinusoid (K = 1) model.
pub fn sinusoid_gof(fit: &HarmonicFit, significance: f64) -> Result<TestReport, AnalysisError> {
    if fit.k_max != 1 {
        return Err(AnalysisError::NotFirstOrder(fit.k_max));
    }
    if fit.dof < 1 {
        return Err(AnalysisError::BadDof(fit.dof as i64));
    }
    let p = chi_square_sf(fit.chi2, fit.dof);
    Ok(TestReport::at(fit.chi2, fit.dof, p, significance))
}

/// Nested harmonic comparison: the drop in chi-square from adding
/// harmonics above `k_null` is chi-square distributed with
/// `2 (k_alt - k_null)` dof under the sinusoidal null. A small p-value
/// flags nonequilibrium.
pub fn harmonic_excess_test(
    table: &AngleBinTable,
    k_null: u32,
    k_alt: u32,
    significance: f64,
) -> Result<TestReport, AnalysisError> {
    if k_alt <= k_null {
        return Err(AnalysisError::NotNested { null: k_null, alt: k_alt });
    }
    let fit_null = fit_harmonics(table, k_null)?;
    let fit_alt = fit_harmonics(table, k_alt)?;
    let stat = (fit_null.chi2 - fit_alt.chi2).max(0.0);
    let dof = 2 * (k_alt - k_null) as u64;
    let p = chi_square_sf(stat, dof);
    Ok(TestReport::at(stat, dof, p, significance))
}

/// Result of the additivity z-test across four sub-ensembles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdditivityOutcome {
    /// Empirical means of the arrangements for `m1, m2, m3` and the
    /// combined axis `m`.
    pub means: [f64; 4],
    /// `delta = E(m) - sum c_i E(m_i)`.
    pub delta: f64,
    pub standard_error: f64,
    pub report: TestReport,
}

/// Tests `E(m) = sum c_i E(m_i)` on four independent fixed-arrangement
/// outcome sets (order: `m1, m2, m3, m`). Standard errors come from the
/// independent binomial variances; zero-variance degenerate sets fall
/// back to an exact comparison.
pub fn additivity_test(
    sets: [&[Sign]; 4],
    c: &[f64; 3],
    significance: f64,
) -> Result<AdditivityOutcome, AnalysisError> {
    for (i, set) in sets.iter().enumerate() {
        if set.is_empty() {
            return Err(AnalysisError::EmptyArrangement(i));
        }
    }
    let means = [
        outcome_mean(sets[0]),
        outcome_mean(sets[1]),
        outcome_mean(sets[2]),
        outcome_mean(sets[3]),
    ];
    let delta = means[3] - c[0] * means[0] - c[1] * means[1] - c[2] * means[2];
    let var_of = |mean: f64, n: usize| (1.0 - mean * mean).max(0.0) / n as f64;
    let mut var = var_of(means[3], sets[3].len());
    for i in 0..3 {
        var += c[i] * c[i] * var_of(means[i], sets[i].len());
    }
    let se = var.sqrt();
    let report = if se == 0.0 {
        // zero-dispersion ensembles: integer-exact verdict
        if delta == 0.0 {
            TestReport::at(0.0, 1, 1.0, significance)
        } else {
            TestReport::at(f64::INFINITY, 1, 0.0, significance)
        }
    } else {
        let z = delta / se;
        TestReport::at(z, 1, special::normal_two_sided(z), significance)
    };
    Ok(AdditivityOutcome { means, delta, standard_error: se, report })
}
