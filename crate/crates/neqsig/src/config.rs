//! Run configuration.
//!
//! One human-editable TOML file drives every pipeline. Unknown keys are
//! hard errors so a typo cannot silently fall back to a default. All
//! randomness flows from the single top-level `seed`: each consumer
//! derives an independent stream by combining the seed with a fixed
//! purpose tag and batch index (see `exec::batch_rng`), so runs are
//! reproducible bit for bit regardless of thread count.

use crate::bloch::UnitAxis;
use crate::experiment::{uniform_angle_grid, ProtocolMode, ProtocolSpec};
use crate::hv::{equilibrium_density, HiddenVar, LambdaDensity, ModelSpec, Sign, UDensity};
use crate::relaxation::RelaxationConfig;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_1_SQRT_2;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("config does not parse: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid(e: impl std::fmt::Display) -> ConfigError {
    ConfigError::Invalid(e.to_string())
}

/// Full resolved run configuration; every field has a documented default
/// so the empty file is a valid config.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub model: ModelSection,
    pub density: DensitySection,
    pub protocol: ProtocolSection,
    pub analysis: AnalysisSection,
    pub additivity: AdditivitySection,
    pub relaxation: RelaxSection,
    pub output: OutputSection,
}

/// Bloch axis `n` of the underlying pure-state pair and the equilibrium
/// polarisation magnitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    /// Need not be normalized; it is normalized on resolution.
    pub axis: [f64; 3],
    pub p_target: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection { axis: [1.0, 0.0, 0.0], p_target: 0.8 }
    }
}

/// Hidden-variable ensemble.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DensitySection {
    /// The quantum-equilibrium measure for the configured model.
    #[default]
    Equilibrium,
    /// Every system carries the same hidden variable (maximal
    /// nonequilibrium).
    Delta {
        #[serde(default = "one")]
        s: i64,
        u0: f64,
    },
    /// Explicit sign weights and per-branch u-densities.
    Mixture {
        weight_plus: f64,
        plus: UDensity,
        minus: UDensity,
    },
}

fn one() -> i64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolSection {
    pub mode: ProtocolMode,
    pub angles: AngleSpec,
    pub photons: u64,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        ProtocolSection {
            mode: ProtocolMode::RandomReset,
            angles: AngleSpec::Count(24),
            photons: 100_000,
        }
    }
}

/// Either a uniform grid size over [0, pi) or an explicit angle list
/// (radians).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AngleSpec {
    Count(usize),
    List(Vec<f64>),
}

impl AngleSpec {
    pub fn resolve(&self) -> Vec<f64> {
        match self {
            AngleSpec::Count(n) => uniform_angle_grid(*n),
            AngleSpec::List(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    pub bins: usize,
    pub k_alt: u32,
    pub significance: f64,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        AnalysisSection {
            bins: crate::analysis::DEFAULT_BINS,
            k_alt: crate::analysis::DEFAULT_K_ALT,
            significance: crate::analysis::DEFAULT_SIGNIFICANCE,
        }
    }
}

/// Coefficients of the combined observable in the canonical triad and
/// the per-arrangement sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdditivitySection {
    pub coefficients: [f64; 3],
    pub photons_per_arrangement: u64,
}

impl Default for AdditivitySection {
    fn default() -> Self {
        AdditivitySection {
            coefficients: [FRAC_1_SQRT_2, FRAC_1_SQRT_2, 0.0],
            photons_per_arrangement: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RelaxSection {
    pub modes: usize,
    pub trajectories: u64,
    pub cells: usize,
    pub t_end: f64,
    pub checkpoints: usize,
    pub tol: f64,
}

impl Default for RelaxSection {
    fn default() -> Self {
        let r = RelaxationConfig::default();
        RelaxSection {
            modes: r.modes,
            trajectories: r.trajectories,
            cells: r.cells,
            t_end: r.t_end,
            checkpoints: r.checkpoints,
            tol: r.tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// Directory for emitted artifacts; overridable by environment, and
    /// a CLI `--out` path wins over both.
    pub dir: Option<String>,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Top-level seed, with an explicit CLI value taking precedence.
    pub fn effective_seed(&self, cli_seed: Option<u64>) -> u64 {
        cli_seed.unwrap_or(self.seed)
    }

    pub fn model_spec(&self) -> Result<ModelSpec, ConfigError> {
        let axis = UnitAxis::from_vector(self.model.axis).map_err(invalid)?;
        ModelSpec::new(axis, self.model.p_target).map_err(invalid)
    }

    pub fn lambda_density(&self, model: &ModelSpec) -> Result<LambdaDensity, ConfigError> {
        match &self.density {
            DensitySection::Equilibrium => Ok(equilibrium_density(model)),
            DensitySection::Delta { s, u0 } => {
                let s = Sign::from_value(*s)
                    .ok_or_else(|| invalid(format!("delta sign must be +1 or -1, got {s}")))?;
                if !(-1.0..=1.0).contains(u0) {
                    return Err(invalid(format!("delta u0 {u0} outside [-1, 1]")));
                }
                Ok(LambdaDensity::delta(HiddenVar { s, u: *u0 }))
            }
            DensitySection::Mixture { weight_plus, plus, minus } => {
                LambdaDensity::new(*weight_plus, 1.0 - *weight_plus, plus.clone(), minus.clone())
                    .map_err(invalid)
            }
        }
    }

    pub fn protocol_spec(&self, seed: u64) -> Result<ProtocolSpec, ConfigError> {
        let spec = ProtocolSpec {
            mode: self.protocol.mode,
            angles: self.protocol.angles.resolve(),
            photon_count: self.protocol.photons,
            seed,
        };
        spec.validate().map_err(invalid)?;
        Ok(spec)
    }

    pub fn relaxation_config(&self, seed: u64) -> RelaxationConfig {
        RelaxationConfig {
            modes: self.relaxation.modes,
            trajectories: self.relaxation.trajectories,
            cells: self.relaxation.cells,
            t_end: self.relaxation.t_end,
            checkpoints: self.relaxation.checkpoints,
            tol: self.relaxation.tol,
            seed,
        }
    }
}
