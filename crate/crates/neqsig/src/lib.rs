//! Simulator and statistical toolkit for a deterministic hidden-variables
//! model of two-state systems.
//!
//! The model assigns every system a hidden variable `lambda = (s, u)` and
//! a deterministic outcome map `sigma(m, lambda) = sign(s (m.n) - u)`. A
//! distinguished "equilibrium" ensemble over `lambda` reproduces the
//! sinusoidal two-state law `p+ = (1 + P cos(theta)) / 2` exactly; any
//! other ensemble leaves per-system outcomes unchanged but shifts their
//! statistics away from the sinusoid and breaks expectation additivity
//! across incompatible arrangements. The crate provides:
//!
//! - [`bloch`]: measurement-axis geometry on the unit sphere,
//! - [`hv`]: the hidden-variable model, ensembles, and exact predictions,
//! - [`experiment`]: the single-photon polariser protocol (Monte Carlo),
//! - [`analysis`]: harmonic regression and hypothesis tests on event data,
//! - [`relaxation`]: guided-trajectory dynamics in a 1D box showing how
//!   equilibrium arises (equivariance and coarse-grained H decay),
//! - [`events`] and [`config`]: file formats and run configuration.
//!
//! All Monte Carlo operations derive their randomness from one seed via
//! purpose-tagged counter streams ([`exec`]), so every result is
//! bit-reproducible and independent of the worker-thread count. The
//! `parallel` feature (default) parallelizes the batch loops with rayon;
//! disabling it yields identical output sequentially.

pub mod analysis;
pub mod bloch;
pub mod config;
pub mod events;
pub mod exec;
pub mod experiment;
pub mod hv;
pub mod relaxation;
