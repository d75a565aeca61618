//! Verification tools for probabilistic forecasts of high-impact weather.
//!
//! The crate is organised around a small set of shared types
//! ([`Forecast`], [`WeightFunction`], [`ChainingFunction`], [`HeatLevel`])
//! and the scoring, calibration and post-processing routines built on them:
//!
//! - [`uniscores`]: Brier score, CRPS and its threshold-weighted,
//!   outcome-weighted and vertically re-scaled variants.
//! - [`mvscores`]: energy and variogram scores with their weighted variants.
//! - [`calibration`]: PIT/rank histograms, conditional PIT values,
//!   PIT reliability diagrams and CORP reliability diagrams.
//! - [`postprocess`]: lapse-rate correction, EMOS, climatology, ensemble
//!   smoothing and ensemble copula coupling.
//! - [`synthlab`]: synthetic experiments and Monte-Carlo propriety checks.

pub mod calibration;
pub mod dist;
pub mod error;
pub mod forecast;
pub mod heat;
pub mod isotonic;
pub mod mvscores;
pub mod optim;
pub mod postprocess;
pub mod quad;
pub mod synthlab;
pub mod table;
pub mod uniscores;
pub mod weight;

pub use error::{Error, Result};
pub use forecast::{Forecast, MvEnsemble, ObservationCase, Observation};
pub use heat::HeatLevel;
pub use weight::{ChainingFunction, WeightFunction};

/// Version of this crate.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Floor on the weighted mass `E_F[w(X)]` below which the weighted
/// distribution is treated as undefined.
pub const WEIGHTED_MASS_FLOOR: f64 = 1e-12;

/// Variance floor applied to fitted and smoothed normal distributions (°C²).
pub const VARIANCE_FLOOR: f64 = 1e-6;
