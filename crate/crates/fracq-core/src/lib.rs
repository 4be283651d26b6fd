//! Simulation, calibration, and validation of cycle-to-cycle queue-length
//! dynamics at signalized intersections.
//!
//! The model couples a mean-reverting queue equation driven by fractional
//! Gaussian noise with a periodic time-varying mean and an Ornstein-Uhlenbeck
//! volatility process. The crate provides:
//!
//! - [`timeseries`]: CSV ingestion, outlier cleaning, cycle aggregation;
//! - [`point_process`]: vehicle arrivals, GBM interarrivals, the Ito flow
//!   transform, and cycle accumulation;
//! - [`fbm`]: exact fractional Brownian motion synthesis;
//! - [`queue_sde`]: the coupled queue/volatility Euler integrator;
//! - [`seasonal`]: ACF periodicity detection and harmonic trend extraction;
//! - [`spectral`]: periodograms, log-binned averaging, slope fits, peaks;
//! - [`calibration`]: RMSE objective and Nelder-Mead simplex fitting;
//! - [`validation`]: correlation, distribution, and PSD comparisons.
//!
//! Everything stochastic is keyed by a `u64` seed and is bitwise reproducible.

pub mod calibration;
pub mod error;
pub mod fbm;
pub mod point_process;
pub mod queue_sde;
pub mod rng;
pub mod seasonal;
pub mod spectral;
pub mod timeseries;
pub mod validation;

pub use calibration::{CalibrationConfig, CalibrationResult, FittedParams};
pub use error::{Error, Result};
pub use fbm::FbmPath;
pub use point_process::{ArrivalProcess, FlowParams, InterarrivalParams};
pub use queue_sde::{ModelParams, SdeParams, SimConfig, VolParams, VolScheme};
pub use seasonal::SeasonalTrend;
pub use spectral::SpectralEstimate;
pub use timeseries::{CleaningConfig, QueueSeries};
pub use validation::ValidationReport;
