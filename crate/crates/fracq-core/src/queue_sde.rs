//! Forward integration of the coupled queue-length / volatility SDE system.
//!
//! Queue: `dY = mu (phi_t - Y) dt + gamma_t Y dW^H`, driven by fractional
//! Gaussian noise from the [`crate::fbm`] module. Volatility: mean-reverting
//! `d gamma = kappa (gamma_bar - gamma) dt + sigma_gamma dW`, with an optional
//! square-root diffusion variant. Both states are truncated at zero after
//! every Euler step.
//!
//! Rate parameters are expressed per signal cycle (the paper's tabulated
//! magnitudes are only stable at that scale); `SimConfig::cycle_seconds` maps
//! wall-clock seconds to model time, so `dt = cycle_seconds` integrates one
//! step per cycle and smaller `dt` sub-steps for convergence studies. The
//! left-point (Ito) evaluation is used for the multiplicative fBm term.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fbm::sample_unit_fgn;
use crate::rng::{fgn_stream, stream, vol_stream};
use crate::seasonal::{evaluate_phi, SeasonalTrend};
use crate::timeseries::QueueSeries;

/// Queue-equation parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SdeParams {
    /// Mean-reversion speed of the queue (per cycle).
    pub mu: f64,
    /// Hurst exponent of the driving noise.
    pub hurst: f64,
    /// Seasonal amplitude in vehicles.
    pub mu_amp: f64,
    /// Seasonal baseline in vehicles.
    pub mu_base: f64,
    /// Initial queue length in vehicles.
    pub y0: f64,
}

impl SdeParams {
    pub fn validate(&self) -> Result<()> {
        if self.mu < 0.0 {
            return Err(Error::Argument(format!("mu must be >= 0, got {}", self.mu)));
        }
        if !(self.hurst > 0.0 && self.hurst < 1.0) {
            return Err(Error::Argument(format!(
                "hurst must lie in (0,1), got {}",
                self.hurst
            )));
        }
        if self.y0 < 0.0 {
            return Err(Error::Argument(format!("y0 must be >= 0, got {}", self.y0)));
        }
        Ok(())
    }
}

/// Volatility-equation parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct VolParams {
    /// Mean-reversion rate (per cycle).
    pub kappa: f64,
    /// Long-run mean volatility.
    pub gamma_bar: f64,
    /// Volatility of volatility.
    pub sigma_gamma: f64,
    /// Initial volatility level.
    pub gamma0: f64,
}

impl VolParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("kappa", self.kappa),
            ("gamma_bar", self.gamma_bar),
            ("sigma_gamma", self.sigma_gamma),
            ("gamma0", self.gamma0),
        ] {
            if v < 0.0 {
                return Err(Error::Argument(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Full model parameter set, serialized as one flat key-value document.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ModelParams {
    #[serde(flatten)]
    pub sde: SdeParams,
    #[serde(flatten)]
    pub vol: VolParams,
}

/// Diffusion form of the volatility equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VolScheme {
    /// Additive noise, exactly as the volatility equation is written.
    #[default]
    Additive,
    /// Square-root (CIR-style) diffusion for sensitivity studies.
    SquareRoot,
}

/// Integration grid and reproducibility controls.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SimConfig {
    /// Output/integration step in seconds.
    pub dt: f64,
    /// Total simulated duration in seconds.
    pub horizon: f64,
    pub seed: u64,
    /// Number of independent paths for ensemble runs.
    pub replicates: usize,
    /// Seconds per model time unit (one signal cycle).
    pub cycle_seconds: f64,
    /// Volatility diffusion form.
    pub vol_scheme: VolScheme,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 120.0,
            horizon: 7.0 * 86_400.0,
            seed: 0,
            replicates: 1,
            cycle_seconds: 120.0,
            vol_scheme: VolScheme::Additive,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::Argument(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.cycle_seconds > 0.0) {
            return Err(Error::Argument(format!(
                "cycle_seconds must be positive, got {}",
                self.cycle_seconds
            )));
        }
        if self.horizon < self.dt {
            return Err(Error::Argument(format!(
                "horizon {} is shorter than one step {}",
                self.horizon, self.dt
            )));
        }
        if self.replicates == 0 {
            return Err(Error::Argument("replicates must be >= 1".into()));
        }
        Ok(())
    }

    /// Number of output samples (t = 0, dt, ..., horizon - dt).
    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    /// Model time units per integration step.
    pub fn step_units(&self) -> f64 {
        self.dt / self.cycle_seconds
    }
}

/// Deterministic drift `mu (phi - y)` of the queue equation.
pub fn drift(y: f64, phi: f64, mu: f64) -> f64 {
    mu * (phi - y)
}

/// A simulated volatility path plus truncation bookkeeping.
#[derive(Debug, Clone)]
pub struct VolPath {
    pub values: Vec<f64>,
    /// Steps whose Euler update went negative and was clamped to zero.
    pub truncation_count: usize,
}

/// Simulates the volatility process on the configured grid (replicate 0 stream).
pub fn simulate_volatility(vol: &VolParams, cfg: &SimConfig) -> Result<VolPath> {
    vol.validate()?;
    cfg.validate()?;
    let n = cfg.steps();
    let mut rng = stream(cfg.seed, vol_stream(0));
    let shocks: Vec<f64> = (0..n.saturating_sub(1))
        .map(|_| rng.sample(StandardNormal))
        .collect();
    Ok(volatility_path(vol, cfg, &shocks))
}

fn volatility_path(vol: &VolParams, cfg: &SimConfig, shocks: &[f64]) -> VolPath {
    let h = cfg.step_units();
    let sqrt_h = h.sqrt();
    let mut values = Vec::with_capacity(shocks.len() + 1);
    let mut truncation_count = 0;
    let mut g = vol.gamma0;
    values.push(g);
    for z in shocks {
        let diffusion = match cfg.vol_scheme {
            VolScheme::Additive => vol.sigma_gamma,
            VolScheme::SquareRoot => vol.sigma_gamma * g.max(0.0).sqrt(),
        };
        g += vol.kappa * (vol.gamma_bar - g) * h + diffusion * sqrt_h * z;
        if g < 0.0 {
            g = 0.0;
            truncation_count += 1;
        }
        values.push(g);
    }
    VolPath {
        values,
        truncation_count,
    }
}

/// Pre-drawn noise for one replicate, reusable across parameter sets so a
/// stochastic objective becomes deterministic in the parameters (common
/// random numbers).
#[derive(Debug, Clone)]
pub struct NoiseBundle {
    /// Unit-variance fractional Gaussian noise, one value per transition.
    pub fgn_unit: Vec<f64>,
    /// Standard normal volatility shocks, one per transition.
    pub vol_shocks: Vec<f64>,
    /// Hurst exponent the fGn was synthesized for.
    pub hurst: f64,
}

/// Draws the noise for `transitions` Euler steps of replicate `replicate`.
pub fn draw_noise(hurst: f64, transitions: usize, seed: u64, replicate: u64) -> NoiseBundle {
    let fgn_unit = if transitions > 0 {
        let mut rng = stream(seed, fgn_stream(replicate));
        sample_unit_fgn(hurst, transitions, &mut rng).0
    } else {
        Vec::new()
    };
    let mut rng = stream(seed, vol_stream(replicate));
    let vol_shocks: Vec<f64> = (0..transitions).map(|_| rng.sample(StandardNormal)).collect();
    NoiseBundle {
        fgn_unit,
        vol_shocks,
        hurst,
    }
}

/// Integrates one queue path with caller-supplied noise.
pub fn simulate_queue_with_noise(
    params: &SdeParams,
    vol: &VolParams,
    trend: &SeasonalTrend,
    cfg: &SimConfig,
    noise: &NoiseBundle,
) -> Result<QueueSeries> {
    params.validate()?;
    vol.validate()?;
    cfg.validate()?;
    let n = cfg.steps();
    let transitions = n - 1;
    if noise.fgn_unit.len() < transitions || noise.vol_shocks.len() < transitions {
        return Err(Error::Argument(format!(
            "noise bundle holds {} transitions but {} are required",
            noise.fgn_unit.len().min(noise.vol_shocks.len()),
            transitions
        )));
    }
    if (noise.hurst - params.hurst).abs() > 1e-12 {
        return Err(Error::Argument(format!(
            "noise bundle was drawn for H = {}, parameters use H = {}",
            noise.hurst, params.hurst
        )));
    }

    let h = cfg.step_units();
    let noise_scale = h.powf(params.hurst);
    let sqrt_h = h.sqrt();

    let mut values = Vec::with_capacity(n);
    let mut y = params.y0;
    let mut g = vol.gamma0;
    values.push(y);
    for step in 0..transitions {
        let t = step as f64 * cfg.dt;
        let phi = evaluate_phi(trend, params, t);
        let dy = drift(y, phi, params.mu) * h + g * y * noise_scale * noise.fgn_unit[step];
        let y_next = y + dy;
        // Check before the zero-clamp: max() would silently absorb a NaN.
        if !y_next.is_finite() {
            return Err(Error::Numerics {
                step,
                context: format!("queue state diverged with params {params:?}, vol {vol:?}"),
            });
        }
        y = y_next.max(0.0);

        let diffusion = match cfg.vol_scheme {
            VolScheme::Additive => vol.sigma_gamma,
            VolScheme::SquareRoot => vol.sigma_gamma * g.max(0.0).sqrt(),
        };
        g = (g + vol.kappa * (vol.gamma_bar - g) * h + diffusion * sqrt_h * noise.vol_shocks[step]).max(0.0);
        values.push(y);
    }

    QueueSeries::new(0, cfg.dt, values)
}

/// Simulates a single queue path (replicate 0), deterministic in `cfg.seed`.
pub fn simulate_queue(
    params: &SdeParams,
    vol: &VolParams,
    trend: &SeasonalTrend,
    cfg: &SimConfig,
) -> Result<QueueSeries> {
    params.validate()?;
    cfg.validate()?;
    let noise = draw_noise(params.hurst, cfg.steps().saturating_sub(1), cfg.seed, 0);
    simulate_queue_with_noise(params, vol, trend, cfg, &noise)
}

/// Simulates `cfg.replicates` independent paths with derived per-replicate streams.
pub fn simulate_ensemble(
    params: &SdeParams,
    vol: &VolParams,
    trend: &SeasonalTrend,
    cfg: &SimConfig,
) -> Result<Vec<QueueSeries>> {
    params.validate()?;
    cfg.validate()?;
    let transitions = cfg.steps().saturating_sub(1);
    (0..cfg.replicates as u64)
        .map(|rep| {
            let noise = draw_noise(params.hurst, transitions, cfg.seed, rep);
            simulate_queue_with_noise(params, vol, trend, cfg, &noise)
        })
        .collect()
}
