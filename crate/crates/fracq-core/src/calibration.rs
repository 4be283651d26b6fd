//! Parameter fitting by RMSE minimization with a Nelder-Mead simplex.
//!
//! The stochastic simulation is made deterministic in the parameters by
//! common random numbers: the driving noise is drawn once per calibration run
//! from the configured seed and reused for every objective evaluation. The
//! simplex uses the canonical coefficients (reflection 1, expansion 2,
//! contraction 0.5, shrink 0.5) and the fminsearch-style initial simplex
//! (5% relative perturbation per coordinate, 0.00025 for zero coordinates)
//! and termination test (objective spread below `tol_fun` AND simplex
//! diameter below `tol_x`).
//!
//! Infeasible parameter vectors (negative rates) are handled by a graded
//! finite penalty so the simplex itself stays unconstrained.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::queue_sde::{
    draw_noise, simulate_queue_with_noise, NoiseBundle, SdeParams, SimConfig, VolParams, VolScheme,
};
use crate::seasonal::{extract_trend, SeasonalTrend};
use crate::timeseries::QueueSeries;

/// Penalty level returned for infeasible or diverging parameter vectors.
const PENALTY: f64 = 1e9;

/// Hurst grid scanned when `search_hurst` is set.
pub const HURST_GRID: [f64; 5] = [0.5, 0.6, 0.7, 0.8, 0.9];

/// Calibration controls.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationConfig {
    /// Starting parameter vector; `None` uses [`default_initials`].
    pub initial: Option<Vec<f64>>,
    /// Termination tolerance on the simplex objective spread.
    pub tol_fun: f64,
    /// Termination tolerance on the simplex diameter.
    pub tol_x: f64,
    pub max_iter: usize,
    /// Seed of the common random numbers.
    pub seed: u64,
    /// Number of noise replicates averaged inside the objective.
    pub replicates: usize,
    /// Hurst exponent of the driving noise (not part of the fitted vector).
    pub hurst: f64,
    /// Scan [`HURST_GRID`] and keep the best final RMSE.
    pub search_hurst: bool,
    /// Harmonics retained by the seasonal extraction.
    pub n_harmonics: usize,
    /// Seconds per model time unit.
    pub cycle_seconds: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            initial: None,
            tol_fun: 1e-4,
            tol_x: 1e-4,
            max_iter: 2000,
            seed: 0,
            replicates: 1,
            hurst: 0.7,
            search_hurst: false,
            n_harmonics: 12,
            cycle_seconds: 120.0,
        }
    }
}

/// Fitted parameter vector in canonical order.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FittedParams {
    pub mu: f64,
    pub gamma0: f64,
    pub mu_amp: f64,
    pub mu_base: f64,
    pub kappa: f64,
    pub sigma_gamma: f64,
    pub gamma_bar: f64,
}

impl FittedParams {
    pub fn from_slice(theta: &[f64]) -> Self {
        Self {
            mu: theta[0],
            gamma0: theta[1],
            mu_amp: theta[2],
            mu_base: theta[3],
            kappa: theta[4],
            sigma_gamma: theta[5],
            gamma_bar: theta[6],
        }
    }

    pub fn to_vec(self) -> Vec<f64> {
        vec![
            self.mu,
            self.gamma0,
            self.mu_amp,
            self.mu_base,
            self.kappa,
            self.sigma_gamma,
            self.gamma_bar,
        ]
    }
}

/// Calibration outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub params: FittedParams,
    /// Hurst exponent used by the winning run.
    pub hurst: f64,
    pub rmse: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Best objective after each iteration (non-increasing).
    pub trace: Vec<f64>,
}

/// Tabulated starting vector: fixed rate entries plus the series' empirical
/// moments for the seasonal scaling.
pub fn default_initials(series: &QueueSeries) -> Vec<f64> {
    vec![
        0.3,          // mu
        0.1,          // gamma0
        series.std(), // mu_amp (population std)
        series.mean(), // mu_base
        0.1,          // kappa
        0.05,         // sigma_gamma
        0.2,          // gamma_bar
    ]
}

/// Root-mean-square error between two equally long series.
pub fn rmse(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    if n == 0 {
        return 0.0;
    }
    let sum: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (sum / n as f64).sqrt()
}

fn feasibility_penalty(theta: &[f64]) -> Option<f64> {
    // mu, gamma0, kappa, sigma_gamma, gamma_bar must be non-negative.
    let violation: f64 = [theta[0], theta[1], theta[4], theta[5], theta[6]]
        .iter()
        .map(|v| (-v).max(0.0))
        .sum();
    if violation > 0.0 {
        Some(PENALTY * (1.0 + violation))
    } else {
        None
    }
}

fn objective_with_noise(
    theta: &[f64],
    data: &QueueSeries,
    trend: &SeasonalTrend,
    hurst: f64,
    cycle_seconds: f64,
    noises: &[NoiseBundle],
) -> f64 {
    if let Some(p) = feasibility_penalty(theta) {
        return p;
    }
    let fitted = FittedParams::from_slice(theta);
    let params = SdeParams {
        mu: fitted.mu,
        hurst,
        mu_amp: fitted.mu_amp,
        mu_base: fitted.mu_base,
        y0: data.values[0],
    };
    let vol = VolParams {
        kappa: fitted.kappa,
        gamma_bar: fitted.gamma_bar,
        sigma_gamma: fitted.sigma_gamma,
        gamma0: fitted.gamma0,
    };
    let cfg = SimConfig {
        dt: data.dt,
        horizon: data.len() as f64 * data.dt,
        seed: 0, // unused: noise is supplied
        replicates: 1,
        cycle_seconds,
        vol_scheme: VolScheme::Additive,
    };
    let mut total = 0.0;
    for noise in noises {
        match simulate_queue_with_noise(&params, &vol, trend, &cfg, noise) {
            Ok(sim) => total += rmse(&sim.values, &data.values),
            Err(_) => return PENALTY,
        }
    }
    total / noises.len() as f64
}

/// RMSE objective at `theta` under common random numbers keyed by `cfg.seed`.
///
/// The simulation shares the data's grid and initial condition; infeasible or
/// diverging vectors return a large finite penalty.
pub fn rmse_objective(
    theta: &[f64],
    data: &QueueSeries,
    trend: &SeasonalTrend,
    cfg: &CalibrationConfig,
) -> f64 {
    let noises = draw_noises(data, cfg, cfg.hurst);
    objective_with_noise(theta, data, trend, cfg.hurst, cfg.cycle_seconds, &noises)
}

fn draw_noises(data: &QueueSeries, cfg: &CalibrationConfig, hurst: f64) -> Vec<NoiseBundle> {
    let transitions = data.len().saturating_sub(1);
    (0..cfg.replicates.max(1) as u64)
        .map(|rep| draw_noise(hurst, transitions, cfg.seed, rep))
        .collect()
}

/// Result of a simplex run.
#[derive(Debug, Clone)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub fx: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Best objective after each iteration.
    pub trace: Vec<f64>,
}

/// Derivative-free simplex minimization.
///
/// Terminates when the objective spread across the simplex falls below
/// `tol_fun` and the simplex diameter falls below `tol_x`, or at `max_iter`.
pub fn nelder_mead(
    mut f: impl FnMut(&[f64]) -> f64,
    x0: &[f64],
    tol_fun: f64,
    tol_x: f64,
    max_iter: usize,
) -> NelderMeadResult {
    let dim = x0.len();
    assert!(dim >= 1, "need at least one coordinate");

    // fminsearch-style initial simplex.
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
    simplex.push(x0.to_vec());
    for i in 0..dim {
        let mut v = x0.to_vec();
        if v[i] != 0.0 {
            v[i] *= 1.05;
        } else {
            v[i] = 0.00025;
        }
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();

    let mut order: Vec<usize> = (0..=dim).collect();
    let sort = |order: &mut Vec<usize>, values: &[f64]| {
        // Stable: ties keep insertion order, so a constant objective returns x0.
        order.sort_by(|a, b| values[*a].total_cmp(&values[*b]));
    };
    sort(&mut order, &values);

    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;

    while iterations < max_iter {
        let best = order[0];
        let worst = order[dim];
        let second_worst = order[dim - 1];

        // Termination test on the current simplex.
        let spread = values[worst] - values[best];
        let diameter = simplex
            .iter()
            .map(|v| {
                v.iter()
                    .zip(&simplex[best])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if spread < tol_fun && diameter < tol_x {
            converged = true;
            break;
        }

        iterations += 1;

        // Centroid of all vertices but the worst.
        let mut centroid = vec![0.0; dim];
        for &idx in order.iter().take(dim) {
            for (c, x) in centroid.iter_mut().zip(&simplex[idx]) {
                *c += x;
            }
        }
        centroid.iter_mut().for_each(|c| *c /= dim as f64);

        let blend = |from: &[f64], coef: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(from)
                .map(|(c, x)| c + coef * (c - x))
                .collect()
        };

        let reflected = blend(&simplex[worst], 1.0);
        let f_reflected = f(&reflected);

        if f_reflected < values[best] {
            let expanded = blend(&simplex[worst], 2.0);
            let f_expanded = f(&expanded);
            if f_expanded < f_reflected {
                simplex[worst] = expanded;
                values[worst] = f_expanded;
            } else {
                simplex[worst] = reflected;
                values[worst] = f_reflected;
            }
        } else if f_reflected < values[second_worst] {
            simplex[worst] = reflected;
            values[worst] = f_reflected;
        } else {
            let shrink;
            if f_reflected < values[worst] {
                // Outside contraction.
                let contracted = blend(&simplex[worst], 0.5);
                let f_contracted = f(&contracted);
                if f_contracted <= f_reflected {
                    simplex[worst] = contracted;
                    values[worst] = f_contracted;
                    shrink = false;
                } else {
                    shrink = true;
                }
            } else {
                // Inside contraction.
                let contracted = blend(&simplex[worst], -0.5);
                let f_contracted = f(&contracted);
                if f_contracted < values[worst] {
                    simplex[worst] = contracted;
                    values[worst] = f_contracted;
                    shrink = false;
                } else {
                    shrink = true;
                }
            }
            if shrink {
                let best_point = simplex[order[0]].clone();
                for &idx in order.iter().skip(1) {
                    let shrunk: Vec<f64> = best_point
                        .iter()
                        .zip(&simplex[idx])
                        .map(|(b, x)| b + 0.5 * (x - b))
                        .collect();
                    values[idx] = f(&shrunk);
                    simplex[idx] = shrunk;
                }
            }
        }

        sort(&mut order, &values);
        trace.push(values[order[0]]);
    }

    let best = order[0];
    NelderMeadResult {
        x: simplex[best].clone(),
        fx: values[best],
        iterations,
        converged,
        trace,
    }
}

/// Full calibration: seasonal extraction, objective construction, simplex
/// minimization from the tabulated initials (optionally scanning the Hurst
/// grid), all reproducible under `cfg.seed`.
pub fn calibrate(data: &QueueSeries, cfg: &CalibrationConfig) -> Result<CalibrationResult> {
    if data.len() < 2 {
        return Err(Error::Argument(format!(
            "cannot calibrate against {} samples",
            data.len()
        )));
    }
    if !(cfg.tol_fun > 0.0 && cfg.tol_x > 0.0) {
        return Err(Error::Argument("tolerances must be positive".into()));
    }
    if cfg.max_iter == 0 {
        return Err(Error::Argument("max_iter must be >= 1".into()));
    }

    let trend = extract_trend(data, cfg.n_harmonics)?;
    let x0 = match &cfg.initial {
        Some(v) => {
            if v.len() != 7 {
                return Err(Error::Argument(format!(
                    "initial vector must have 7 entries, got {}",
                    v.len()
                )));
            }
            v.clone()
        }
        None => default_initials(data),
    };

    let hursts: Vec<f64> = if cfg.search_hurst {
        HURST_GRID.to_vec()
    } else {
        vec![cfg.hurst]
    };

    let mut best: Option<CalibrationResult> = None;
    for hurst in hursts {
        let noises = draw_noises(data, cfg, hurst);
        let nm = nelder_mead(
            |theta| objective_with_noise(theta, data, &trend, hurst, cfg.cycle_seconds, &noises),
            &x0,
            cfg.tol_fun,
            cfg.tol_x,
            cfg.max_iter,
        );
        let result = CalibrationResult {
            params: FittedParams::from_slice(&nm.x),
            hurst,
            rmse: nm.fx,
            iterations: nm.iterations,
            converged: nm.converged,
            trace: nm.trace,
        };
        match &best {
            Some(b) if b.rmse <= result.rmse => {}
            _ => best = Some(result),
        }
    }
    Ok(best.expect("at least one hurst value"))
}
