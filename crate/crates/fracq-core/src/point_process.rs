//! Micro-scale arrival model: vehicles as a pulse train, geometric Brownian
//! interarrival dynamics, the Ito-transformed instantaneous flow, and
//! cycle-level accumulation.
//!
//! Interarrival times follow `d tau_k = mu tau_k dk + sigma tau_k dW_k` with
//! the Wiener process indexed by vehicle number. The instantaneous flow
//! `q_k = 1 / tau_k` then satisfies `dq_k = (sigma^2 - mu) q_k dk - sigma q_k dW_k`
//! by the stochastic chain rule; [`ito_flow_transform`] exposes exactly that
//! coefficient map. Interarrivals are integrated with the exact log-space
//! solution rather than an Euler scheme, so every simulated tau is positive
//! and the transform can be validated without discretization bias.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::stream;

/// A marked point process of vehicle arrivals.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalProcess {
    /// Strictly increasing event times in seconds.
    pub event_times: Vec<f64>,
    /// Vehicles contributed per event; 1 for single vehicles, >1 for platoons.
    pub amplitudes: Vec<f64>,
}

impl ArrivalProcess {
    pub fn new(event_times: Vec<f64>, amplitudes: Vec<f64>) -> Result<Self> {
        if event_times.len() != amplitudes.len() {
            return Err(Error::Argument(format!(
                "{} event times but {} amplitudes",
                event_times.len(),
                amplitudes.len()
            )));
        }
        for w in event_times.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::Argument(format!(
                    "event times must be strictly increasing ({} after {})",
                    w[1], w[0]
                )));
            }
        }
        if let Some(a) = amplitudes.iter().find(|a| **a < 1.0) {
            return Err(Error::Argument(format!("amplitudes must be >= 1, got {a}")));
        }
        Ok(Self {
            event_times,
            amplitudes,
        })
    }

    /// Builds a unit-amplitude process from interarrival times, starting at t = 0.
    pub fn from_interarrivals(taus: &[f64]) -> Result<Self> {
        let mut times = Vec::with_capacity(taus.len());
        let mut t = 0.0;
        for tau in taus {
            times.push(t);
            t += tau;
        }
        Self::new(times, vec![1.0; taus.len()])
    }
}

/// Parameters of the interarrival SDE (per event index).
#[derive(Debug, Clone, Copy)]
pub struct InterarrivalParams {
    /// Drift per event index.
    pub mu_tau: f64,
    /// Diffusion per event index.
    pub sigma_tau: f64,
    /// Initial interarrival time in seconds.
    pub tau0: f64,
}

impl InterarrivalParams {
    fn validate(&self) -> Result<()> {
        if self.sigma_tau < 0.0 {
            return Err(Error::Argument(format!(
                "sigma_tau must be >= 0, got {}",
                self.sigma_tau
            )));
        }
        if !(self.tau0 > 0.0) {
            return Err(Error::Argument(format!("tau0 must be > 0, got {}", self.tau0)));
        }
        Ok(())
    }
}

/// Coefficients of the instantaneous-flow SDE `dq = drift_q q dk + diffusion_q q dW`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowParams {
    pub drift_q: f64,
    /// Signed; the transform reverses the diffusion sign.
    pub diffusion_q: f64,
}

/// Simulates `n` interarrival times via the exact GBM solution
/// `tau_k = tau0 * exp((mu - sigma^2/2) k + sigma W_k)`, `k = 0..n`.
///
/// Every tau is strictly positive and the output is deterministic in `seed`.
pub fn simulate_interarrivals(params: &InterarrivalParams, n: usize, seed: u64) -> Result<Vec<f64>> {
    params.validate()?;
    if n == 0 {
        return Err(Error::Argument("need at least one event".into()));
    }
    let mut rng = stream(seed, 0);
    simulate_interarrivals_with(params, n, &mut rng)
}

pub(crate) fn simulate_interarrivals_with<R: Rng>(
    params: &InterarrivalParams,
    n: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let step_drift = params.mu_tau - 0.5 * params.sigma_tau * params.sigma_tau;
    let mut log_tau = params.tau0.ln();
    let mut taus = Vec::with_capacity(n);
    taus.push(params.tau0);
    for _ in 1..n {
        let z: f64 = rng.sample(StandardNormal);
        log_tau += step_drift + params.sigma_tau * z;
        // The exact solution is strictly positive; keep that through f64
        // underflow as well.
        taus.push(log_tau.exp().max(f64::MIN_POSITIVE));
    }
    Ok(taus)
}

/// Maps interarrival SDE coefficients to instantaneous-flow coefficients via
/// the stochastic chain rule for `q = 1 / tau`.
pub fn ito_flow_transform(params: &InterarrivalParams) -> FlowParams {
    FlowParams {
        drift_q: params.sigma_tau * params.sigma_tau - params.mu_tau,
        diffusion_q: -params.sigma_tau,
    }
}

/// Pathwise instantaneous flow `q_k = 1 / tau_k`.
pub fn instantaneous_flow(taus: &[f64]) -> Vec<f64> {
    taus.iter().map(|tau| 1.0 / tau).collect()
}

/// Accumulates event values over half-open cycles `[(n-1)T, nT)`.
///
/// The half-open partition assigns every event to exactly one cycle, so the
/// total is conserved. Events before t = 0 are rejected.
pub fn accumulate_cycles(events: &[(f64, f64)], cycle_len: f64) -> Result<Vec<f64>> {
    if !(cycle_len > 0.0) {
        return Err(Error::Argument(format!(
            "cycle length must be positive, got {cycle_len}"
        )));
    }
    if events.is_empty() {
        return Ok(Vec::new());
    }
    for w in events.windows(2) {
        if w[1].0 < w[0].0 {
            return Err(Error::Argument("event times must be sorted".into()));
        }
    }
    if events[0].0 < 0.0 {
        return Err(Error::Argument(format!(
            "event time {} is negative",
            events[0].0
        )));
    }
    let last = events[events.len() - 1].0;
    let n_cycles = (last / cycle_len).floor() as usize + 1;
    let mut totals = vec![0.0; n_cycles];
    for (t, q) in events {
        let idx = ((t / cycle_len).floor() as usize).min(n_cycles - 1);
        totals[idx] += q;
    }
    Ok(totals)
}

/// Writes `(t, tau, q)` triples with header `t,tau,q`.
pub fn write_events_csv(path: &Path, taus: &[f64]) -> Result<()> {
    let proc = ArrivalProcess::from_interarrivals(taus)?;
    let qs = instantaneous_flow(taus);
    let mut out = String::with_capacity(taus.len() * 24 + 8);
    out.push_str("t,tau,q\n");
    for i in 0..taus.len() {
        let _ = writeln!(out, "{},{},{}", proc.event_times[i], taus[i], qs[i]);
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn noiseless_driftless_interarrivals_are_constant() {
        let p = InterarrivalParams {
            mu_tau: 0.0,
            sigma_tau: 0.0,
            tau0: 2.5,
        };
        let taus = simulate_interarrivals(&p, 50, 1).unwrap();
        assert!(taus.iter().all(|t| (t - 2.5).abs() < 1e-12));
    }

    #[test]
    fn deterministic_exponential_growth() {
        let p = InterarrivalParams {
            mu_tau: 0.01,
            sigma_tau: 0.0,
            tau0: 2.0,
        };
        let taus = simulate_interarrivals(&p, 101, 1).unwrap();
        assert_relative_eq!(taus[100], 2.0 * 1f64.exp(), max_relative = 1e-10);
    }

    #[test]
    fn log_increment_mean_matches_gbm_law() {
        // E[log(tau_{k+1}/tau_k)] = mu - sigma^2/2 = -0.005 for mu = 0, sigma = 0.1.
        let p = InterarrivalParams {
            mu_tau: 0.0,
            sigma_tau: 0.1,
            tau0: 1.0,
        };
        let n = 100_000;
        let taus = simulate_interarrivals(&p, n, 42).unwrap();
        let incs: Vec<f64> = taus.windows(2).map(|w| (w[1] / w[0]).ln()).collect();
        let mean = incs.iter().sum::<f64>() / incs.len() as f64;
        let se = p.sigma_tau / (incs.len() as f64).sqrt();
        assert!(
            (mean - (-0.005)).abs() < 3.0 * se,
            "mean {mean} vs -0.005 (se {se})"
        );
        // Per-index variance of the log increment is sigma^2.
        let var = incs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / incs.len() as f64;
        assert_relative_eq!(var, 0.01, max_relative = 0.05);
    }

    #[test]
    fn log_increments_pass_moment_normality_test() {
        // Jarque-Bera on 1e5 log increments at the 1% level (chi2_2 cutoff 9.21).
        let p = InterarrivalParams {
            mu_tau: 0.002,
            sigma_tau: 0.05,
            tau0: 2.0,
        };
        let n = 100_001;
        let taus = simulate_interarrivals(&p, n, 7).unwrap();
        let incs: Vec<f64> = taus.windows(2).map(|w| (w[1] / w[0]).ln()).collect();
        let m = incs.iter().sum::<f64>() / incs.len() as f64;
        let nf = incs.len() as f64;
        let m2 = incs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / nf;
        let m3 = incs.iter().map(|x| (x - m).powi(3)).sum::<f64>() / nf;
        let m4 = incs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / nf;
        let skew = m3 / m2.powf(1.5);
        let kurt = m4 / (m2 * m2) - 3.0;
        let jb = nf / 6.0 * (skew * skew + kurt * kurt / 4.0);
        assert!(jb < 9.21, "Jarque-Bera statistic {jb}");
    }

    #[test]
    fn all_interarrivals_positive() {
        let p = InterarrivalParams {
            mu_tau: -0.05,
            sigma_tau: 0.5,
            tau0: 0.01,
        };
        let taus = simulate_interarrivals(&p, 10_000, 3).unwrap();
        assert!(taus.iter().all(|t| *t > 0.0));
    }

    #[test]
    fn flow_transform_examples() {
        let f = ito_flow_transform(&InterarrivalParams {
            mu_tau: 0.0,
            sigma_tau: 0.1,
            tau0: 1.0,
        });
        assert_relative_eq!(f.drift_q, 0.01, epsilon = 1e-15);
        assert_relative_eq!(f.diffusion_q, -0.1, epsilon = 1e-15);

        let f = ito_flow_transform(&InterarrivalParams {
            mu_tau: 0.0,
            sigma_tau: 0.0,
            tau0: 1.0,
        });
        assert_eq!(f, FlowParams { drift_q: 0.0, diffusion_q: 0.0 });

        // sigma^2 = mu cancels the drift.
        let f = ito_flow_transform(&InterarrivalParams {
            mu_tau: 0.04,
            sigma_tau: 0.2,
            tau0: 1.0,
        });
        assert!(f.drift_q.abs() < 1e-15);
        assert_relative_eq!(f.diffusion_q, -0.2, epsilon = 1e-15);
    }

    #[test]
    fn cycle_accumulation_counts() {
        let events = vec![(10.0, 1.0), (50.0, 1.0), (130.0, 1.0)];
        let x = accumulate_cycles(&events, 120.0).unwrap();
        assert_eq!(x, vec![2.0, 1.0]);
    }

    #[test]
    fn single_cycle_degenerate_partition() {
        let events = vec![(1.0, 2.0), (2.0, 0.5), (3.0, 1.25)];
        let x = accumulate_cycles(&events, 100.0).unwrap();
        assert_eq!(x, vec![3.75]);
    }

    #[test]
    fn boundary_event_goes_to_right_cycle() {
        // t = T belongs to the second cycle under the half-open partition.
        let events = vec![(0.0, 1.0), (120.0, 1.0)];
        let x = accumulate_cycles(&events, 120.0).unwrap();
        assert_eq!(x, vec![1.0, 1.0]);
    }

    #[test]
    fn accumulation_conserves_total_volume() {
        // mu = sigma^2/2 keeps the log stationary over 1e4 events.
        let p = InterarrivalParams {
            mu_tau: 0.00125,
            sigma_tau: 0.05,
            tau0: 2.0,
        };
        let taus = simulate_interarrivals(&p, 10_000, 9).unwrap();
        let proc = ArrivalProcess::from_interarrivals(&taus).unwrap();
        let qs = instantaneous_flow(&taus);
        let events: Vec<(f64, f64)> = proc.event_times.iter().cloned().zip(qs.iter().cloned()).collect();
        let x = accumulate_cycles(&events, 120.0).unwrap();
        let direct: f64 = qs.iter().sum();
        let binned: f64 = x.iter().sum();
        assert_relative_eq!(binned, direct, max_relative = 1e-9);
    }

    #[test]
    fn empty_input_gives_empty_output() {
        let x = accumulate_cycles(&[], 120.0).unwrap();
        assert!(x.is_empty());
    }

    #[test]
    fn events_csv_has_expected_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.csv");
        write_events_csv(&path, &[2.0, 2.5, 1.5]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("t,tau,q\n"));
        assert_eq!(text.lines().count(), 4);
    }
}
