//! Time-varying mean extraction: ACF periodicity detection and truncated
//! Fourier reconstruction.
//!
//! The trend is stored as a set of real harmonics `A cos(omega t + phase)`
//! plus a normalization mapping the reconstruction to zero mean and unit
//! variance on the fitting grid. The SDE uses
//! `phi(t) = mu_base + mu_amp * normalized(t)`, so the Table-style
//! initialization (`mu_amp` = empirical std, `mu_base` = empirical mean) is
//! dimensionally coherent. Evaluation extends periodically beyond the fitting
//! window because the harmonics are globally periodic.

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::queue_sde::SdeParams;
use crate::timeseries::{mean, moving_average, population_variance, QueueSeries};

/// One real harmonic of the seasonal reconstruction.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Harmonic {
    /// Amplitude (non-negative).
    #[serde(rename = "A")]
    pub amplitude: f64,
    /// Angular frequency in rad/s.
    pub omega: f64,
    /// Phase in radians.
    pub phase: f64,
}

/// Affine map taking the raw harmonic sum to zero mean, unit variance.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Normalization {
    pub scale: f64,
    pub shift: f64,
}

/// Harmonic decomposition of the time-varying mean.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeasonalTrend {
    pub harmonics: Vec<Harmonic>,
    /// Sample mean removed from the series before extraction.
    pub baseline: f64,
    pub normalization: Normalization,
    /// Common period of the retained harmonics, when they are commensurate.
    pub fundamental_period_s: Option<f64>,
}

impl SeasonalTrend {
    /// The trivial trend: no oscillatory component.
    pub fn zero() -> Self {
        Self {
            harmonics: Vec::new(),
            baseline: 0.0,
            normalization: Normalization { scale: 0.0, shift: 0.0 },
            fundamental_period_s: None,
        }
    }

    /// Builds a trend directly from harmonics with the analytic normalization
    /// (zero mean over a full period, variance `sum A_i^2 / 2`).
    pub fn from_harmonics(harmonics: Vec<Harmonic>) -> Self {
        let var: f64 = harmonics.iter().map(|h| h.amplitude * h.amplitude / 2.0).sum();
        let scale = var.sqrt();
        let fundamental = fundamental_period(&harmonics);
        Self {
            harmonics,
            baseline: 0.0,
            normalization: Normalization { scale, shift: 0.0 },
            fundamental_period_s: fundamental,
        }
    }

    /// Raw harmonic sum at time `t` (seconds since the fitting-grid origin).
    pub fn raw(&self, t: f64) -> f64 {
        self.harmonics
            .iter()
            .map(|h| h.amplitude * (h.omega * t + h.phase).cos())
            .sum()
    }

    /// Zero-mean unit-variance reconstruction; identically 0 for an empty trend.
    pub fn normalized(&self, t: f64) -> f64 {
        if self.normalization.scale <= 0.0 {
            return 0.0;
        }
        (self.raw(t) - self.normalization.shift) / self.normalization.scale
    }

    /// Canonical daily demand profile: a 24 h fundamental with 12 h and 8 h
    /// overtones, phased for a morning/evening double peak. Default trend of
    /// the synthetic generator.
    pub fn daily_profile() -> Self {
        let day = 2.0 * std::f64::consts::PI / 86_400.0;
        Self::from_harmonics(vec![
            Harmonic {
                amplitude: 1.0,
                omega: day,
                phase: -2.1,
            },
            Harmonic {
                amplitude: 0.45,
                omega: 2.0 * day,
                phase: 0.8,
            },
            Harmonic {
                amplitude: 0.25,
                omega: 3.0 * day,
                phase: 2.3,
            },
        ])
    }
}

fn fundamental_period(harmonics: &[Harmonic]) -> Option<f64> {
    let omega_min = harmonics
        .iter()
        .map(|h| h.omega)
        .fold(f64::INFINITY, f64::min);
    if !omega_min.is_finite() || omega_min <= 0.0 {
        return None;
    }
    for h in harmonics {
        let ratio = h.omega / omega_min;
        if (ratio - ratio.round()).abs() > 1e-9 {
            return None;
        }
    }
    Some(2.0 * std::f64::consts::PI / omega_min)
}

/// Autocorrelation function for lags `0..=max_lag`, computed via FFT.
pub fn autocorrelation(values: &[f64], max_lag: usize) -> Vec<f64> {
    let n = values.len();
    let m = mean(values);
    let padded_len = (n + max_lag + 1).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = values
        .iter()
        .map(|v| Complex::new(v - m, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(padded_len)
        .collect();

    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(padded_len).process(&mut buf);
    for c in &mut buf {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(padded_len).process(&mut buf);

    let c0 = buf[0].re;
    if c0 <= 0.0 {
        return vec![1.0; max_lag + 1];
    }
    (0..=max_lag).map(|l| buf[l].re / c0).collect()
}

/// Returns the period (seconds) of the highest ACF local maximum that clears
/// the 95% confidence band for whiteness.
///
/// Under whiteness each ACF ordinate is approximately N(0, 1/n); the band is
/// Sidak-adjusted across the scanned lags so the 95% confidence applies to
/// the detection decision as a whole, not per lag. Candidates are only
/// accepted after the ACF has dropped below the band at least once, so noise
/// wiggles on the lag-0 shoulder cannot masquerade as a periodicity.
pub fn dominant_period(series: &QueueSeries, max_lag: usize) -> Result<f64> {
    if series.len() < 2 * max_lag {
        return Err(Error::Argument(format!(
            "series length {} is shorter than 2 * max_lag = {}",
            series.len(),
            2 * max_lag
        )));
    }
    if max_lag < 2 {
        return Err(Error::Argument("max_lag must be >= 2".into()));
    }
    let acf = autocorrelation(&series.values, max_lag);
    let per_lag = 1.0 - 0.95f64.powf(1.0 / max_lag as f64);
    let threshold = normal_quantile(1.0 - per_lag / 2.0) / (series.len() as f64).sqrt();

    let mut descended = false;
    let mut best: Option<(usize, f64)> = None;
    for l in 1..max_lag {
        if acf[l] < threshold {
            descended = true;
            continue;
        }
        let is_local_max = descended && acf[l] >= acf[l - 1] && acf[l] >= acf[l + 1];
        if is_local_max {
            match best {
                Some((_, v)) if v >= acf[l] => {}
                _ => best = Some((l, acf[l])),
            }
        }
    }
    match best {
        Some((lag, _)) => Ok(lag as f64 * series.dt),
        None => Err(Error::NoDominantPeriod(format!(
            "no ACF local maximum above the 95% band within {max_lag} lags; a longer series may be needed"
        ))),
    }
}

/// Extracts a seasonal trend: the `n_harmonics` highest-magnitude FFT bins in
/// the two-octave band `[f_dom/4, 4 f_dom]` around the dominant frequency,
/// smoothed with a 5-sample moving-average response and normalized to zero
/// mean, unit variance on the fitting grid.
///
/// When fewer candidate bins exist in the band, all available are used. When
/// the ACF finds no dominant period the strongest FFT bin is used instead.
pub fn extract_trend(series: &QueueSeries, n_harmonics: usize) -> Result<SeasonalTrend> {
    let n = series.len();
    if n_harmonics == 0 {
        return Err(Error::Argument("n_harmonics must be >= 1".into()));
    }
    if n < 2 * n_harmonics {
        return Err(Error::Argument(format!(
            "series length {n} is too short for {n_harmonics} harmonics"
        )));
    }

    let baseline = series.mean();
    if population_variance(&series.values) <= 1e-12 * (1.0 + baseline * baseline) {
        let mut trend = SeasonalTrend::zero();
        trend.baseline = baseline;
        return Ok(trend);
    }

    let mut buf: Vec<Complex<f64>> = series
        .values
        .iter()
        .map(|v| Complex::new(v - baseline, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);

    // Positive-frequency bins, excluding DC and Nyquist.
    let half = (n - 1) / 2;
    let bin_freq = |k: usize| k as f64 / (n as f64 * series.dt);

    let f_dom = match dominant_period(series, n / 2) {
        Ok(period) => 1.0 / period,
        Err(Error::NoDominantPeriod(_)) => {
            let k_best = (1..=half)
                .max_by(|a, b| buf[*a].norm().total_cmp(&buf[*b].norm()))
                .unwrap_or(1);
            bin_freq(k_best)
        }
        Err(e) => return Err(e),
    };

    let band = (f_dom / 4.0, 4.0 * f_dom);
    let mut candidates: Vec<usize> = (1..=half)
        .filter(|k| {
            let f = bin_freq(*k);
            f >= band.0 && f <= band.1
        })
        .collect();
    candidates.sort_by(|a, b| buf[*b].norm().total_cmp(&buf[*a].norm()));
    candidates.truncate(n_harmonics);
    candidates.sort_unstable();

    let dt = series.dt;
    let mut harmonics = Vec::with_capacity(candidates.len());
    for &k in &candidates {
        let omega = 2.0 * std::f64::consts::PI * bin_freq(k);
        let mut amplitude = 2.0 * buf[k].norm() / n as f64;
        let mut phase = buf[k].im.atan2(buf[k].re);
        // Fold the 5-sample moving-average response into the amplitude.
        let g = (1.0 + 2.0 * (omega * dt).cos() + 2.0 * (2.0 * omega * dt).cos()) / 5.0;
        amplitude *= g.abs();
        if g < 0.0 {
            phase += std::f64::consts::PI;
        }
        if amplitude > 0.0 {
            harmonics.push(Harmonic { amplitude, omega, phase });
        }
    }

    // Normalize on the fitting grid.
    let trend_raw = SeasonalTrend {
        harmonics: harmonics.clone(),
        baseline,
        normalization: Normalization { scale: 1.0, shift: 0.0 },
        fundamental_period_s: None,
    };
    let recon: Vec<f64> = (0..n).map(|j| trend_raw.raw(j as f64 * dt)).collect();
    let shift = mean(&recon);
    let scale = population_variance(&recon).sqrt();
    if scale <= 0.0 {
        let mut trend = SeasonalTrend::zero();
        trend.baseline = baseline;
        return Ok(trend);
    }

    let fundamental = {
        let g = candidates.iter().fold(0usize, |acc, k| gcd(acc, *k));
        if g > 0 {
            Some(n as f64 * dt / g as f64)
        } else {
            None
        }
    };

    Ok(SeasonalTrend {
        harmonics,
        baseline,
        normalization: Normalization { scale, shift },
        fundamental_period_s: fundamental,
    })
}

fn gcd(a: usize, b: usize) -> usize {
    if a == 0 {
        b
    } else {
        gcd(b % a, a)
    }
}

/// Standard normal quantile (Acklam's rational approximation, |err| < 1.2e-9).
fn normal_quantile(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    let p_low = 0.02425;
    if p < p_low {
        let q = (-2.0 * p.ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - p_low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -normal_quantile(1.0 - p)
    }
}

/// Time-varying mean `phi(t) = mu_base + mu_amp * normalized(t)`.
pub fn evaluate_phi(trend: &SeasonalTrend, params: &SdeParams, t: f64) -> f64 {
    params.mu_base + params.mu_amp * trend.normalized(t)
}

/// Smooths a series with the shared 5-sample window (cleaning convention).
pub fn smooth5(series: &QueueSeries) -> QueueSeries {
    moving_average(series, 5).expect("window 5 is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn sine_series(n: usize, dt: f64, period_s: f64, noise: f64, seed: u64) -> QueueSeries {
        let mut rng = stream(seed, 0);
        let omega = 2.0 * std::f64::consts::PI / period_s;
        let values: Vec<f64> = (0..n)
            .map(|j| {
                let t = j as f64 * dt;
                let z: f64 = rng.sample(StandardNormal);
                10.0 + 3.0 * (omega * t).sin() + noise * z
            })
            .map(|v| v.max(0.0))
            .collect();
        QueueSeries::new(0, dt, values).unwrap()
    }

    fn correlation(a: &[f64], b: &[f64]) -> f64 {
        let ma = mean(a);
        let mb = mean(b);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma) * (x - ma)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb) * (y - mb)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn dominant_period_of_pure_sinusoid() {
        // Period 720 samples at dt = 120 s -> 86400 s.
        let s = sine_series(2880, 120.0, 86400.0, 0.0, 1);
        let period = dominant_period(&s, 1440).unwrap();
        assert_relative_eq!(period, 86400.0, max_relative = 1e-12);
    }

    #[test]
    fn dominant_period_survives_noise() {
        let s = sine_series(2880, 120.0, 86400.0, 0.3, 2);
        let period = dominant_period(&s, 1440).unwrap();
        assert_relative_eq!(period, 86400.0, max_relative = 0.01);
    }

    #[test]
    fn white_noise_has_no_dominant_period() {
        let mut rng = stream(12, 0);
        let values: Vec<f64> = (0..4096)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                10.0 + z
            })
            .collect();
        let s = QueueSeries::new(0, 120.0, values).unwrap();
        let err = dominant_period(&s, 64).unwrap_err();
        assert!(matches!(err, Error::NoDominantPeriod(_)));
    }

    #[test]
    fn single_tone_reconstruction_correlates() {
        let s = sine_series(2880, 120.0, 86400.0, 0.0, 3);
        let trend = extract_trend(&s, 12).unwrap();
        let recon: Vec<f64> = (0..s.len()).map(|j| trend.normalized(j as f64 * 120.0)).collect();
        let r = correlation(&recon, &s.values);
        assert!(r > 0.99, "correlation {r}");
        // Normalization contract on the fitting grid.
        assert!(mean(&recon).abs() < 1e-9);
        assert_relative_eq!(population_variance(&recon), 1.0, epsilon = 1e-6);
    }

    #[test]
    fn constant_series_gives_zero_trend() {
        let s = QueueSeries::new(0, 120.0, vec![6.5; 512]).unwrap();
        let trend = extract_trend(&s, 12).unwrap();
        assert!(trend.harmonics.is_empty());
        assert_eq!(trend.baseline, 6.5);
        for t in [0.0, 370.0, 86400.0] {
            assert_eq!(trend.normalized(t), 0.0);
        }
    }

    #[test]
    fn two_tone_input_retains_both_tones() {
        let n = 2880;
        let dt = 120.0;
        let w24 = 2.0 * std::f64::consts::PI / 86400.0;
        let w12 = 2.0 * std::f64::consts::PI / 43200.0;
        let values: Vec<f64> = (0..n)
            .map(|j| {
                let t = j as f64 * dt;
                20.0 + 4.0 * (w24 * t).cos() + 2.0 * (w12 * t).cos()
            })
            .collect();
        let s = QueueSeries::new(0, dt, values).unwrap();
        let trend = extract_trend(&s, 12).unwrap();
        let has = |w: f64| trend.harmonics.iter().any(|h| (h.omega - w).abs() < 1e-9);
        assert!(has(w24), "24 h tone missing");
        assert!(has(w12), "12 h tone missing");
    }

    #[test]
    fn evaluate_phi_baseline_cases() {
        let trend = SeasonalTrend::zero();
        let params = SdeParams {
            mu: 0.3,
            hurst: 0.7,
            mu_amp: 2.0,
            mu_base: 10.0,
            y0: 10.0,
        };
        assert_eq!(evaluate_phi(&trend, &params, 0.0), 10.0);
        assert_eq!(evaluate_phi(&trend, &params, 1e6), 10.0);

        let sine = SeasonalTrend::from_harmonics(vec![Harmonic {
            amplitude: 1.0,
            omega: 2.0 * std::f64::consts::PI / 86400.0,
            phase: 0.0,
        }]);
        let zero_amp = SdeParams { mu_amp: 0.0, ..params };
        assert_eq!(evaluate_phi(&sine, &zero_amp, 12345.0), 10.0);
    }

    #[test]
    fn evaluate_phi_peak_matches_closed_form() {
        // Unit sinusoid normalizes to sqrt(2) cos(omega t), so the peak of phi
        // is mu_base + mu_amp * sqrt(2), attained at t = 0.
        let sine = SeasonalTrend::from_harmonics(vec![Harmonic {
            amplitude: 1.0,
            omega: 2.0 * std::f64::consts::PI / 86400.0,
            phase: 0.0,
        }]);
        let params = SdeParams {
            mu: 0.3,
            hurst: 0.7,
            mu_amp: 2.0,
            mu_base: 10.0,
            y0: 10.0,
        };
        let peak = (0..86400)
            .step_by(60)
            .map(|t| evaluate_phi(&sine, &params, t as f64))
            .fold(f64::MIN, f64::max);
        assert_relative_eq!(peak, 10.0 + 2.0 * 2f64.sqrt(), epsilon = 1e-6);
    }

    #[test]
    fn phi_is_periodic_in_the_fundamental() {
        let s = sine_series(2880, 120.0, 86400.0, 0.0, 5);
        let trend = extract_trend(&s, 4).unwrap();
        let period = trend.fundamental_period_s.expect("commensurate harmonics");
        let params = SdeParams {
            mu: 0.3,
            hurst: 0.7,
            mu_amp: 3.0,
            mu_base: 12.0,
            y0: 12.0,
        };
        for t in [0.0, 311.0, 5000.0, 47777.0] {
            let a = evaluate_phi(&trend, &params, t);
            let b = evaluate_phi(&trend, &params, t + period);
            assert!((a - b).abs() < 1e-9, "phi({t}) = {a} vs phi(t+P) = {b}");
        }
    }

    #[test]
    fn second_pass_extraction_is_near_fixed_point() {
        let s = sine_series(2880, 120.0, 86400.0, 0.5, 6);
        let trend = extract_trend(&s, 12).unwrap();
        let recon: Vec<f64> = (0..s.len())
            .map(|j| 10.0 + 2.0 * trend.normalized(j as f64 * 120.0))
            .collect();
        let recon_series = QueueSeries::new(0, 120.0, recon.iter().map(|v| v.max(0.0)).collect()).unwrap();
        let trend2 = extract_trend(&recon_series, 12).unwrap();
        let a: Vec<f64> = (0..s.len()).map(|j| trend.normalized(j as f64 * 120.0)).collect();
        let b: Vec<f64> = (0..s.len()).map(|j| trend2.normalized(j as f64 * 120.0)).collect();
        let r = correlation(&a, &b);
        assert!(r > 0.99, "second-pass correlation {r}");
    }
}
