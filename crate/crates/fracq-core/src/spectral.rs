//! Power spectral density estimation and power-law characterization.
//!
//! The plain periodogram is one-sided and Parseval-consistent: summing
//! `power * df` recovers the series variance exactly. A segmented-averaging
//! mode (boxcar segments, 50% overlap) trades frequency resolution for
//! variance reduction; peak detection should run on an averaged spectrum,
//! since raw periodogram ordinates fluctuate by factors of several.
//!
//! Spectra are reported against log-binned averages, a least-squares log-log
//! slope over a frequency band, and period-domain views, so a -1 reference
//! slope can be compared directly.

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeseries::{mean, QueueSeries};

/// A one-sided PSD estimate, optionally with a log-binned view attached.
#[derive(Debug, Clone)]
pub struct SpectralEstimate {
    /// Frequencies in Hz, strictly increasing, positive, up to Nyquist.
    pub frequencies: Vec<f64>,
    /// PSD values, >= 0.
    pub power: Vec<f64>,
    /// Sampling interval of the source series in seconds.
    pub dt: f64,
    pub binned: Option<BinnedSpectrum>,
}

/// Log-binned average of a spectrum.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BinnedSpectrum {
    /// Geometric-mean frequency of each bin's members (Hz).
    pub frequencies: Vec<f64>,
    /// Arithmetic-mean power of each bin's members.
    pub power: Vec<f64>,
    /// Number of raw points averaged into each bin.
    pub counts: Vec<usize>,
    pub bins_per_decade: usize,
}

/// Result of a log-log slope fit.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Frequency band (Hz) the fit used.
    pub band: (f64, f64),
    /// Number of points in the fit.
    pub points: usize,
}

/// A detected periodic component.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Peak {
    pub period_s: f64,
    pub frequency_hz: f64,
    pub power: f64,
    /// Ratio of peak power to the local log-binned background.
    pub prominence: f64,
}

/// Default slope-fit band: 14 days down to 30 minutes, in Hz.
pub const DEFAULT_SLOPE_BAND: (f64, f64) = (1.0 / (14.0 * 86_400.0), 1.0 / 1800.0);

/// Minimum ratio of peak power to local background for [`detect_peaks`].
pub const PEAK_PROMINENCE: f64 = 5.0;

/// Mean-removed (optionally linearly detrended) one-sided periodogram.
pub fn periodogram(series: &QueueSeries, detrend: bool) -> Result<SpectralEstimate> {
    if series.len() < 16 {
        return Err(Error::Argument(format!(
            "series of length {} is too short for spectral estimation (need >= 16)",
            series.len()
        )));
    }
    let prepared = prepare(&series.values, detrend);
    Ok(raw_periodogram(&prepared, series.dt))
}

/// Segment-averaged periodogram: `segments` boxcar segments with 50% overlap.
///
/// Averaging reduces estimator variance by roughly the segment count, at the
/// cost of low-frequency resolution.
pub fn welch(series: &QueueSeries, segments: usize, detrend: bool) -> Result<SpectralEstimate> {
    if segments < 2 {
        return Err(Error::Argument("need at least 2 segments".into()));
    }
    let n = series.len();
    // 50% overlap: n = len * (segments + 1) / 2.
    let mut seg_len = 2 * n / (segments + 1);
    seg_len -= seg_len % 2;
    if seg_len < 16 {
        return Err(Error::Argument(format!(
            "series of length {n} is too short for {segments} segments"
        )));
    }
    let hop = seg_len / 2;

    let mut acc: Option<SpectralEstimate> = None;
    let mut count = 0.0;
    let mut start = 0;
    while start + seg_len <= n {
        let prepared = prepare(&series.values[start..start + seg_len], detrend);
        let est = raw_periodogram(&prepared, series.dt);
        match &mut acc {
            None => acc = Some(est),
            Some(a) => {
                for (p, q) in a.power.iter_mut().zip(&est.power) {
                    *p += q;
                }
            }
        }
        count += 1.0;
        start += hop;
    }
    let mut est = acc.expect("at least one segment");
    for p in &mut est.power {
        *p /= count;
    }
    Ok(est)
}

fn prepare(values: &[f64], detrend: bool) -> Vec<f64> {
    let n = values.len();
    let m = mean(values);
    if !detrend {
        return values.iter().map(|v| v - m).collect();
    }
    // Least-squares line over the sample index.
    let tm = (n as f64 - 1.0) / 2.0;
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, v) in values.iter().enumerate() {
        let x = i as f64 - tm;
        num += x * (v - m);
        den += x * x;
    }
    let slope = if den > 0.0 { num / den } else { 0.0 };
    values
        .iter()
        .enumerate()
        .map(|(i, v)| v - m - slope * (i as f64 - tm))
        .collect()
}

fn raw_periodogram(values: &[f64], dt: f64) -> SpectralEstimate {
    let n = values.len();
    let mut buf: Vec<Complex<f64>> = values.iter().map(|v| Complex::new(*v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);

    let half = n / 2;
    let norm = dt / n as f64;
    let mut frequencies = Vec::with_capacity(half);
    let mut power = Vec::with_capacity(half);
    for k in 1..=half {
        frequencies.push(k as f64 / (n as f64 * dt));
        let two_sided = buf[k].norm_sqr() * norm;
        // The Nyquist bin of an even-length transform has no mirror image.
        let p = if n % 2 == 0 && k == half {
            two_sided
        } else {
            2.0 * two_sided
        };
        power.push(p);
    }
    SpectralEstimate {
        frequencies,
        power,
        dt,
        binned: None,
    }
}

/// Averages the spectrum over geometrically spaced frequency bins.
///
/// Bins partition the covered support, so total power (weighted by member
/// count) is conserved. Empty bins are dropped; each bin is centered at the
/// geometric mean of its member frequencies.
pub fn log_bin(estimate: &SpectralEstimate, bins_per_decade: usize) -> Result<SpectralEstimate> {
    if estimate.frequencies.is_empty() {
        return Err(Error::Argument("cannot bin an empty spectrum".into()));
    }
    if bins_per_decade == 0 {
        return Err(Error::Argument("bins_per_decade must be >= 1".into()));
    }
    let f0 = estimate.frequencies[0];
    let bpd = bins_per_decade as f64;

    let mut sums: Vec<(f64, f64, usize)> = Vec::new(); // (sum log f, sum power, count)
    for (f, p) in estimate.frequencies.iter().zip(&estimate.power) {
        let idx = ((f / f0).log10() * bpd + 1e-12).floor().max(0.0) as usize;
        if sums.len() <= idx {
            sums.resize(idx + 1, (0.0, 0.0, 0));
        }
        let slot = &mut sums[idx];
        slot.0 += f.ln();
        slot.1 += p;
        slot.2 += 1;
    }

    let mut binned = BinnedSpectrum {
        frequencies: Vec::new(),
        power: Vec::new(),
        counts: Vec::new(),
        bins_per_decade,
    };
    for (lf, p, c) in sums {
        if c == 0 {
            continue;
        }
        binned.frequencies.push((lf / c as f64).exp());
        binned.power.push(p / c as f64);
        binned.counts.push(c);
    }

    Ok(SpectralEstimate {
        frequencies: estimate.frequencies.clone(),
        power: estimate.power.clone(),
        dt: estimate.dt,
        binned: Some(binned),
    })
}

/// Ordinary least squares on `(log10 f, log10 P)` over `[f_lo, f_hi]`.
///
/// Operates on the binned view when present, otherwise on raw points. Points
/// with zero power are skipped (they carry no log-domain information).
pub fn fit_slope(estimate: &SpectralEstimate, f_lo: f64, f_hi: f64) -> Result<SlopeFit> {
    let (freqs, powers): (&[f64], &[f64]) = match &estimate.binned {
        Some(b) => (&b.frequencies, &b.power),
        None => (&estimate.frequencies, &estimate.power),
    };
    let pts: Vec<(f64, f64)> = freqs
        .iter()
        .zip(powers)
        .filter(|(f, p)| **f >= f_lo && **f <= f_hi && **p > 0.0)
        .map(|(f, p)| (f.log10(), p.log10()))
        .collect();
    if pts.len() < 5 {
        return Err(Error::Argument(format!(
            "slope fit needs >= 5 points in [{f_lo:.3e}, {f_hi:.3e}] Hz, found {}",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|(x, _)| x).sum::<f64>() / n;
    let my = pts.iter().map(|(_, y)| y).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in &pts {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let slope = sxy / sxx;
    Ok(SlopeFit {
        slope,
        intercept: my - slope * mx,
        band: (f_lo, f_hi),
        points: pts.len(),
    })
}

/// Finds local maxima exceeding [`PEAK_PROMINENCE`] times the local
/// log-binned background, within a period band `(period_lo_s, period_hi_s)`.
/// Peaks are reported as periods, sorted by descending prominence.
pub fn detect_peaks(estimate: &SpectralEstimate, period_band: (f64, f64)) -> Vec<Peak> {
    let (period_lo, period_hi) = period_band;
    let f_band = (1.0 / period_hi.max(f64::MIN_POSITIVE), 1.0 / period_lo.max(f64::MIN_POSITIVE));

    let owned;
    let binned = match &estimate.binned {
        Some(b) => b,
        None => {
            owned = match log_bin(estimate, 10) {
                Ok(e) => e,
                Err(_) => return Vec::new(),
            };
            owned.binned.as_ref().expect("log_bin fills the binned view")
        }
    };

    let mut peaks = Vec::new();
    let fs = &estimate.frequencies;
    let ps = &estimate.power;
    for i in 1..fs.len().saturating_sub(1) {
        if fs[i] < f_band.0 || fs[i] > f_band.1 {
            continue;
        }
        if !(ps[i] > ps[i - 1] && ps[i] >= ps[i + 1]) {
            continue;
        }
        // Leave out the bin containing the candidate: in sparse low-frequency
        // bins the peak would otherwise dominate its own background.
        let background = interp_loglog_excluding(binned, fs[i]);
        if background <= 0.0 {
            continue;
        }
        let prominence = ps[i] / background;
        if prominence >= PEAK_PROMINENCE {
            peaks.push(Peak {
                period_s: 1.0 / fs[i],
                frequency_hz: fs[i],
                power: ps[i],
                prominence,
            });
        }
    }
    peaks.sort_by(|a, b| b.prominence.total_cmp(&a.prominence));
    peaks
}

/// Log-log interpolation of the binned background at frequency `f`, skipping
/// the bin whose span contains `f` itself.
fn interp_loglog_excluding(binned: &BinnedSpectrum, f: f64) -> f64 {
    let ratio = 10f64.powf(1.0 / binned.bins_per_decade as f64);
    let half_width = ratio.sqrt();
    let positive: Vec<(f64, f64)> = binned
        .frequencies
        .iter()
        .zip(&binned.power)
        .filter(|(bf, p)| {
            // Drop zero-power bins and the bin centered within half a bin
            // width of the candidate.
            **p > 0.0 && (**bf < f / half_width || **bf > f * half_width)
        })
        .map(|(f, p)| (*f, *p))
        .collect();
    if positive.is_empty() {
        return 0.0;
    }
    if f <= positive[0].0 {
        return positive[0].1;
    }
    if f >= positive[positive.len() - 1].0 {
        return positive[positive.len() - 1].1;
    }
    let idx = positive.partition_point(|(pf, _)| *pf < f);
    let (f1, p1) = positive[idx - 1];
    let (f2, p2) = positive[idx];
    let w = (f.ln() - f1.ln()) / (f2.ln() - f1.ln());
    (p1.ln() + w * (p2.ln() - p1.ln())).exp()
}

/// Transforms a spectrum into `(period_s, power)` pairs with periods ascending.
pub fn to_period_domain(estimate: &SpectralEstimate) -> Vec<(f64, f64)> {
    estimate
        .frequencies
        .iter()
        .zip(&estimate.power)
        .rev()
        .map(|(f, p)| (1.0 / f, *p))
        .collect()
}
