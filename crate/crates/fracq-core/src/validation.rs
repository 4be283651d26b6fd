//! Simulated-vs-observed comparison: smoothed Pearson correlation, empirical
//! distribution comparison, and PSD slope checks.
//!
//! The KS distance is computed from the raw empirical CDFs, not from the
//! histograms, so binning choices only affect the reported densities. Scatter
//! triples keep the time index so external plots can color by time.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{fit_slope, log_bin, welch, SlopeFit, DEFAULT_SLOPE_BAND};
use crate::timeseries::{mean, moving_average, population_variance, QueueSeries};

/// One scatter sample: elapsed time plus the two series values.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub t: f64,
    pub observed: f64,
    pub simulated: f64,
}

/// Density-normalized histograms on a shared grid plus the KS statistic.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PdfComparison {
    /// Bin edges, length bins + 1.
    pub bin_edges: Vec<f64>,
    pub observed_density: Vec<f64>,
    pub simulated_density: Vec<f64>,
    pub ks_distance: f64,
}

/// Comparison controls for [`build_report`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationConfig {
    /// Moving-average width applied before the correlation.
    pub smooth_window: usize,
    /// Histogram bin count; `None` uses Sturges' rule.
    pub bins: Option<usize>,
    /// Frequency band (Hz) of the PSD slope fits.
    pub slope_band: (f64, f64),
    /// Segment count of the averaged spectra.
    pub welch_segments: usize,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            smooth_window: 10,
            bins: None,
            slope_band: DEFAULT_SLOPE_BAND,
            welch_segments: 8,
        }
    }
}

/// Full comparison report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub pearson_r: f64,
    pub ks_distance: f64,
    pub slope_obs: f64,
    pub slope_sim: f64,
    pub scatter: Vec<ScatterPoint>,
}

/// Pearson correlation of the two series after moving-average smoothing.
pub fn pearson(observed: &QueueSeries, simulated: &QueueSeries, smooth_window: usize) -> Result<f64> {
    if observed.len() != simulated.len() {
        return Err(Error::Argument(format!(
            "length mismatch: observed {} vs simulated {}",
            observed.len(),
            simulated.len()
        )));
    }
    if observed.is_empty() {
        return Err(Error::Argument("cannot correlate empty series".into()));
    }
    let a = moving_average(observed, smooth_window)?;
    let b = moving_average(simulated, smooth_window)?;
    correlation(&a.values, &b.values)
}

fn correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    let ma = mean(a);
    let mb = mean(b);
    let va = population_variance(a);
    let vb = population_variance(b);
    if va <= 0.0 || vb <= 0.0 {
        return Err(Error::ZeroVariance(
            "correlation is undefined for a constant series".into(),
        ));
    }
    let cov: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - ma) * (y - mb))
        .sum::<f64>()
        / a.len() as f64;
    Ok(cov / (va * vb).sqrt())
}

/// Two-sample Kolmogorov-Smirnov distance from the empirical CDFs.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < xs.len() && j < ys.len() {
        let v = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= v {
            i += 1;
        }
        while j < ys.len() && ys[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// Density-normalized histograms on the union range plus the KS distance.
pub fn pdf_compare(
    observed: &QueueSeries,
    simulated: &QueueSeries,
    bins: usize,
) -> Result<PdfComparison> {
    if observed.is_empty() || simulated.is_empty() {
        return Err(Error::Argument("cannot compare empty series".into()));
    }
    if bins == 0 {
        return Err(Error::Argument("bin count must be >= 1".into()));
    }
    let lo = observed
        .values
        .iter()
        .chain(&simulated.values)
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let hi = observed
        .values
        .iter()
        .chain(&simulated.values)
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let width = span / bins as f64;

    let histogram = |values: &[f64]| -> Vec<f64> {
        let mut counts = vec![0usize; bins];
        for v in values {
            let idx = (((v - lo) / width) as usize).min(bins - 1);
            counts[idx] += 1;
        }
        counts
            .into_iter()
            .map(|c| c as f64 / (values.len() as f64 * width))
            .collect()
    };

    let bin_edges: Vec<f64> = (0..=bins).map(|i| lo + i as f64 * width).collect();
    Ok(PdfComparison {
        bin_edges,
        observed_density: histogram(&observed.values),
        simulated_density: histogram(&simulated.values),
        ks_distance: ks_distance(&observed.values, &simulated.values),
    })
}

/// Sturges' rule bin count.
pub fn sturges_bins(n: usize) -> usize {
    ((n as f64).log2().ceil() as usize + 1).max(1)
}

fn banded_slope(series: &QueueSeries, cfg: &ValidationConfig) -> Result<SlopeFit> {
    let est = log_bin(&welch(series, cfg.welch_segments, false)?, 10)?;
    // Clip the requested band to the spectrum's actual support.
    let f_min = est.frequencies.first().copied().unwrap_or(cfg.slope_band.0);
    let f_max = est.frequencies.last().copied().unwrap_or(cfg.slope_band.1);
    fit_slope(&est, cfg.slope_band.0.max(f_min), cfg.slope_band.1.min(f_max))
}

/// Assembles correlation, KS distance, PSD slopes, and the scatter triples.
pub fn build_report(
    observed: &QueueSeries,
    simulated: &QueueSeries,
    cfg: &ValidationConfig,
) -> Result<ValidationReport> {
    if observed.len() != simulated.len() {
        return Err(Error::Argument(format!(
            "length mismatch: observed {} vs simulated {}",
            observed.len(),
            simulated.len()
        )));
    }
    let pearson_r = pearson(observed, simulated, cfg.smooth_window)?;
    let bins = cfg.bins.unwrap_or_else(|| sturges_bins(observed.len()));
    let pdf = pdf_compare(observed, simulated, bins)?;
    let slope_obs = banded_slope(observed, cfg)?.slope;
    let slope_sim = banded_slope(simulated, cfg)?.slope;
    let scatter = observed
        .values
        .iter()
        .zip(&simulated.values)
        .enumerate()
        .map(|(i, (o, s))| ScatterPoint {
            t: observed.time_at(i),
            observed: *o,
            simulated: *s,
        })
        .collect();
    Ok(ValidationReport {
        pearson_r,
        ks_distance: pdf.ks_distance,
        slope_obs,
        slope_sim,
        scatter,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn noise_series(n: usize, seed: u64, stream_id: u64) -> QueueSeries {
        let mut rng = stream(seed, stream_id);
        let values: Vec<f64> = (0..n)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                10.0 + z
            })
            .collect();
        QueueSeries::new(0, 120.0, values).unwrap()
    }

    #[test]
    fn self_comparison_is_perfect() {
        let s = noise_series(500, 1, 0);
        assert_relative_eq!(pearson(&s, &s, 10).unwrap(), 1.0, epsilon = 1e-12);
        assert_eq!(ks_distance(&s.values, &s.values), 0.0);
    }

    #[test]
    fn negated_series_anticorrelates() {
        let s = noise_series(500, 2, 0);
        let neg = QueueSeries::new(0, 120.0, s.values.iter().map(|v| 25.0 - v).collect()).unwrap();
        assert_relative_eq!(pearson(&s, &neg, 1).unwrap(), -1.0, epsilon = 1e-12);
    }

    #[test]
    fn independent_noise_is_weakly_correlated() {
        let a = noise_series(10_000, 3, 0);
        let b = noise_series(10_000, 3, 1);
        // Window 1: smoothing would induce spurious short-range correlation
        // between independent sequences only through shared-window overlap.
        let r = pearson(&a, &b, 1).unwrap();
        assert!(r.abs() < 0.05, "r = {r}");
    }

    #[test]
    fn constant_series_has_undefined_correlation() {
        let c = QueueSeries::new(0, 120.0, vec![5.0; 100]).unwrap();
        let s = noise_series(100, 4, 0);
        assert!(matches!(pearson(&c, &s, 10), Err(Error::ZeroVariance(_))));
    }

    #[test]
    fn pearson_invariant_under_positive_affine_maps() {
        let a = noise_series(2000, 5, 0);
        let b = noise_series(2000, 5, 1);
        let r = pearson(&a, &b, 10).unwrap();
        let scaled = QueueSeries::new(0, 120.0, a.values.iter().map(|v| 3.0 * v + 7.0).collect()).unwrap();
        let r2 = pearson(&scaled, &b, 10).unwrap();
        assert_relative_eq!(r, r2, epsilon = 1e-12);
    }

    #[test]
    fn same_distribution_ks_is_small() {
        let n = 5000;
        let a = noise_series(n, 6, 0);
        let b = noise_series(n, 6, 1);
        let d = ks_distance(&a.values, &b.values);
        // 99% two-sample critical value for equal sizes.
        let crit = 1.63 * ((2 * n) as f64 / (n * n) as f64).sqrt();
        assert!(d < crit, "ks = {d}, critical {crit}");
    }

    #[test]
    fn disjoint_support_ks_is_one() {
        let a = QueueSeries::new(0, 120.0, vec![1.0, 2.0, 3.0]).unwrap();
        let b = QueueSeries::new(0, 120.0, vec![10.0, 11.0, 12.0]).unwrap();
        assert_eq!(ks_distance(&a.values, &b.values), 1.0);
    }

    #[test]
    fn ks_invariant_under_common_monotone_transform() {
        let a = noise_series(2000, 7, 0);
        let b = noise_series(2000, 7, 1);
        let d = ks_distance(&a.values, &b.values);
        let fa: Vec<f64> = a.values.iter().map(|v| v.exp()).collect();
        let fb: Vec<f64> = b.values.iter().map(|v| v.exp()).collect();
        assert_eq!(d, ks_distance(&fa, &fb));
    }

    #[test]
    fn shuffle_preserves_ks_exactly() {
        let a = noise_series(2000, 8, 0);
        let b = noise_series(2000, 8, 1);
        let d = ks_distance(&a.values, &b.values);
        let mut shuffled = b.values.clone();
        shuffled.reverse();
        shuffled.swap(0, 997);
        assert_eq!(d, ks_distance(&a.values, &shuffled));
    }

    #[test]
    fn pdf_compare_density_integrates_to_one() {
        let a = noise_series(4000, 9, 0);
        let b = noise_series(4000, 9, 1);
        let pdf = pdf_compare(&a, &b, 24).unwrap();
        let width = pdf.bin_edges[1] - pdf.bin_edges[0];
        let total_a: f64 = pdf.observed_density.iter().sum::<f64>() * width;
        let total_b: f64 = pdf.simulated_density.iter().sum::<f64>() * width;
        assert_relative_eq!(total_a, 1.0, epsilon = 1e-9);
        assert_relative_eq!(total_b, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn report_self_comparison() {
        let s = noise_series(4096, 10, 0);
        let report = build_report(&s, &s, &ValidationConfig::default()).unwrap();
        assert_relative_eq!(report.pearson_r, 1.0, epsilon = 1e-12);
        assert_eq!(report.ks_distance, 0.0);
        assert_eq!(report.slope_obs, report.slope_sim);
        assert_eq!(report.scatter.len(), s.len());
        assert_eq!(report.scatter[3].t, 360.0);
    }

    #[test]
    fn report_rejects_mismatched_lengths() {
        let a = noise_series(128, 11, 0);
        let b = noise_series(129, 11, 1);
        assert!(matches!(
            build_report(&a, &b, &ValidationConfig::default()),
            Err(Error::Argument(_))
        ));
    }
}
