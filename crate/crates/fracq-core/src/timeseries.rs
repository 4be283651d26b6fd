//! Queue-length time series: ingestion, cleaning, aggregation, resampling.
//!
//! All other modules consume [`QueueSeries`]. A series is uniformly sampled;
//! gaps found during CSV ingestion are interpolated and flagged so FFT-based
//! consumers always see a regular grid.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// A uniformly sampled queue-length time series.
///
/// `cleaned_mask[i]` is true when `values[i]` was synthesized (gap fill during
/// ingestion or outlier replacement during cleaning) rather than observed.
#[derive(Debug, Clone, PartialEq)]
pub struct QueueSeries {
    /// UTC epoch seconds of the first sample.
    pub start_time: i64,
    /// Sampling interval in seconds.
    pub dt: f64,
    /// Queue lengths in vehicles, all non-negative.
    pub values: Vec<f64>,
    /// Per-sample flag marking values replaced during cleaning or gap filling.
    pub cleaned_mask: Vec<bool>,
}

impl QueueSeries {
    /// Builds a series from raw values, enforcing the type invariants.
    pub fn new(start_time: i64, dt: f64, values: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::Argument(format!("dt must be positive, got {dt}")));
        }
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() || *v < 0.0 {
                return Err(Error::Format(format!(
                    "queue length at index {i} is {v}; values must be finite and non-negative"
                )));
            }
        }
        let mask = vec![false; values.len()];
        Ok(Self {
            start_time,
            dt,
            values,
            cleaned_mask: mask,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Elapsed seconds of sample `i` relative to the series start.
    pub fn time_at(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }

    pub fn mean(&self) -> f64 {
        mean(&self.values)
    }

    /// Population standard deviation.
    pub fn std(&self) -> f64 {
        population_variance(&self.values).sqrt()
    }
}

/// Outlier-cleaning parameters.
#[derive(Debug, Clone)]
pub struct CleaningConfig {
    /// Queue lengths above this threshold are deemed unrealistic.
    pub max_queue: f64,
    /// Width of the centered moving window used for replacement; odd, >= 3.
    pub window: usize,
}

impl Default for CleaningConfig {
    fn default() -> Self {
        Self {
            max_queue: 40.0,
            window: 5,
        }
    }
}

impl CleaningConfig {
    fn validate(&self) -> Result<()> {
        if !(self.max_queue > 0.0) {
            return Err(Error::Argument(format!(
                "max_queue must be positive, got {}",
                self.max_queue
            )));
        }
        if self.window < 3 || self.window % 2 == 0 {
            return Err(Error::Argument(format!(
                "cleaning window must be odd and >= 3, got {}",
                self.window
            )));
        }
        Ok(())
    }
}

/// What [`clean`] did to the series.
#[derive(Debug, Clone, Default)]
pub struct CleanReport {
    /// Indices whose values were replaced in this pass.
    pub replaced: Vec<usize>,
    /// Replacements that fell back to the series-wide mean because the whole
    /// window was invalid.
    pub window_fallbacks: usize,
    pub warnings: Vec<String>,
}

/// Which CSV columns hold the timestamp and the queue length.
#[derive(Debug, Clone)]
pub struct ColumnSpec {
    pub timestamp: String,
    pub value: String,
}

impl Default for ColumnSpec {
    fn default() -> Self {
        Self {
            timestamp: "timestamp".into(),
            value: "queue_len".into(),
        }
    }
}

/// Loads a series from CSV (`timestamp,queue_len` by default).
///
/// The sampling interval is the median timestamp gap. Missing rows are filled
/// by linear interpolation and flagged in `cleaned_mask`. Gaps that are not an
/// integer multiple of the inferred interval (beyond 1% jitter) are rejected.
pub fn load_csv(path: &Path, columns: &ColumnSpec) -> Result<QueueSeries> {
    let text = std::fs::read_to_string(path)?;
    parse_csv(&text, columns)
}

fn parse_csv(text: &str, columns: &ColumnSpec) -> Result<QueueSeries> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::Format("empty file".into()))?;
    let names: Vec<&str> = header.split(',').map(str::trim).collect();
    let t_col = names
        .iter()
        .position(|n| *n == columns.timestamp)
        .ok_or_else(|| Error::Format(format!("missing column '{}'", columns.timestamp)))?;
    let v_col = names
        .iter()
        .position(|n| *n == columns.value)
        .ok_or_else(|| Error::Format(format!("missing column '{}'", columns.value)))?;

    let mut stamps: Vec<i64> = Vec::new();
    let mut raw: Vec<f64> = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1; // 1-based, header is line 1
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() <= t_col.max(v_col) {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected at least {} fields, got {}", t_col.max(v_col) + 1, fields.len()),
            });
        }
        let t: i64 = fields[t_col].parse().map_err(|_| Error::Parse {
            line: lineno,
            msg: format!("bad timestamp '{}'", fields[t_col]),
        })?;
        let v: f64 = fields[v_col].parse().map_err(|_| Error::Parse {
            line: lineno,
            msg: format!("bad queue length '{}'", fields[v_col]),
        })?;
        if !v.is_finite() || v < 0.0 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("queue length {v} is not a finite non-negative number"),
            });
        }
        if let Some(prev) = stamps.last() {
            if t <= *prev {
                return Err(Error::Format(format!(
                    "timestamps must be strictly increasing (line {lineno}: {t} after {prev})"
                )));
            }
        }
        stamps.push(t);
        raw.push(v);
    }
    if stamps.len() < 2 {
        return Err(Error::Format(format!(
            "need at least 2 data rows to infer the sampling interval, got {}",
            stamps.len()
        )));
    }

    let mut gaps: Vec<i64> = stamps.windows(2).map(|w| w[1] - w[0]).collect();
    gaps.sort_unstable();
    // Lower-middle element: gaps are only ever inflated by missing rows, so
    // ties break toward the finer interval.
    let dt = gaps[(gaps.len() - 1) / 2] as f64;

    let mut values = vec![raw[0]];
    let mut mask = vec![false];
    for i in 1..stamps.len() {
        let gap = (stamps[i] - stamps[i - 1]) as f64;
        let k = (gap / dt).round();
        if k < 1.0 || (gap - k * dt).abs() > 0.01 * dt {
            return Err(Error::Format(format!(
                "timestamp gap {gap}s at row {} is not a multiple of the inferred interval {dt}s",
                i + 1
            )));
        }
        let k = k as usize;
        // Linear fill for missing rows keeps the grid uniform for FFT consumers.
        for j in 1..k {
            let frac = j as f64 / k as f64;
            values.push(raw[i - 1] + frac * (raw[i] - raw[i - 1]));
            mask.push(true);
        }
        values.push(raw[i]);
        mask.push(false);
    }

    Ok(QueueSeries {
        start_time: stamps[0],
        dt,
        values,
        cleaned_mask: mask,
    })
}

/// Writes a series in the toolkit CSV format (`timestamp,queue_len`).
///
/// Output is byte-stable for identical inputs: integer timestamps, shortest
/// round-trip float formatting for values.
pub fn write_csv(series: &QueueSeries, path: &Path) -> Result<()> {
    let mut out = String::with_capacity(series.len() * 16 + 32);
    out.push_str("timestamp,queue_len\n");
    for (i, v) in series.values.iter().enumerate() {
        let t = series.start_time + (i as f64 * series.dt).round() as i64;
        let _ = writeln!(out, "{t},{v}");
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Replaces values above `cfg.max_queue` with the mean of valid samples in a
/// centered window of `cfg.window` samples.
///
/// Validity is judged against the input values, so one outlier never
/// contaminates the replacement of a neighbor. When a whole window is invalid
/// the series-wide mean of valid samples is used instead and a warning is
/// recorded; when the entire series is invalid the threshold itself is used.
pub fn clean(series: &QueueSeries, cfg: &CleaningConfig) -> Result<(QueueSeries, CleanReport)> {
    cfg.validate()?;
    if series.is_empty() {
        return Err(Error::Argument("cannot clean an empty series".into()));
    }

    let n = series.len();
    let valid: Vec<bool> = series.values.iter().map(|v| *v <= cfg.max_queue).collect();
    let global_mean = {
        let (sum, count) = series
            .values
            .iter()
            .zip(&valid)
            .filter(|(_, ok)| **ok)
            .fold((0.0, 0usize), |(s, c), (v, _)| (s + v, c + 1));
        if count > 0 {
            Some(sum / count as f64)
        } else {
            None
        }
    };

    let mut report = CleanReport::default();
    let mut out = series.clone();
    let half = cfg.window / 2;
    for i in 0..n {
        if valid[i] {
            continue;
        }
        let lo = i.saturating_sub(half);
        let hi = (i + half).min(n - 1);
        let (sum, count) = (lo..=hi)
            .filter(|j| valid[*j])
            .fold((0.0, 0usize), |(s, c), j| (s + series.values[j], c + 1));
        let replacement = if count > 0 {
            sum / count as f64
        } else {
            report.window_fallbacks += 1;
            match global_mean {
                Some(m) => {
                    report
                        .warnings
                        .push(format!("window at index {i} contains no valid samples; used series mean"));
                    m
                }
                None => {
                    report
                        .warnings
                        .push(format!("series contains no valid samples; index {i} set to max_queue"));
                    cfg.max_queue
                }
            }
        };
        out.values[i] = replacement;
        out.cleaned_mask[i] = true;
        report.replaced.push(i);
    }
    Ok((out, report))
}

/// Aggregates to a coarser grid taking the maximum per window (maximum queue
/// per signal cycle). `target_dt` must be an integer multiple of the input dt.
pub fn aggregate(series: &QueueSeries, target_dt: f64) -> Result<QueueSeries> {
    let k = aggregation_factor(series.dt, target_dt)?;
    resample(series, target_dt, k, |w| {
        w.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    })
}

/// Sum-aggregation, appropriate for flow (count) series.
pub fn aggregate_sum(series: &QueueSeries, target_dt: f64) -> Result<QueueSeries> {
    let k = aggregation_factor(series.dt, target_dt)?;
    resample(series, target_dt, k, |w| w.iter().sum())
}

fn aggregation_factor(dt: f64, target_dt: f64) -> Result<usize> {
    if target_dt < dt {
        return Err(Error::Argument(format!(
            "target_dt {target_dt} is finer than the series dt {dt}"
        )));
    }
    let k = (target_dt / dt).round();
    if (k * dt - target_dt).abs() > 1e-9 * dt {
        return Err(Error::Argument(format!(
            "target_dt {target_dt} is not an integer multiple of dt {dt}"
        )));
    }
    Ok(k as usize)
}

fn resample(
    series: &QueueSeries,
    target_dt: f64,
    k: usize,
    combine: impl Fn(&[f64]) -> f64,
) -> Result<QueueSeries> {
    let values: Vec<f64> = series.values.chunks(k).map(|w| combine(w)).collect();
    let mask: Vec<bool> = series
        .cleaned_mask
        .chunks(k)
        .map(|w| w.iter().any(|m| *m))
        .collect();
    Ok(QueueSeries {
        start_time: series.start_time,
        dt: target_dt,
        values,
        cleaned_mask: mask,
    })
}

/// Centered moving mean with edge windows truncated to the available samples.
/// Length is preserved. Even widths behave like the next odd width so the
/// window stays symmetric.
pub fn moving_average(series: &QueueSeries, window: usize) -> Result<QueueSeries> {
    if window == 0 {
        return Err(Error::Argument("moving-average window must be >= 1".into()));
    }
    let n = series.len();
    let half = window / 2;
    let values: Vec<f64> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n.saturating_sub(1));
            let w = &series.values[lo..=hi];
            w.iter().sum::<f64>() / w.len() as f64
        })
        .collect();
    Ok(QueueSeries {
        start_time: series.start_time,
        dt: series.dt,
        values,
        cleaned_mask: series.cleaned_mask.clone(),
    })
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub(crate) fn population_variance(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn series(values: &[f64]) -> QueueSeries {
        QueueSeries::new(0, 120.0, values.to_vec()).unwrap()
    }

    #[test]
    fn parse_three_rows() {
        let s = parse_csv("timestamp,queue_len\n0,5\n120,7\n240,6\n", &ColumnSpec::default()).unwrap();
        assert_eq!(s.dt, 120.0);
        assert_eq!(s.values, vec![5.0, 7.0, 6.0]);
        assert!(s.cleaned_mask.iter().all(|m| !m));
    }

    #[test]
    fn missing_row_is_interpolated_and_flagged() {
        let s = parse_csv("timestamp,queue_len\n0,5\n240,6\n360,7\n", &ColumnSpec::default()).unwrap();
        assert_eq!(s.dt, 120.0);
        assert_eq!(s.values.len(), 4);
        assert_relative_eq!(s.values[1], 5.5);
        assert_eq!(s.cleaned_mask, vec![false, true, false, false]);
    }

    #[test]
    fn decreasing_timestamps_rejected() {
        let err = parse_csv("timestamp,queue_len\n240,5\n120,6\n", &ColumnSpec::default()).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
    }

    #[test]
    fn malformed_row_names_line() {
        let err = parse_csv("timestamp,queue_len\n0,5\nx,6\n", &ColumnSpec::default()).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn jittered_timestamps_rejected() {
        let err = parse_csv(
            "timestamp,queue_len\n0,5\n120,6\n245,7\n360,8\n",
            &ColumnSpec::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Format(_)));
    }

    #[test]
    fn clean_replaces_with_valid_window_mean() {
        let s = series(&[23.0, 12.0, 55.0, 18.0, 20.0]);
        let (out, report) = clean(&s, &CleaningConfig::default()).unwrap();
        assert_relative_eq!(out.values[2], (23.0 + 12.0 + 18.0 + 20.0) / 4.0);
        assert_eq!(out.cleaned_mask, vec![false, false, true, false, false]);
        assert_eq!(report.replaced, vec![2]);
        assert!(out.values.iter().all(|v| *v <= 40.0));
    }

    #[test]
    fn clean_is_identity_on_valid_series() {
        let s = series(&[10.0, 20.0, 30.0]);
        let (out, report) = clean(&s, &CleaningConfig::default()).unwrap();
        assert_eq!(out, s);
        assert!(report.replaced.is_empty());
    }

    #[test]
    fn clean_all_invalid_warns() {
        let s = series(&[50.0, 50.0, 50.0]);
        let (out, report) = clean(&s, &CleaningConfig::default()).unwrap();
        assert!(out.values.iter().all(|v| *v <= 40.0));
        assert!(out.cleaned_mask.iter().all(|m| *m));
        assert!(!report.warnings.is_empty());
    }

    #[test]
    fn clean_is_idempotent() {
        let s = series(&[23.0, 12.0, 55.0, 18.0, 90.0, 20.0, 41.0]);
        let cfg = CleaningConfig::default();
        let (once, _) = clean(&s, &cfg).unwrap();
        let (twice, report) = clean(&once, &cfg).unwrap();
        assert_eq!(once, twice);
        assert!(report.replaced.is_empty());
    }

    #[test]
    fn aggregate_windowed_max() {
        let s = QueueSeries::new(0, 60.0, vec![3.0, 9.0, 4.0, 2.0]).unwrap();
        let out = aggregate(&s, 120.0).unwrap();
        assert_eq!(out.values, vec![9.0, 4.0]);
        assert_eq!(out.dt, 120.0);
    }

    #[test]
    fn aggregate_identity_when_dt_matches() {
        let s = series(&[3.0, 9.0, 4.0]);
        let out = aggregate(&s, 120.0).unwrap();
        assert_eq!(out.values, s.values);
    }

    #[test]
    fn aggregate_rejects_non_multiple() {
        let s = series(&[3.0, 9.0]);
        assert!(matches!(aggregate(&s, 180.0), Err(Error::Argument(_))));
    }

    #[test]
    fn aggregate_preserves_global_max() {
        let s = QueueSeries::new(0, 60.0, vec![3.0, 9.0, 4.0, 2.0, 11.0]).unwrap();
        let out = aggregate(&s, 180.0).unwrap();
        let max_in = s.values.iter().cloned().fold(f64::MIN, f64::max);
        let max_out = out.values.iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(max_in, max_out);
    }

    #[test]
    fn moving_average_constant_is_constant() {
        let s = series(&[7.0; 20]);
        let out = moving_average(&s, 10).unwrap();
        for v in out.values {
            assert_relative_eq!(v, 7.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn moving_average_two_sample_window() {
        let s = series(&[0.0, 10.0]);
        let out = moving_average(&s, 2).unwrap();
        assert_eq!(out.values, vec![5.0, 5.0]);
    }

    #[test]
    fn moving_average_window_one_is_identity() {
        let s = series(&[1.0, 4.0, 2.0]);
        let out = moving_average(&s, 1).unwrap();
        assert_eq!(out.values, s.values);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("series.csv");
        let s = QueueSeries::new(1_513_555_200, 120.0, vec![5.25, 7.0, 6.125, 0.0]).unwrap();
        write_csv(&s, &path).unwrap();
        let back = load_csv(&path, &ColumnSpec::default()).unwrap();
        assert_eq!(back.start_time, s.start_time);
        assert_eq!(back.dt, s.dt);
        for (a, b) in back.values.iter().zip(&s.values) {
            assert_relative_eq!(a, b, epsilon = 1e-9);
        }
    }
}
