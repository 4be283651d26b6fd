//! `fracq`: generate, clean, simulate, calibrate, analyze, and validate
//! cycle-to-cycle queue-length series.
//!
//! Every command writes its outputs plus a `manifest.json` describing the
//! invocation; reruns with the same inputs and seed produce byte-identical
//! files. Exit codes: 0 success, 1 input/parse error, 2 non-convergence.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use fracq_core::calibration::{calibrate, CalibrationConfig};
use fracq_core::queue_sde::{draw_noise, simulate_queue_with_noise, ModelParams, SimConfig, VolScheme};
use fracq_core::seasonal::SeasonalTrend;
use fracq_core::spectral::{detect_peaks, fit_slope, log_bin, periodogram, welch, Peak, SlopeFit};
use fracq_core::timeseries::{clean, load_csv, write_csv, CleaningConfig, ColumnSpec, QueueSeries};
use fracq_core::validation::{build_report, ValidationConfig};

#[derive(Parser)]
#[command(name = "fracq", version, about = "Queue-length SDE toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic queue series from model parameters.
    Gen(GenArgs),
    /// Replace unrealistic queue values with local window means.
    Clean(CleanArgs),
    /// Simulate the model with an explicit seasonal trend file.
    Simulate(SimulateArgs),
    /// Fit model parameters to an observed series.
    Calibrate(CalibrateArgs),
    /// Spectral analysis: PSD, log-binned PSD, slope, periodic peaks.
    Analyze(AnalyzeArgs),
    /// Compare an observed and a simulated series.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Flat JSON parameter file (mu, hurst, mu_amp, mu_base, y0, kappa,
    /// gamma_bar, sigma_gamma, gamma0).
    #[arg(long)]
    params: PathBuf,
    /// Total duration in seconds.
    #[arg(long)]
    horizon: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Sampling interval in seconds.
    #[arg(long, default_value_t = 120.0)]
    dt: f64,
    /// Optional seasonal trend JSON; the built-in daily profile otherwise.
    #[arg(long)]
    trend: Option<PathBuf>,
    /// Epoch seconds of the first sample.
    #[arg(long, default_value_t = 0)]
    start_time: i64,
}

#[derive(Args)]
struct CleanArgs {
    /// Input series CSV (`timestamp,queue_len`).
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Queue lengths above this threshold are replaced.
    #[arg(long, default_value_t = 40.0)]
    max_queue: f64,
    /// Centered window width in samples (odd, >= 3).
    #[arg(long, default_value_t = 5)]
    window: usize,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    params: PathBuf,
    /// Seasonal trend JSON (as written by calibrate or gen).
    #[arg(long)]
    trend: PathBuf,
    #[arg(long)]
    horizon: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 120.0)]
    dt: f64,
    /// Independent replicate paths.
    #[arg(long, default_value_t = 1)]
    replicates: usize,
    /// Volatility diffusion: additive (as written) or square_root.
    #[arg(long, default_value = "additive")]
    vol_scheme: String,
    #[arg(long, default_value_t = 0)]
    start_time: i64,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Observed series CSV.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2000)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-4)]
    tol_fun: f64,
    #[arg(long, default_value_t = 1e-4)]
    tol_x: f64,
    /// Hurst exponent of the driving noise.
    #[arg(long, default_value_t = 0.7)]
    hurst: f64,
    /// Scan H in {0.5, 0.6, 0.7, 0.8, 0.9} and keep the best RMSE.
    #[arg(long)]
    search_hurst: bool,
    /// Noise replicates averaged inside the objective.
    #[arg(long, default_value_t = 1)]
    replicates: usize,
    /// Skip the cleaning pass before fitting.
    #[arg(long)]
    no_clean: bool,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Segments of the averaged spectrum; 0 uses the plain periodogram.
    #[arg(long, default_value_t = 0)]
    segments: usize,
    /// Remove a linear trend before the FFT.
    #[arg(long)]
    detrend: bool,
    #[arg(long, default_value_t = 10)]
    bins_per_decade: usize,
    /// Slope-fit band, long-period edge in seconds.
    #[arg(long, default_value_t = 14.0 * 86_400.0)]
    band_lo_period: f64,
    /// Slope-fit band, short-period edge in seconds.
    #[arg(long, default_value_t = 1800.0)]
    band_hi_period: f64,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    observed: PathBuf,
    #[arg(long)]
    simulated: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    smooth_window: usize,
    /// Histogram bins; Sturges' rule otherwise.
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long, default_value_t = 8)]
    segments: usize,
}

/// Invocation record written next to every command's outputs.
#[derive(Debug, Serialize)]
struct RunManifest {
    command: String,
    inputs: Vec<String>,
    params_file: Option<String>,
    seed: Option<u64>,
    outputs: Vec<String>,
    version: String,
}

impl RunManifest {
    fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            inputs: Vec::new(),
            params_file: None,
            seed: None,
            outputs: Vec::new(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join("manifest.json");
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Clean(args) => cmd_clean(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Calibrate(args) => cmd_calibrate(args),
        Command::Analyze(args) => cmd_analyze(args),
        Command::Validate(args) => cmd_validate(args),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn ensure_out_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn read_params(path: &Path) -> Result<ModelParams> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let params: ModelParams = serde_json::from_str(&text).with_context(|| {
        format!(
            "parsing parameter file {} (expected flat keys mu, hurst, mu_amp, mu_base, y0, kappa, gamma_bar, sigma_gamma, gamma0)",
            path.display()
        )
    })?;
    Ok(params)
}

fn read_trend(path: &Path) -> Result<SeasonalTrend> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let trend: SeasonalTrend =
        serde_json::from_str(&text).with_context(|| format!("parsing trend file {}", path.display()))?;
    Ok(trend)
}

fn load_series(path: &Path) -> Result<QueueSeries> {
    load_csv(path, &ColumnSpec::default()).with_context(|| format!("loading {}", path.display()))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn parse_vol_scheme(name: &str) -> Result<VolScheme> {
    match name {
        "additive" => Ok(VolScheme::Additive),
        "square_root" => Ok(VolScheme::SquareRoot),
        other => anyhow::bail!("unknown volatility scheme '{other}' (use additive or square_root)"),
    }
}

fn run_model(
    params: &ModelParams,
    trend: &SeasonalTrend,
    cfg: &SimConfig,
    start_time: i64,
    replicate: u64,
) -> Result<QueueSeries> {
    let noise = draw_noise(
        params.sde.hurst,
        cfg.steps().saturating_sub(1),
        cfg.seed,
        replicate,
    );
    let mut series = simulate_queue_with_noise(&params.sde, &params.vol, trend, cfg, &noise)?;
    series.start_time = start_time;
    Ok(series)
}

fn cmd_gen(args: GenArgs) -> Result<ExitCode> {
    ensure_out_dir(&args.out)?;
    let params = read_params(&args.params)?;
    let trend = match &args.trend {
        Some(path) => read_trend(path)?,
        None => SeasonalTrend::daily_profile(),
    };
    let cfg = SimConfig {
        dt: args.dt,
        horizon: args.horizon,
        seed: args.seed,
        ..SimConfig::default()
    };
    let series = run_model(&params, &trend, &cfg, args.start_time, 0)?;

    let series_path = args.out.join("series.csv");
    write_csv(&series, &series_path)?;
    let trend_path = args.out.join("trend.json");
    write_json(&trend, &trend_path)?;

    let mut manifest = RunManifest::new("gen");
    manifest.inputs = vec![args.params.display().to_string()];
    manifest.params_file = Some(args.params.display().to_string());
    manifest.seed = Some(args.seed);
    manifest.outputs = vec![
        series_path.display().to_string(),
        trend_path.display().to_string(),
    ];
    manifest.write(&args.out)?;

    println!("wrote {} samples to {}", series.len(), series_path.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_clean(args: CleanArgs) -> Result<ExitCode> {
    ensure_out_dir(&args.out)?;
    let series = load_series(&args.input)?;
    let cfg = CleaningConfig {
        max_queue: args.max_queue,
        window: args.window,
    };
    let (cleaned, report) = clean(&series, &cfg)?;

    let out_path = args.out.join("cleaned.csv");
    write_csv(&cleaned, &out_path)?;

    let mut manifest = RunManifest::new("clean");
    manifest.inputs = vec![args.input.display().to_string()];
    manifest.outputs = vec![out_path.display().to_string()];
    manifest.write(&args.out)?;

    println!(
        "replaced {} of {} samples ({} window fallbacks)",
        report.replaced.len(),
        cleaned.len(),
        report.window_fallbacks
    );
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_simulate(args: SimulateArgs) -> Result<ExitCode> {
    ensure_out_dir(&args.out)?;
    let params = read_params(&args.params)?;
    let trend = read_trend(&args.trend)?;
    let cfg = SimConfig {
        dt: args.dt,
        horizon: args.horizon,
        seed: args.seed,
        replicates: args.replicates,
        vol_scheme: parse_vol_scheme(&args.vol_scheme)?,
        ..SimConfig::default()
    };

    let mut outputs = Vec::new();
    for rep in 0..args.replicates.max(1) as u64 {
        let series = run_model(&params, &trend, &cfg, args.start_time, rep)?;
        let name = if args.replicates > 1 {
            format!("series_r{rep:03}.csv")
        } else {
            "series.csv".to_string()
        };
        let path = args.out.join(name);
        write_csv(&series, &path)?;
        outputs.push(path.display().to_string());
    }

    let mut manifest = RunManifest::new("simulate");
    manifest.inputs = vec![
        args.params.display().to_string(),
        args.trend.display().to_string(),
    ];
    manifest.params_file = Some(args.params.display().to_string());
    manifest.seed = Some(args.seed);
    manifest.outputs = outputs;
    manifest.write(&args.out)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_calibrate(args: CalibrateArgs) -> Result<ExitCode> {
    ensure_out_dir(&args.out)?;
    let raw = load_series(&args.data)?;
    let data = if args.no_clean {
        raw
    } else {
        clean(&raw, &CleaningConfig::default())?.0
    };

    let cfg = CalibrationConfig {
        tol_fun: args.tol_fun,
        tol_x: args.tol_x,
        max_iter: args.max_iter,
        seed: args.seed,
        replicates: args.replicates,
        hurst: args.hurst,
        search_hurst: args.search_hurst,
        ..CalibrationConfig::default()
    };
    let result = calibrate(&data, &cfg)?;

    let result_path = args.out.join("result.json");
    write_json(&result, &result_path)?;

    let trace_path = args.out.join("trace.csv");
    let mut trace_text = String::from("iter,best_rmse\n");
    for (i, v) in result.trace.iter().enumerate() {
        let _ = writeln!(trace_text, "{},{}", i + 1, v);
    }
    std::fs::write(&trace_path, trace_text)?;

    // The fitted trend is part of the reproducible artifact set.
    let trend = fracq_core::seasonal::extract_trend(&data, cfg.n_harmonics)?;
    let trend_path = args.out.join("trend.json");
    write_json(&trend, &trend_path)?;

    let mut manifest = RunManifest::new("calibrate");
    manifest.inputs = vec![args.data.display().to_string()];
    manifest.seed = Some(args.seed);
    manifest.outputs = vec![
        result_path.display().to_string(),
        trace_path.display().to_string(),
        trend_path.display().to_string(),
    ];
    manifest.write(&args.out)?;

    println!(
        "rmse {:.6} after {} iterations (converged: {})",
        result.rmse, result.iterations, result.converged
    );
    if result.converged {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(2))
    }
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<ExitCode> {
    ensure_out_dir(&args.out)?;
    let series = load_series(&args.data)?;

    let est = if args.segments == 0 {
        periodogram(&series, args.detrend)?
    } else {
        welch(&series, args.segments, args.detrend)?
    };
    let est = log_bin(&est, args.bins_per_decade)?;

    let psd_path = args.out.join("psd.csv");
    let mut psd_text = String::from("frequency_hz,period_s,power\n");
    for (f, p) in est.frequencies.iter().zip(&est.power) {
        let _ = writeln!(psd_text, "{},{},{}", f, 1.0 / f, p);
    }
    std::fs::write(&psd_path, psd_text)?;

    let binned = est.binned.as_ref().expect("log_bin fills the binned view");
    let binned_path = args.out.join("psd_binned.csv");
    let mut binned_text = String::from("bin_center_hz,bin_period_s,bin_power\n");
    for (f, p) in binned.frequencies.iter().zip(&binned.power) {
        let _ = writeln!(binned_text, "{},{},{}", f, 1.0 / f, p);
    }
    std::fs::write(&binned_path, binned_text)?;

    let band = (1.0 / args.band_lo_period, 1.0 / args.band_hi_period);
    let slope = fit_slope(&est, band.0, band.1)?;
    let peaks = detect_peaks(&est, (args.band_hi_period, args.band_lo_period));

    #[derive(Serialize)]
    struct SpectralReport {
        slope: SlopeFit,
        peaks: Vec<Peak>,
    }
    let report_path = args.out.join("spectral_report.json");
    write_json(&SpectralReport { slope, peaks }, &report_path)?;

    let mut manifest = RunManifest::new("analyze");
    manifest.inputs = vec![args.data.display().to_string()];
    manifest.outputs = vec![
        psd_path.display().to_string(),
        binned_path.display().to_string(),
        report_path.display().to_string(),
    ];
    manifest.write(&args.out)?;

    println!("slope {:.3} over {} binned points", slope.slope, slope.points);
    Ok(ExitCode::SUCCESS)
}

fn cmd_validate(args: ValidateArgs) -> Result<ExitCode> {
    ensure_out_dir(&args.out)?;
    let observed = load_series(&args.observed)?;
    let simulated = load_series(&args.simulated)?;

    let cfg = ValidationConfig {
        smooth_window: args.smooth_window,
        bins: args.bins,
        welch_segments: args.segments,
        ..ValidationConfig::default()
    };
    let report = build_report(&observed, &simulated, &cfg)?;

    let report_path = args.out.join("report.json");
    write_json(&report, &report_path)?;

    let scatter_path = args.out.join("scatter.csv");
    let mut scatter_text = String::from("t,observed,simulated\n");
    for p in &report.scatter {
        let _ = writeln!(scatter_text, "{},{},{}", p.t, p.observed, p.simulated);
    }
    std::fs::write(&scatter_path, scatter_text)?;

    let mut manifest = RunManifest::new("validate");
    manifest.inputs = vec![
        args.observed.display().to_string(),
        args.simulated.display().to_string(),
    ];
    manifest.outputs = vec![
        report_path.display().to_string(),
        scatter_path.display().to_string(),
    ];
    manifest.write(&args.out)?;

    println!("pearson_r {:.4}, ks {:.4}", report.pearson_r, report.ks_distance);
    Ok(ExitCode::SUCCESS)
}
