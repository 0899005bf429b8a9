//! Command-line front end: config file parsing, subcommands, exit codes.
//!
//! Every command is a pure function of the config file, the flags, and the
//! seed, so outputs are byte-for-byte reproducible across reruns. JSON
//! reports follow the schemas shipped under `schemas/`; tabular output is
//! CSV with 12-digit scientific notation.
//!
//! Exit codes: `0` success, `2` configuration or input error, `3` numerical
//! failure or a validation z-score above 4.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use serde::Deserialize;
use serde_json::json;
use thiserror::Error;

use crate::arclength::{
    posterior_moments_1d, posterior_moments_nd, prior_mean_1d, prior_moments_1d, prior_moments_nd,
    ArcLengthError, ArcLengthMoments, CorrelationPolicy, Interval, MeanForm,
};
use crate::gp::{GpError, GpPosterior, NoiseSpec, Observations};
use crate::integrand_dist::Integrand1D;
use crate::kernels::{CoregionalizedKernel, KernelSpec};
use crate::mc_oracle::{empirical_arclength, sample_lengths, summarize, LengthMode, McError};
use crate::quadrature::QuadratureSpec;
use crate::specfun::SeriesPolicy;

/// Absolute z-score beyond which `validate` reports disagreement.
pub const VALIDATE_Z_LIMIT: f64 = 4.0;

/// Errors surfaced by the command line, tagged with their exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad config file, bad flags, or unreadable input. Exit code 2.
    #[error("configuration error: {0}")]
    Config(String),
    /// The model was well formed but evaluation failed. Exit code 3.
    #[error("numerical failure: {0}")]
    Numeric(String),
    /// Monte Carlo disagreed with the analytic mean. Exit code 3.
    #[error("validation failed: |z_mean| = {z:.2} exceeds {VALIDATE_Z_LIMIT}")]
    Validation { z: f64 },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) | CliError::Validation { .. } => 3,
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn numeric_err(e: impl std::fmt::Display) -> CliError {
    CliError::Numeric(e.to_string())
}

/// Model construction problems are config errors; a singular covariance is a
/// numerical failure of a well formed model.
fn gp_err(e: GpError) -> CliError {
    match e {
        GpError::SingularModel { .. } => CliError::Numeric(e.to_string()),
        other => CliError::Config(other.to_string()),
    }
}

fn mc_err(e: McError) -> CliError {
    match e {
        McError::InvalidArgument(msg) => CliError::Config(msg),
        McError::Gp(inner) => gp_err(inner),
    }
}

fn arclength_err(e: ArcLengthError) -> CliError {
    match e {
        ArcLengthError::InvalidInterval(msg) | ArcLengthError::InvalidModel(msg) => {
            CliError::Config(msg)
        }
        other => CliError::Numeric(other.to_string()),
    }
}

/// Monte Carlo settings block of the run config.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McSettings {
    /// Number of sampled paths.
    pub count: usize,
    /// Number of grid points per path.
    pub grid_size: usize,
    /// Base RNG seed; `--seed` overrides it.
    pub seed: u64,
}

impl Default for McSettings {
    fn default() -> Self {
        McSettings {
            count: 2000,
            grid_size: 2000,
            seed: 42,
        }
    }
}

fn default_series() -> SeriesPolicy {
    SeriesPolicy {
        rel_tol: 1e-10,
        max_terms: 60,
    }
}

/// One JSON config file drives every subcommand. Unknown keys are rejected.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Scalar kernel of the model.
    pub kernel: KernelSpec,
    /// Optional square mixing matrix coupling the outputs. Absent means a
    /// single output whose length is measured along its graph.
    #[serde(rename = "B", default)]
    pub mixing: Option<Vec<Vec<f64>>>,
    /// Integration interval.
    pub interval: Interval,
    /// Optional observations CSV (`t,y1,...`); a missing key or a
    /// header-only file leaves the model at its prior.
    #[serde(default)]
    pub observations_path: Option<PathBuf>,
    /// Shared observation noise variance.
    #[serde(default)]
    pub noise_variance: f64,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    #[serde(default = "default_series")]
    pub series: SeriesPolicy,
    #[serde(default)]
    pub mc: McSettings,
}

impl RunConfig {
    pub fn from_path(path: &std::path::Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<(), CliError> {
        self.kernel.validate().map_err(config_err)?;
        if !self.noise_variance.is_finite() || self.noise_variance < 0.0 {
            return Err(CliError::Config(format!(
                "noise_variance must be finite and non-negative, got {}",
                self.noise_variance
            )));
        }
        let rel_tol_ok = self.series.rel_tol.is_finite() && self.series.rel_tol > 0.0;
        if !rel_tol_ok || self.series.max_terms == 0 {
            return Err(CliError::Config(
                "series.rel_tol must be positive and series.max_terms at least 1".into(),
            ));
        }
        Ok(())
    }

    /// True when a mixing matrix is present, so lengths are vector norms
    /// rather than graph lengths.
    pub fn is_vector(&self) -> bool {
        self.mixing.is_some()
    }

    fn mixing_matrix(&self) -> Result<Option<DMatrix<f64>>, CliError> {
        let rows = match &self.mixing {
            None => return Ok(None),
            Some(rows) => rows,
        };
        let d = rows.len();
        if d == 0 || rows.iter().any(|r| r.len() != d) {
            return Err(CliError::Config(
                "B must be a non-empty square matrix given as nested arrays".into(),
            ));
        }
        Ok(Some(DMatrix::from_fn(d, d, |i, j| rows[i][j])))
    }

    pub fn coregionalized(&self) -> Result<CoregionalizedKernel, CliError> {
        match self.mixing_matrix()? {
            Some(b) => CoregionalizedKernel::new(self.kernel, b).map_err(config_err),
            None => CoregionalizedKernel::scalar_only(self.kernel).map_err(config_err),
        }
    }

    /// Build the model, conditioning on observations when a CSV is named.
    pub fn build_model(&self) -> Result<GpPosterior, CliError> {
        let kernel = self.coregionalized()?;
        let path = match &self.observations_path {
            None => return Ok(GpPosterior::prior(kernel)),
            Some(p) => p,
        };
        let noise = NoiseSpec::Shared(self.noise_variance);
        match Observations::from_csv_path(path, noise).map_err(gp_err)? {
            None => Ok(GpPosterior::prior(kernel)),
            Some(obs) => GpPosterior::fit(kernel, obs).map_err(gp_err),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "arclen",
    about = "Arc length moments of Gaussian process paths",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// JSON run configuration.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Override the RNG seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Write the report here instead of stdout.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Analytic moments of the prior arc length (JSON).
    PriorMoments(CommonArgs),
    /// Analytic moments of the posterior arc length (JSON).
    PosteriorMoments(CommonArgs),
    /// Density and CDF of sqrt(1 + X^2), X ~ N(mu, sigma^2) (CSV).
    IntegrandPdf {
        #[command(flatten)]
        common: CommonArgs,
        /// Mean of the underlying normal slope.
        #[arg(long)]
        mu: f64,
        /// Standard deviation of the underlying normal slope.
        #[arg(long)]
        sigma: f64,
        /// Number of grid rows.
        #[arg(long, default_value_t = 2001)]
        points: usize,
    },
    /// Log prior mean over a grid of output and input scales (CSV).
    Heatmap {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 0.1)]
        lambda_min: f64,
        #[arg(long, default_value_t = 4.0)]
        lambda_max: f64,
        #[arg(long, default_value_t = 20)]
        lambda_steps: usize,
        #[arg(long, default_value_t = 0.1)]
        sigma_min: f64,
        #[arg(long, default_value_t = 4.0)]
        sigma_max: f64,
        #[arg(long, default_value_t = 20)]
        sigma_steps: usize,
    },
    /// Monte Carlo path lengths (CSV) plus a summary report (JSON).
    SampleLengths(CommonArgs),
    /// Compare analytic moments against Monte Carlo; exit 3 on disagreement.
    Validate(CommonArgs),
}

/// Parse `args` and run the selected command, returning the process exit
/// code. Library entry point so integration tests can drive the CLI without
/// spawning a process.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::PriorMoments(common) => {
            let cfg = RunConfig::from_path(&common.config)?;
            let report = prior_report(&cfg)?;
            write_output(&common.out, &moments_json(&report)?)
        }
        Command::PosteriorMoments(common) => {
            let cfg = RunConfig::from_path(&common.config)?;
            let report = posterior_report(&cfg)?;
            write_output(&common.out, &moments_json(&report)?)
        }
        Command::IntegrandPdf {
            common,
            mu,
            sigma,
            points,
        } => {
            // The config is loaded for uniformity and validation even though
            // the distribution depends only on the flags.
            let _ = RunConfig::from_path(&common.config)?;
            write_output(&common.out, &integrand_pdf_csv(mu, sigma, points)?)
        }
        Command::Heatmap {
            common,
            lambda_min,
            lambda_max,
            lambda_steps,
            sigma_min,
            sigma_max,
            sigma_steps,
        } => {
            let cfg = RunConfig::from_path(&common.config)?;
            let grid = HeatmapGrid {
                lambda_min,
                lambda_max,
                lambda_steps,
                sigma_min,
                sigma_max,
                sigma_steps,
            };
            write_output(&common.out, &heatmap_csv(&cfg, &grid)?)
        }
        Command::SampleLengths(common) => {
            let cfg = RunConfig::from_path(&common.config)?;
            let seed = common.seed.unwrap_or(cfg.mc.seed);
            let (csv_text, report_json) = sample_lengths_outputs(&cfg, seed)?;
            match &common.out {
                Some(path) => {
                    fs::write(path, csv_text).map_err(|e| {
                        CliError::Config(format!("cannot write {}: {e}", path.display()))
                    })?;
                    print!("{report_json}");
                    Ok(())
                }
                None => {
                    print!("{csv_text}");
                    print!("{report_json}");
                    Ok(())
                }
            }
        }
        Command::Validate(common) => {
            let cfg = RunConfig::from_path(&common.config)?;
            let seed = common.seed.unwrap_or(cfg.mc.seed);
            let (report_json, z) = validate_report(&cfg, seed)?;
            write_output(&common.out, &report_json)?;
            if z.abs() > VALIDATE_Z_LIMIT {
                return Err(CliError::Validation { z });
            }
            Ok(())
        }
    }
}

fn write_output(out: &Option<PathBuf>, content: &str) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, content)
            .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn moments_json(report: &ArcLengthMoments) -> Result<String, CliError> {
    serde_json::to_string_pretty(report)
        .map(|s| s + "\n")
        .map_err(numeric_err)
}

/// Prior moments: closed-form Bessel mean in 1-D, Nakagami matched series
/// plus quadrature when a mixing matrix is present.
pub fn prior_report(cfg: &RunConfig) -> Result<ArcLengthMoments, CliError> {
    if cfg.is_vector() {
        let kernel = cfg.coregionalized()?;
        prior_moments_nd(&kernel, cfg.interval, &cfg.quadrature, &cfg.series)
            .map_err(arclength_err)
    } else {
        prior_moments_1d(&cfg.kernel, cfg.interval, MeanForm::BesselForm).map_err(arclength_err)
    }
}

/// Posterior moments under the configured observations. Without an
/// observations path this degrades gracefully to the prior model evaluated
/// through the posterior code path.
pub fn posterior_report(cfg: &RunConfig) -> Result<ArcLengthMoments, CliError> {
    let gp = cfg.build_model()?;
    if cfg.is_vector() {
        posterior_moments_nd(
            &gp,
            cfg.interval,
            &cfg.quadrature,
            &cfg.series,
            CorrelationPolicy::default(),
        )
        .map_err(arclength_err)
    } else {
        posterior_moments_1d(&gp, cfg.interval, &cfg.quadrature, &cfg.series)
            .map_err(arclength_err)
    }
}

/// CSV table `y,pdf,cdf` for the length integrand distribution. The grid is
/// quadratic in the slope variable so rows concentrate near `y = 1` where
/// the density has its integrable singularity structure.
pub fn integrand_pdf_csv(mu: f64, sigma: f64, points: usize) -> Result<String, CliError> {
    if !mu.is_finite() || !sigma.is_finite() || sigma <= 0.0 {
        return Err(CliError::Config(format!(
            "integrand-pdf needs finite mu and positive sigma, got mu={mu}, sigma={sigma}"
        )));
    }
    if points < 2 {
        return Err(CliError::Config(format!(
            "integrand-pdf needs at least 2 points, got {points}"
        )));
    }
    let dist = Integrand1D::new(mu, sigma).map_err(config_err)?;
    let u_max = mu.abs() + 8.0 * sigma;
    let mut out = String::from("y,pdf,cdf\n");
    for i in 0..points {
        let frac = i as f64 / (points - 1) as f64;
        let u = u_max * frac * frac;
        let y = u.hypot(1.0);
        writeln!(out, "{:.12e},{:.12e},{:.12e}", y, dist.pdf(y), dist.cdf(y))
            .map_err(numeric_err)?;
    }
    Ok(out)
}

/// Grid bounds for the heatmap command.
#[derive(Debug, Clone, Copy)]
pub struct HeatmapGrid {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub lambda_steps: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub sigma_steps: usize,
}

fn linspace(min: f64, max: f64, steps: usize) -> Vec<f64> {
    if steps == 1 {
        return vec![min];
    }
    (0..steps)
        .map(|i| min + (max - min) * i as f64 / (steps - 1) as f64)
        .collect()
}

/// CSV table `lambda,sigma,log_mean`: the natural log of the prior mean arc
/// length as the kernel's output scale `lambda` (so signal variance
/// `lambda^2`) and input length scale `sigma` vary over the grid.
pub fn heatmap_csv(cfg: &RunConfig, grid: &HeatmapGrid) -> Result<String, CliError> {
    for (name, min, max, steps) in [
        (
            "lambda",
            grid.lambda_min,
            grid.lambda_max,
            grid.lambda_steps,
        ),
        ("sigma", grid.sigma_min, grid.sigma_max, grid.sigma_steps),
    ] {
        if !(min.is_finite() && max.is_finite() && min > 0.0 && max >= min && steps >= 1) {
            return Err(CliError::Config(format!(
                "heatmap {name} grid needs 0 < min <= max and steps >= 1, got \
                 min={min}, max={max}, steps={steps}"
            )));
        }
    }
    let mut out = String::from("lambda,sigma,log_mean\n");
    for &lambda in &linspace(grid.lambda_min, grid.lambda_max, grid.lambda_steps) {
        for &sigma in &linspace(grid.sigma_min, grid.sigma_max, grid.sigma_steps) {
            let kernel =
                KernelSpec::new(cfg.kernel.family, lambda * lambda, sigma, cfg.kernel.rq_shape)
                    .map_err(config_err)?;
            let mean = prior_mean_1d(&kernel, cfg.interval, MeanForm::BesselForm)
                .map_err(arclength_err)?;
            writeln!(out, "{:.12e},{:.12e},{:.12e}", lambda, sigma, mean.ln())
                .map_err(numeric_err)?;
        }
    }
    Ok(out)
}

fn length_mode(cfg: &RunConfig) -> LengthMode {
    if cfg.is_vector() {
        LengthMode::VectorLength
    } else {
        LengthMode::GraphLength1D
    }
}

/// Draw path lengths, returning the CSV table and the JSON summary report.
pub fn sample_lengths_outputs(cfg: &RunConfig, seed: u64) -> Result<(String, String), CliError> {
    let gp = cfg.build_model()?;
    let lengths = sample_lengths(
        &gp,
        cfg.interval,
        cfg.mc.grid_size,
        cfg.mc.count,
        seed,
        length_mode(cfg),
    )
    .map_err(mc_err)?;
    let report = summarize(&lengths, cfg.mc.grid_size, seed).map_err(mc_err)?;
    let mut csv_text = String::from("draw_index,length\n");
    for (i, len) in lengths.iter().enumerate() {
        writeln!(csv_text, "{i},{len:.12e}").map_err(numeric_err)?;
    }
    let report_json = serde_json::to_string_pretty(&report)
        .map(|s| s + "\n")
        .map_err(numeric_err)?;
    Ok((csv_text, report_json))
}

/// Analytic-vs-Monte-Carlo comparison. Returns the JSON report and the mean
/// z-score; the caller decides whether the z-score fails the run.
pub fn validate_report(cfg: &RunConfig, seed: u64) -> Result<(String, f64), CliError> {
    let gp = cfg.build_model()?;
    let (analytic_mean, analytic_variance) = if cfg.is_vector() {
        let report = posterior_moments_nd(
            &gp,
            cfg.interval,
            &cfg.quadrature,
            &cfg.series,
            CorrelationPolicy::default(),
        )
        .map_err(arclength_err)?;
        (report.mean, report.variance)
    } else {
        let report = posterior_moments_1d(&gp, cfg.interval, &cfg.quadrature, &cfg.series)
            .map_err(arclength_err)?;
        (report.mean, None)
    };
    let mc = empirical_arclength(
        &gp,
        cfg.interval,
        cfg.mc.grid_size,
        cfg.mc.count,
        seed,
        length_mode(cfg),
    )
    .map_err(mc_err)?;
    if mc.mean_std_error <= 0.0 {
        return Err(CliError::Numeric(
            "Monte Carlo standard error is zero; cannot form a z-score".into(),
        ));
    }
    let z = (mc.empirical_mean - analytic_mean) / mc.mean_std_error;
    let variance_ratio = analytic_variance
        .filter(|v| *v > 0.0)
        .map(|v| mc.empirical_variance / v);
    let report = json!({
        "analytic_mean": analytic_mean,
        "empirical_mean": mc.empirical_mean,
        "z_mean": z,
        "analytic_variance": analytic_variance,
        "empirical_variance": mc.empirical_variance,
        "variance_ratio": variance_ratio,
        "sample_count": mc.sample_count,
        "grid_size": mc.grid_size,
        "seed": seed,
    });
    let text = serde_json::to_string_pretty(&report)
        .map(|s| s + "\n")
        .map_err(numeric_err)?;
    Ok((text, z))
}
