//! Command-line flags.

use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use fofr::simulation::AmseScale;
use fofr::smoothing::{log10_grid, SelectionGrid};
use fofr::{BasisKind, Criterion, Domain, FitMethod};

use crate::error::{CliError, CliResult};
use crate::manifest::Manifest;

#[derive(Debug, Parser)]
#[command(name = "fofr", version, about = "Function-on-function regression toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte Carlo campaign on a synthetic design.
    Simulate(SimulateArgs),
    /// Train/test fit and prediction on CSV curves.
    Fit(FitArgs),
    /// Smooth CSV curves and report the selected (K, lambda).
    Smooth(SmoothArgs),
    /// Bootstrap bands for every curve of a CSV data set.
    Bootstrap(BootstrapArgs),
}

#[derive(Debug, Clone, Args)]
pub struct LambdaArgs {
    /// Smallest log10 lambda of the search grid.
    #[arg(long, default_value_t = -10.0, allow_negative_numbers = true)]
    pub lambda_min: f64,
    /// Largest log10 lambda of the search grid.
    #[arg(long, default_value_t = 10.0, allow_negative_numbers = true)]
    pub lambda_max: f64,
    /// Number of grid points.
    #[arg(long, default_value_t = 100)]
    pub lambda_size: usize,
}

impl LambdaArgs {
    pub fn grid(&self) -> CliResult<Vec<f64>> {
        if self.lambda_size == 0 || !(self.lambda_min <= self.lambda_max) {
            return Err(CliError::Usage(
                "--lambda-min must not exceed --lambda-max and --lambda-size must be positive".into(),
            ));
        }
        Ok(log10_grid(self.lambda_min, self.lambda_max, self.lambda_size))
    }

    pub fn record(&self, m: &mut Manifest) {
        m.set("lambda_min", self.lambda_min);
        m.set("lambda_max", self.lambda_max);
        m.set("lambda_size", self.lambda_size);
    }
}

#[derive(Debug, Clone, Args)]
pub struct KArgs {
    /// Fix the number of basis functions (overrides the range).
    #[arg(long)]
    pub k: Option<usize>,
    /// Smallest K searched.
    #[arg(long, default_value_t = 4)]
    pub k_min: usize,
    /// Largest K searched.
    #[arg(long, default_value_t = 20)]
    pub k_max: usize,
}

impl KArgs {
    pub fn selection(&self, lambda: &LambdaArgs) -> CliResult<(SelectionGrid, Option<usize>)> {
        if self.k_min == 0 || self.k_min > self.k_max {
            return Err(CliError::Usage("--k-min must be positive and not exceed --k-max".into()));
        }
        if self.k == Some(0) {
            return Err(CliError::Usage("--k must be positive".into()));
        }
        let grid = SelectionGrid { log10_lambda: lambda.grid()?, k_candidates: (self.k_min..=self.k_max).collect() };
        Ok((grid, self.k))
    }

    pub fn record(&self, m: &mut Manifest) {
        match self.k {
            Some(k) => m.set("k", k),
            None => m.set("k", format!("{}..={}", self.k_min, self.k_max)),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Comma-separated bases: gaussian, bspline, fourier.
    #[arg(long, default_value = "gaussian,bspline,fourier")]
    pub bases: String,
    /// Comma-separated criteria: gcv, gic, maic, gbic.
    #[arg(long, default_value = "gcv,gic,maic,gbic")]
    pub criteria: String,
    /// Comma-separated estimators: ls, mpl.
    #[arg(long, default_value = "ls,mpl")]
    pub methods: String,
}

impl ModelArgs {
    pub fn bases(&self) -> CliResult<Vec<BasisKind>> {
        parse_list("--bases", &self.bases)
    }

    pub fn criteria(&self) -> CliResult<Vec<Criterion>> {
        parse_list("--criteria", &self.criteria)
    }

    pub fn methods(&self) -> CliResult<Vec<FitMethod>> {
        parse_list("--methods", &self.methods)
    }

    pub fn record(&self, m: &mut Manifest) -> CliResult<()> {
        m.set("bases", join(&self.bases()?));
        m.set("criteria", join(&self.criteria()?));
        m.set("methods", join(&self.methods()?));
        Ok(())
    }
}

#[derive(Debug, Clone, Args)]
pub struct BootArgs {
    /// Bootstrap replicates; 0 skips the bands.
    #[arg(long, default_value_t = 500)]
    pub boot: usize,
    /// Miscoverage level of the bands.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
}

impl BootArgs {
    pub fn validate(&self) -> CliResult<()> {
        if self.boot == 1 {
            return Err(CliError::Usage("--boot must be 0 or at least 2".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(CliError::Usage(format!("--alpha must lie in (0, 1), got {}", self.alpha)));
        }
        Ok(())
    }

    pub fn record(&self, m: &mut Manifest) {
        m.set("boot", self.boot);
        m.set("alpha", self.alpha);
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Data-generating case: I, II or III.
    #[arg(long)]
    pub case: String,
    /// Correlation scale of case I errors.
    #[arg(long)]
    pub rho: Option<f64>,
    /// Curves per replicate.
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    /// Monte Carlo replicates.
    #[arg(long, default_value_t = 100)]
    pub mc: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Basis functions per variable.
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub lambda: LambdaArgs,
    #[command(flatten)]
    pub boot: BootArgs,
    /// grid-mean or grid-sum.
    #[arg(long, default_value = "grid-mean")]
    pub amse_scale: String,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    /// Also write replicate 0 as CSV curves under `<out>/data`.
    #[arg(long)]
    pub export_data: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Response curves (CSV).
    #[arg(long)]
    pub response: PathBuf,
    /// Predictor curves (CSV); repeat for several predictors.
    #[arg(long = "predictor", required = true)]
    pub predictors: Vec<PathBuf>,
    /// Override the domain of every variable, as LOWER,UPPER.
    #[arg(long, allow_hyphen_values = true)]
    pub domain: Option<String>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Fraction of curves used for training.
    #[arg(long, default_value_t = 0.7)]
    pub train_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub k: KArgs,
    #[command(flatten)]
    pub lambda: LambdaArgs,
    #[command(flatten)]
    pub boot: BootArgs,
    /// grid-mean or grid-sum.
    #[arg(long, default_value = "grid-mean")]
    pub amse_scale: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SmoothArgs {
    /// Curves to smooth (CSV).
    #[arg(long)]
    pub input: PathBuf,
    /// Comma-separated bases.
    #[arg(long, default_value = "gaussian,bspline,fourier")]
    pub bases: String,
    /// Comma-separated criteria.
    #[arg(long, default_value = "gcv,gic,maic,gbic")]
    pub criteria: String,
    #[command(flatten)]
    pub k: KArgs,
    #[command(flatten)]
    pub lambda: LambdaArgs,
    /// Derivative order of the roughness penalty.
    #[arg(long, default_value_t = 2)]
    pub order: usize,
    /// Override the domain, as LOWER,UPPER.
    #[arg(long, allow_hyphen_values = true)]
    pub domain: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BootstrapArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "bspline")]
    pub basis: String,
    #[arg(long, default_value = "gic")]
    pub criterion: String,
    #[arg(long, default_value = "ls")]
    pub method: String,
    #[command(flatten)]
    pub k: KArgs,
    #[command(flatten)]
    pub lambda: LambdaArgs,
    #[command(flatten)]
    pub boot: BootArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn parse_list<T: FromStr>(flag: &str, text: &str) -> CliResult<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        out.push(parse_one(flag, part)?);
    }
    if out.is_empty() {
        return Err(CliError::Usage(format!("{flag} needs at least one value")));
    }
    Ok(out)
}

pub fn parse_one<T: FromStr>(flag: &str, text: &str) -> CliResult<T>
where
    T::Err: std::fmt::Display,
{
    text.parse::<T>().map_err(|e| CliError::Usage(format!("{flag}: {e}")))
}

pub fn parse_amse_scale(text: &str) -> CliResult<AmseScale> {
    parse_one("--amse-scale", text)
}

pub fn parse_domain(text: Option<&str>) -> CliResult<Option<Domain>> {
    let Some(text) = text else { return Ok(None) };
    let bad = || CliError::Usage(format!("--domain expects LOWER,UPPER, got '{text}'"));
    let (a, b) = text.split_once(',').ok_or_else(bad)?;
    let lower: f64 = a.trim().parse().map_err(|_| bad())?;
    let upper: f64 = b.trim().parse().map_err(|_| bad())?;
    Domain::new(lower, upper).map(Some).map_err(|e| CliError::Usage(format!("--domain: {e}")))
}

pub fn join<T: std::fmt::Display>(items: &[T]) -> String {
    items.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(",")
}
