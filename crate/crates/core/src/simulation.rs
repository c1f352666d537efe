//! Synthetic designs and the Monte Carlo comparison harness.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;

use crate::basis::{BasisKind, BasisSystem, Domain};
use crate::bootstrap::{band_coverage, band_width, bootstrap_bands, interval_score, BootstrapConfig, ErrorCurves, Refit};
use crate::criteria::{evaluate_criterion, Criterion};
use crate::error::{FofrError, Result};
use crate::regression::{
    build_design, center_curves, fit_ls, fit_mpl, DesignBlocks, FitMethod, FofrModel, MplOptions, PenaltySpec,
};
use crate::rng::{derive_seed, substream};
use crate::smoothing::{log10_grid, select_smoothing_all, SampledCurves, SmoothedCurves, DEFAULT_PENALTY_ORDER};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Case {
    I,
    II,
    III,
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Case::I => "I",
            Case::II => "II",
            Case::III => "III",
        })
    }
}

impl std::str::FromStr for Case {
    type Err = FofrError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "I" | "1" => Ok(Case::I),
            "II" | "2" => Ok(Case::II),
            "III" | "3" => Ok(Case::III),
            other => Err(FofrError::Config(format!("unknown case '{other}'"))),
        }
    }
}

/// A data-generating design.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DgpCase {
    pub case: Case,
    pub n: usize,
    pub j: usize,
    pub rho: Option<f64>,
}

impl DgpCase {
    pub fn case1(n: usize, rho: f64) -> Self {
        DgpCase { case: Case::I, n, j: 50, rho: Some(rho) }
    }

    pub fn case2(n: usize) -> Self {
        DgpCase { case: Case::II, n, j: 48, rho: None }
    }

    pub fn case3(n: usize) -> Self {
        DgpCase { case: Case::III, n, j: 48, rho: None }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.j < 2 {
            return Err(FofrError::Config("need N >= 2 and J >= 2".into()));
        }
        match (self.case, self.rho) {
            (Case::I, Some(r)) if r > 0.0 && r.is_finite() => Ok(()),
            (Case::I, _) => Err(FofrError::Config("case I needs rho > 0".into())),
            (_, Some(_)) => Err(FofrError::Config(format!("rho applies to case I only, not case {}", self.case))),
            _ => Ok(()),
        }
    }
}

/// Generated predictor and response curves with the noiseless response.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedData {
    pub predictor: SampledCurves,
    pub response: SampledCurves,
    /// Noise-free response on the response grid (`N x J`).
    pub truth: DMatrix<f64>,
}

/// Multiplier applied to every noise draw; zero leaves the random stream
/// untouched but removes the noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseScale(pub f64);

impl Default for NoiseScale {
    fn default() -> Self {
        NoiseScale(1.0)
    }
}

fn normal_matrix<R: Rng>(rng: &mut R, n: usize, j: usize, sd: f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, j);
    for i in 0..n {
        for t in 0..j {
            m[(i, t)] = sd * rng.sample::<f64, _>(StandardNormal);
        }
    }
    m
}

fn sorted_uniform<R: Rng>(rng: &mut R, j: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..j).map(|_| rng.random_range(-1.0..1.0)).collect();
    v.sort_by(f64::total_cmp);
    v
}

/// `nu(s) = 2 exp(a1 s) sin(pi s^2) / a1 + a2 cos(pi s)`.
pub fn case1_predictor(a1: f64, a2: f64, s: f64) -> f64 {
    2.0 * (a1 * s).exp() * (PI * s * s).sin() / a1 + a2 * (PI * s).cos()
}

/// `eta(t) = 2 a1^2 sin(pi t^2) + 2 a2 cos(pi t^2)`.
pub fn case1_response(a1: f64, a2: f64, t: f64) -> f64 {
    2.0 * a1 * a1 * (PI * t * t).sin() + 2.0 * a2 * (PI * t * t).cos()
}

/// `Sigma_{kl} = 0.5^{|k - l|} rho`.
pub fn case1_covariance(j: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(j, j, |k, l| 0.5f64.powi((k as i32 - l as i32).abs()) * rho)
}

pub fn generate_case1(n: usize, rho: f64, seed: u64) -> Result<SimulatedData> {
    generate(&DgpCase::case1(n, rho), seed, 0, NoiseScale::default())
}

pub fn generate_case2(n: usize, seed: u64) -> Result<SimulatedData> {
    generate(&DgpCase::case2(n), seed, 0, NoiseScale::default())
}

pub fn generate_case3(n: usize, seed: u64) -> Result<SimulatedData> {
    generate(&DgpCase::case3(n), seed, 0, NoiseScale::default())
}

/// Data for Monte Carlo replicate `replicate` of `seed`.
pub fn generate(dgp: &DgpCase, seed: u64, replicate: u64, noise: NoiseScale) -> Result<SimulatedData> {
    dgp.validate()?;
    let mut rng = substream(seed, replicate);
    match dgp.case {
        Case::I => case1(dgp, &mut rng, noise.0),
        Case::II | Case::III => periodic(dgp, &mut rng, noise.0),
    }
}

fn case1<R: Rng>(dgp: &DgpCase, rng: &mut R, noise: f64) -> Result<SimulatedData> {
    let (n, j) = (dgp.n, dgp.j);
    let rho = dgp.rho.expect("validated");
    let s = sorted_uniform(rng, j);
    let t = sorted_uniform(rng, j);
    let a1_dist = Normal::new(2.0, 0.02).expect("valid");
    let a2_dist = Normal::new(-3.0, 0.03).expect("valid");
    let a: Vec<(f64, f64)> = (0..n).map(|_| (a1_dist.sample(rng), a2_dist.sample(rng))).collect();
    let x_noise = normal_matrix(rng, n, j, 1.0);
    let chol = case1_covariance(j, rho).cholesky().expect("covariance is positive definite");
    let correlated = normal_matrix(rng, n, j, 1.0) * chol.l().transpose();
    let y_noise = normal_matrix(rng, n, j, 1.0);

    let x = DMatrix::from_fn(n, j, |i, k| case1_predictor(a[i].0, a[i].1, s[k]) + noise * x_noise[(i, k)]);
    let truth = DMatrix::from_fn(n, j, |i, k| case1_response(a[i].0, a[i].1, t[k]));
    let y = &truth + (correlated + y_noise) * noise;
    let domain = Domain::new(-1.0, 1.0)?;
    Ok(SimulatedData {
        predictor: SampledCurves::with_domain(s, x, "x", domain)?,
        response: SampledCurves::with_domain(t, y, "y", domain)?,
        truth,
    })
}

/// `15 + cos(pi j / 12) + 2 (a1 + a2)`.
pub fn periodic_response(a1: f64, a2: f64, j: f64) -> f64 {
    15.0 + (PI * j / 12.0).cos() + 2.0 * (a1 + a2)
}

/// Noise-free predictor of case II or III.
pub fn periodic_predictor(case: Case, a1: f64, a2: f64, j: f64) -> f64 {
    let base = 15.0 + (PI * j / 12.0).sin() + 2.0 * (a1 + a2);
    match case {
        Case::II => base / (2.0 * a1.exp()) + a2,
        _ => base + a2,
    }
}

fn periodic<R: Rng>(dgp: &DgpCase, rng: &mut R, noise: f64) -> Result<SimulatedData> {
    let (n, j) = (dgp.n, dgp.j);
    let grid: Vec<f64> = (1..=j).map(|v| v as f64).collect();
    let a1_dist = Normal::new(0.0, 0.1).expect("valid");
    let a2_dist = Normal::new(0.0, 0.02).expect("valid");
    let a: Vec<(f64, f64)> = (0..n).map(|_| (a1_dist.sample(rng), a2_dist.sample(rng))).collect();
    let x_noise = normal_matrix(rng, n, j, 0.5);
    let y_noise = normal_matrix(rng, n, j, 0.5);
    let x = DMatrix::from_fn(n, j, |i, k| {
        periodic_predictor(dgp.case, a[i].0, a[i].1, grid[k]) + noise * x_noise[(i, k)]
    });
    let truth = DMatrix::from_fn(n, j, |i, k| periodic_response(a[i].0, a[i].1, grid[k]));
    let y = &truth + y_noise * noise;
    let domain = Domain::from_points(&grid)?;
    Ok(SimulatedData {
        predictor: SampledCurves::with_domain(grid.clone(), x, "x", domain)?,
        response: SampledCurves::with_domain(grid, y, "y", domain)?,
        truth,
    })
}

fn check_shapes(truth: &DMatrix<f64>, fitted: &DMatrix<f64>) -> Result<()> {
    if truth.shape() != fitted.shape() || truth.is_empty() {
        return Err(FofrError::Shape(format!(
            "truth is {:?} but fitted is {:?}",
            truth.shape(),
            fitted.shape()
        )));
    }
    Ok(())
}

/// `(1/N) sum_i mean_j (truth_ij - fitted_ij)^2`.
pub fn amse(truth: &DMatrix<f64>, fitted: &DMatrix<f64>) -> Result<f64> {
    check_shapes(truth, fitted)?;
    Ok((truth - fitted).norm_squared() / truth.len() as f64)
}

/// `(1/N) sum_i sum_j (truth_ij - fitted_ij)^2`.
pub fn amse_grid_sum(truth: &DMatrix<f64>, fitted: &DMatrix<f64>) -> Result<f64> {
    check_shapes(truth, fitted)?;
    Ok((truth - fitted).norm_squared() / truth.nrows() as f64)
}

/// How squared errors are aggregated over the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AmseScale {
    GridMean,
    GridSum,
}

impl AmseScale {
    pub fn apply(&self, truth: &DMatrix<f64>, fitted: &DMatrix<f64>) -> Result<f64> {
        match self {
            AmseScale::GridMean => amse(truth, fitted),
            AmseScale::GridSum => amse_grid_sum(truth, fitted),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            AmseScale::GridMean => "grid-mean",
            AmseScale::GridSum => "grid-sum",
        }
    }
}

impl std::str::FromStr for AmseScale {
    type Err = FofrError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "grid-mean" | "mean" => Ok(AmseScale::GridMean),
            "grid-sum" | "sum" => Ok(AmseScale::GridSum),
            other => Err(FofrError::Config(format!("unknown AMSE scale '{other}'"))),
        }
    }
}

/// Campaign settings.
#[derive(Debug, Clone, PartialEq)]
pub struct CampaignConfig {
    pub dgp: DgpCase,
    pub mc: usize,
    pub seed: u64,
    pub bases: Vec<BasisKind>,
    pub methods: Vec<FitMethod>,
    pub criteria: Vec<Criterion>,
    /// Number of basis functions used to smooth every variable.
    pub n_basis: usize,
    pub log10_lambda: Vec<f64>,
    /// `None` skips the bootstrap metrics.
    pub bootstrap: Option<BootstrapConfig>,
    pub amse_scale: AmseScale,
    pub mpl: MplOptions,
    /// Worker threads; 0 uses the global pool.
    pub workers: usize,
}

impl CampaignConfig {
    pub fn new(dgp: DgpCase, mc: usize, seed: u64) -> Self {
        CampaignConfig {
            dgp,
            mc,
            seed,
            bases: BasisKind::ALL.to_vec(),
            methods: FitMethod::ALL.to_vec(),
            criteria: Criterion::ALL.to_vec(),
            n_basis: 10,
            log10_lambda: log10_grid(-10.0, 10.0, 100),
            bootstrap: Some(BootstrapConfig { replicates: 500, alpha: 0.05, seed }),
            amse_scale: AmseScale::GridMean,
            mpl: MplOptions::default(),
            workers: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dgp.validate()?;
        if self.mc == 0 {
            return Err(FofrError::Config("MC must be positive".into()));
        }
        if self.bases.is_empty() || self.methods.is_empty() || self.criteria.is_empty() {
            return Err(FofrError::Config("campaign needs at least one basis, method and criterion".into()));
        }
        if self.log10_lambda.is_empty() {
            return Err(FofrError::Config("lambda grid is empty".into()));
        }
        if let Some(b) = &self.bootstrap {
            b.validate()?;
        }
        Ok(())
    }

    pub fn cells(&self) -> Vec<CellKey> {
        let mut out = Vec::new();
        for &basis in &self.bases {
            for &method in &self.methods {
                for &criterion in &self.criteria {
                    out.push(CellKey { basis, method, criterion });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellKey {
    pub basis: BasisKind,
    pub method: FitMethod,
    pub criterion: Criterion,
}

impl fmt::Display for CellKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.basis, self.method, self.criterion)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    Amse,
    Cp,
    Width,
    Score,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Amse, Metric::Cp, Metric::Width, Metric::Score];

    pub fn name(&self) -> &'static str {
        match self {
            Metric::Amse => "AMSE",
            Metric::Cp => "CP",
            Metric::Width => "width",
            Metric::Score => "score",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Metrics of one cell in one replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct CellOutcome {
    pub amse: f64,
    /// Coverage, mean width and mean score, when bootstrapping.
    pub band: Option<(f64, f64, f64)>,
    /// Selected regression lambda (MPL only).
    pub lambda: Option<f64>,
}

/// Everything a replicate produced, keyed by cell.
#[derive(Debug)]
pub struct ReplicateResult {
    pub index: usize,
    pub cells: BTreeMap<CellKey, std::result::Result<CellOutcome, String>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSummary {
    pub mean: f64,
    /// Standard deviation across replicates.
    pub sd: f64,
    /// Standard error of the mean.
    pub se: f64,
    pub count: usize,
}

impl MetricSummary {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(MetricSummary { mean, sd, se: sd / (n as f64).sqrt(), count: n })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub metrics: BTreeMap<Metric, MetricSummary>,
    pub failures: usize,
    /// First failure message, if any.
    pub first_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McResult {
    pub cells: BTreeMap<CellKey, CellSummary>,
    pub replicates: usize,
    pub warnings: Vec<String>,
}

impl McResult {
    pub fn mean(&self, key: CellKey, metric: Metric) -> Option<f64> {
        self.cells.get(&key)?.metrics.get(&metric).map(|m| m.mean)
    }
}

/// Smoothing of one variable for every criterion.
fn smooth_all(
    curves: &SampledCurves,
    kind: BasisKind,
    config: &CampaignConfig,
) -> Result<Vec<Result<SmoothedCurves>>> {
    let basis = BasisSystem::new(kind, curves.domain(), config.n_basis)?;
    select_smoothing_all(curves, &basis, &config.log10_lambda, &config.criteria, DEFAULT_PENALTY_ORDER)
}

/// MPL fit whose shared lambda minimizes `criterion` over the grid.
pub fn select_mpl_lambda(
    design: &DesignBlocks,
    log10_lambda: &[f64],
    criterion: Criterion,
    options: MplOptions,
) -> Result<(FofrModel, f64)> {
    let mut best: Option<(f64, f64, FofrModel)> = None;
    let mut last_err = None;
    for &l in log10_lambda {
        let lambda = 10f64.powf(l);
        let outcome = PenaltySpec::common(design, lambda)
            .and_then(|pen| fit_mpl(design, &pen, options))
            .and_then(|m| evaluate_criterion(design, &m, criterion).map(|r| (m, r.value)));
        match outcome {
            Ok((m, v)) if v.is_finite() => {
                let better = match &best {
                    None => true,
                    Some((bv, bl, _)) => v < *bv || (v == *bv && lambda > *bl),
                };
                if better {
                    best = Some((v, lambda, m));
                }
            }
            Ok(_) => {}
            Err(e) => last_err = Some(e),
        }
    }
    best.map(|(_, l, m)| (m, l)).ok_or_else(|| {
        FofrError::Selection(format!(
            "no lambda produced a usable {criterion} value{}",
            last_err.map(|e| format!(" (last error: {e})")).unwrap_or_default()
        ))
    })
}

fn fitted_curves(design: &DesignBlocks, model: &FofrModel, grid: &[f64]) -> Result<DMatrix<f64>> {
    let ctx = design.context.as_ref().expect("design built from curves");
    let mut coef = design.z.clone() * &model.b;
    for mut row in coef.row_iter_mut() {
        row += ctx.response_mean.transpose();
    }
    Ok(coef * ctx.response_basis.evaluate(grid)?.transpose())
}

fn run_cell(
    data: &SimulatedData,
    x: &SmoothedCurves,
    y: &SmoothedCurves,
    method: FitMethod,
    criterion: Criterion,
    config: &CampaignConfig,
    boot_seed: u64,
) -> Result<CellOutcome> {
    let design = build_design(&center_curves(y)?, &[center_curves(x)?])?;
    let (model, lambda) = match method {
        FitMethod::Ls => (fit_ls(&design)?, None),
        FitMethod::Mpl => {
            let (m, l) = select_mpl_lambda(&design, &config.log10_lambda, criterion, config.mpl)?;
            (m, Some(l))
        }
    };
    let grid = data.response.grid();
    let fitted = fitted_curves(&design, &model, grid)?;
    let amse = config.amse_scale.apply(&data.truth, &fitted)?;
    let band = match &config.bootstrap {
        None => None,
        Some(b) => {
            let smoothed = y.reconstruct(grid)?;
            let errors = ErrorCurves::from_fits(data.response.values(), &smoothed, &fitted)?;
            let refit = Refit { method, lambda: lambda.unwrap_or(0.0), options: config.mpl };
            let cfg = BootstrapConfig { seed: boot_seed, ..*b };
            let band = bootstrap_bands(&design, &errors, &refit, &cfg, grid)?;
            let n = data.truth.nrows();
            let cp = band_coverage(&band, &data.truth)?;
            let width = (0..n).map(|i| band_width(&band, i)).sum::<f64>() / n as f64;
            let score = (0..n)
                .map(|i| interval_score(&band, i, data.truth.row(i).transpose().as_slice()))
                .sum::<f64>()
                / n as f64;
            Some((cp, width, score))
        }
    };
    Ok(CellOutcome { amse, band, lambda })
}

/// Runs every cell of the campaign on replicate `r`.
pub fn run_replicate(config: &CampaignConfig, r: usize) -> ReplicateResult {
    let mut cells = BTreeMap::new();
    let data = match generate(&config.dgp, config.seed, r as u64, NoiseScale::default()) {
        Ok(d) => d,
        Err(e) => {
            for key in config.cells() {
                cells.insert(key, Err(e.to_string()));
            }
            return ReplicateResult { index: r, cells };
        }
    };
    let boot_seed = derive_seed(config.seed, &[r as u64, 0xB007]);
    for &kind in &config.bases {
        let smooth = smooth_all(&data.predictor, kind, config)
            .and_then(|x| smooth_all(&data.response, kind, config).map(|y| (x, y)));
        for (ci, &criterion) in config.criteria.iter().enumerate() {
            for &method in &config.methods {
                let key = CellKey { basis: kind, method, criterion };
                let outcome = match &smooth {
                    Err(e) => Err(e.to_string()),
                    Ok((xs, ys)) => match (&xs[ci], &ys[ci]) {
                        (Ok(x), Ok(y)) => run_cell(&data, x, y, method, criterion, config, boot_seed)
                            .map_err(|e| e.to_string()),
                        (Err(e), _) | (_, Err(e)) => Err(e.to_string()),
                    },
                };
                cells.insert(key, outcome);
            }
        }
    }
    ReplicateResult { index: r, cells }
}

/// Monte Carlo campaign over every (basis, method, criterion) cell.
pub fn run_campaign(config: &CampaignConfig) -> Result<McResult> {
    config.validate()?;
    let work = || (0..config.mc).into_par_iter().map(|r| run_replicate(config, r)).collect::<Vec<_>>();
    let results = if config.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| FofrError::Config(format!("cannot build worker pool: {e}")))?
            .install(work)
    } else {
        work()
    };
    Ok(summarize(config, &results))
}

/// Order-independent reduction of replicate results into cell summaries.
pub fn summarize(config: &CampaignConfig, results: &[ReplicateResult]) -> McResult {
    let mut sorted: Vec<&ReplicateResult> = results.iter().collect();
    sorted.sort_by_key(|r| r.index);
    let mut cells = BTreeMap::new();
    for key in config.cells() {
        let mut values: BTreeMap<Metric, Vec<f64>> = BTreeMap::new();
        let mut failures = 0;
        let mut first_error = None;
        for r in &sorted {
            match r.cells.get(&key) {
                Some(Ok(o)) => {
                    values.entry(Metric::Amse).or_default().push(o.amse);
                    if let Some((cp, w, s)) = o.band {
                        values.entry(Metric::Cp).or_default().push(cp);
                        values.entry(Metric::Width).or_default().push(w);
                        values.entry(Metric::Score).or_default().push(s);
                    }
                }
                Some(Err(e)) => {
                    failures += 1;
                    first_error.get_or_insert_with(|| e.clone());
                }
                None => {}
            }
        }
        let metrics = values
            .into_iter()
            .filter_map(|(m, v)| MetricSummary::from_values(&v).map(|s| (m, s)))
            .collect();
        cells.insert(key, CellSummary { metrics, failures, first_error });
    }
    let mut warnings = Vec::new();
    if results.len() == 1 {
        warnings.push("MC = 1: standard errors are reported as 0".to_string());
    }
    for (k, c) in &cells {
        if c.failures > 0 {
            warnings.push(format!("cell {k}: {} of {} replicates failed", c.failures, results.len()));
        }
    }
    McResult { cells, replicates: results.len(), warnings }
}
