//! Case-resampling bootstrap bands for predicted response curves, and the
//! coverage, width and interval-score summaries used to judge them.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{FofrError, Result};
use crate::regression::{fit_method, DesignBlocks, FitMethod, FofrModel, MplOptions};
use crate::rng::substream;

/// Largest fraction of replicates allowed to fail before giving up.
pub const MAX_SKIPPED_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig { replicates: 500, alpha: 0.05, seed: 0 }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates < 2 {
            return Err(FofrError::Config(format!(
                "bootstrap needs at least 2 replicates, got {}",
                self.replicates
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(FofrError::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        Ok(())
    }
}

/// Smoothing and model errors on the observation grid (`N x J` each).
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorCurves {
    pub smoothing: DMatrix<f64>,
    pub model: DMatrix<f64>,
}

impl ErrorCurves {
    pub fn new(smoothing: DMatrix<f64>, model: DMatrix<f64>) -> Result<Self> {
        if smoothing.shape() != model.shape() {
            return Err(FofrError::Shape(format!(
                "smoothing errors are {:?} but model errors are {:?}",
                smoothing.shape(),
                model.shape()
            )));
        }
        Ok(ErrorCurves { smoothing, model })
    }

    /// `eps_s = Y - smoothed Y` and `eps_p = Y - fitted Y`.
    pub fn from_fits(observed: &DMatrix<f64>, smoothed: &DMatrix<f64>, fitted: &DMatrix<f64>) -> Result<Self> {
        if observed.shape() != smoothed.shape() || observed.shape() != fitted.shape() {
            return Err(FofrError::Shape("observed, smoothed and fitted curves differ in shape".into()));
        }
        Self::new(observed - smoothed, observed - fitted)
    }
}

/// Pointwise band with one row per curve and one column per grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapBand {
    pub lower: DMatrix<f64>,
    pub upper: DMatrix<f64>,
    pub alpha: f64,
    pub replicates_used: usize,
    pub skipped: usize,
}

/// Row indices drawn for one replicate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplicateDraw {
    /// Resampled `(C, Z)` pairs.
    pub cases: Vec<usize>,
    /// Rows of the smoothing-error matrix.
    pub smoothing: Vec<usize>,
    /// Rows of the model-error matrix.
    pub model: Vec<usize>,
}

impl ReplicateDraw {
    /// Draws `n_cases` case indices and `n_out` rows of each error matrix,
    /// all uniformly from `0..n`.
    pub fn sample<R: Rng>(rng: &mut R, n: usize, n_out: usize) -> Self {
        let mut draw = |m: usize| (0..m).map(|_| rng.random_range(0..n)).collect::<Vec<_>>();
        let cases = draw(n);
        let smoothing = draw(n_out);
        let model = draw(n_out);
        ReplicateDraw { cases, smoothing, model }
    }
}

/// Refit settings used inside every replicate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Refit {
    pub method: FitMethod,
    pub lambda: f64,
    pub options: MplOptions,
}

impl Refit {
    pub fn ls() -> Self {
        Refit { method: FitMethod::Ls, lambda: 0.0, options: MplOptions::default() }
    }

    pub fn mpl(lambda: f64) -> Self {
        Refit { method: FitMethod::Mpl, lambda, options: MplOptions::default() }
    }

    fn fit(&self, design: &DesignBlocks) -> Result<FofrModel> {
        match fit_method(design, self.method, self.lambda, self.options) {
            Err(FofrError::Convergence { last, .. }) => Ok(*last),
            other => other,
        }
    }
}

/// Design rows the replicate curves are built from.
enum Rows<'a> {
    /// The resampled rows `Z*` themselves.
    Resampled,
    /// Fixed rows, e.g. held-out curves.
    Fixed(&'a DMatrix<f64>),
}

fn replicate_curves(
    design: &DesignBlocks,
    errors: &ErrorCurves,
    refit: &Refit,
    draw: &ReplicateDraw,
    rows: &Rows<'_>,
    phi_t: &DMatrix<f64>,
) -> Result<Option<DMatrix<f64>>> {
    let ctx = design
        .context
        .as_ref()
        .ok_or_else(|| FofrError::Config("bootstrap needs a design with basis context".into()))?;
    let star = design.resampled(&draw.cases);
    let model = match refit.fit(&star) {
        Ok(m) => m,
        Err(e) if e.is_rank() => return Ok(None),
        Err(e) => return Err(e),
    };
    let mut coef = match rows {
        Rows::Resampled => &star.z * &model.b,
        Rows::Fixed(z) => *z * &model.b,
    };
    for mut row in coef.row_iter_mut() {
        row += ctx.response_mean.transpose();
    }
    let curves = coef * phi_t
        + errors.smoothing.select_rows(&draw.smoothing)
        + errors.model.select_rows(&draw.model);
    Ok(Some(curves))
}

fn run_bands(
    design: &DesignBlocks,
    errors: &ErrorCurves,
    refit: &Refit,
    draws: &[ReplicateDraw],
    alpha: f64,
    grid: &[f64],
    rows: Rows<'_>,
) -> Result<BootstrapBand> {
    let ctx = design
        .context
        .as_ref()
        .ok_or_else(|| FofrError::Config("bootstrap needs a design with basis context".into()))?;
    if design.n() < 2 {
        return Err(FofrError::SampleSize("bootstrap needs N >= 2".into()));
    }
    if errors.smoothing.nrows() != design.n() || errors.smoothing.ncols() != grid.len() {
        return Err(FofrError::Shape("error curves do not match the design and grid".into()));
    }
    let phi_t = ctx.response_basis.evaluate(grid)?.transpose();
    let outcomes: Vec<Result<Option<DMatrix<f64>>>> = draws
        .par_iter()
        .map(|d| replicate_curves(design, errors, refit, d, &rows, &phi_t))
        .collect();
    let mut kept = Vec::with_capacity(draws.len());
    let mut skipped = 0;
    for o in outcomes {
        match o? {
            Some(m) => kept.push(m),
            None => skipped += 1,
        }
    }
    if skipped as f64 > MAX_SKIPPED_FRACTION * draws.len() as f64 || kept.is_empty() {
        return Err(FofrError::Instability { skipped, requested: draws.len() });
    }
    let mut band = bands_from_replicates(&kept, alpha)?;
    band.skipped = skipped;
    Ok(band)
}

fn draws_for(config: &BootstrapConfig, n: usize, n_out: usize) -> Vec<ReplicateDraw> {
    (0..config.replicates)
        .map(|b| ReplicateDraw::sample(&mut substream(config.seed, b as u64), n, n_out))
        .collect()
}

/// Bands for the `N` curves of `design`: every replicate resamples the
/// `(C, Z)` pairs, refits, builds `Z* B* phi(t)` plus the response mean, and
/// adds independently resampled rows of both error matrices.
pub fn bootstrap_bands(
    design: &DesignBlocks,
    errors: &ErrorCurves,
    refit: &Refit,
    config: &BootstrapConfig,
    grid: &[f64],
) -> Result<BootstrapBand> {
    config.validate()?;
    let draws = draws_for(config, design.n(), design.n());
    run_bands(design, errors, refit, &draws, config.alpha, grid, Rows::Resampled)
}

/// As [`bootstrap_bands`] with a caller-supplied list of draws.
pub fn bootstrap_bands_with(
    design: &DesignBlocks,
    errors: &ErrorCurves,
    refit: &Refit,
    draws: &[ReplicateDraw],
    alpha: f64,
    grid: &[f64],
) -> Result<BootstrapBand> {
    run_bands(design, errors, refit, draws, alpha, grid, Rows::Resampled)
}

/// Bands for fixed (typically held-out) centred design rows `z_new`.
pub fn bootstrap_bands_at(
    design: &DesignBlocks,
    errors: &ErrorCurves,
    refit: &Refit,
    config: &BootstrapConfig,
    grid: &[f64],
    z_new: &DMatrix<f64>,
) -> Result<BootstrapBand> {
    config.validate()?;
    if z_new.ncols() != design.p() {
        return Err(FofrError::Shape("new design rows do not match p".into()));
    }
    let draws = draws_for(config, design.n(), z_new.nrows());
    run_bands(design, errors, refit, &draws, config.alpha, grid, Rows::Fixed(z_new))
}

/// Type-7 quantile (linear interpolation between order statistics) of
/// already sorted data.
pub fn quantile_type7(sorted: &[f64], prob: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * prob.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Elementwise `alpha/2` and `1 - alpha/2` quantiles across replicates.
pub fn bands_from_replicates(replicates: &[DMatrix<f64>], alpha: f64) -> Result<BootstrapBand> {
    let first = replicates
        .first()
        .ok_or_else(|| FofrError::Config("no bootstrap replicates".into()))?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(FofrError::Config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let (n, j) = first.shape();
    if replicates.iter().any(|r| r.shape() != (n, j)) {
        return Err(FofrError::Shape("replicates differ in shape".into()));
    }
    let mut lower = DMatrix::zeros(n, j);
    let mut upper = DMatrix::zeros(n, j);
    let mut buf = vec![0.0; replicates.len()];
    for c in 0..j {
        for r in 0..n {
            for (b, rep) in buf.iter_mut().zip(replicates) {
                *b = rep[(r, c)];
            }
            buf.sort_by(f64::total_cmp);
            lower[(r, c)] = quantile_type7(&buf, alpha / 2.0);
            upper[(r, c)] = quantile_type7(&buf, 1.0 - alpha / 2.0);
        }
    }
    Ok(BootstrapBand { lower, upper, alpha, replicates_used: replicates.len(), skipped: 0 })
}

fn check_truth(band: &BootstrapBand, truth: &DMatrix<f64>) -> Result<()> {
    if band.lower.shape() != truth.shape() {
        return Err(FofrError::Shape(format!(
            "band is {:?} but truth is {:?}",
            band.lower.shape(),
            truth.shape()
        )));
    }
    Ok(())
}

/// Fraction of (curve, grid point) pairs whose truth lies inside the band.
pub fn band_coverage(band: &BootstrapBand, truth: &DMatrix<f64>) -> Result<f64> {
    check_truth(band, truth)?;
    let inside = truth
        .iter()
        .zip(band.lower.iter().zip(band.upper.iter()))
        .filter(|(t, (l, u))| *l <= *t && *t <= *u)
        .count();
    Ok(inside as f64 / truth.len() as f64)
}

/// Coverage pooled over several bands (e.g. Monte Carlo replicates).
pub fn coverage_probability(bands: &[BootstrapBand], truths: &[DMatrix<f64>]) -> Result<f64> {
    if bands.len() != truths.len() || bands.is_empty() {
        return Err(FofrError::Shape("need one truth matrix per band".into()));
    }
    let mut total = 0.0;
    for (b, t) in bands.iter().zip(truths) {
        total += band_coverage(b, t)?;
    }
    Ok(total / bands.len() as f64)
}

/// Sum of the band gap over the grid for curve `i`.
pub fn band_width(band: &BootstrapBand, i: usize) -> f64 {
    band.upper.row(i).iter().zip(band.lower.row(i).iter()).map(|(u, l)| u - l).sum()
}

/// Interval score of curve `i`, averaged over the grid.
pub fn interval_score(band: &BootstrapBand, i: usize, truth: &[f64]) -> f64 {
    let a = band.alpha;
    let j = truth.len();
    let mut acc = 0.0;
    for (c, &eta) in truth.iter().enumerate() {
        let l = band.lower[(i, c)];
        let u = band.upper[(i, c)];
        acc += u - l;
        if eta < l {
            acc += 2.0 / a * (l - eta);
        }
        if eta > u {
            acc += 2.0 / a * (eta - u);
        }
    }
    acc / j as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn band(lower: &[f64], upper: &[f64]) -> BootstrapBand {
        BootstrapBand {
            lower: DMatrix::from_row_slice(1, lower.len(), lower),
            upper: DMatrix::from_row_slice(1, upper.len(), upper),
            alpha: 0.05,
            replicates_used: 2,
            skipped: 0,
        }
    }

    #[test]
    fn score_penalizes_misses_symmetrically() {
        let b = band(&[1.0], &[2.0]);
        assert!((interval_score(&b, 0, &[0.5]) - 21.0).abs() < 1e-12);
        assert!((interval_score(&b, 0, &[2.5]) - 21.0).abs() < 1e-12);
        assert!((interval_score(&b, 0, &[1.5]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn width_sums_over_grid() {
        let b = band(&[0.0, 0.0, 0.0], &[1.0, 2.0, 3.0]);
        assert_eq!(band_width(&b, 0), 6.0);
    }

    #[test]
    fn coverage_counts_points() {
        let b = band(&[0.0, 0.0], &[1.0, 1.0]);
        let t = DMatrix::from_row_slice(1, 2, &[0.5, 2.0]);
        assert_eq!(band_coverage(&b, &t).unwrap(), 0.5);
    }

    #[test]
    fn type7_interpolates() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_type7(&x, 0.0), 1.0);
        assert_eq!(quantile_type7(&x, 1.0), 4.0);
        assert!((quantile_type7(&x, 0.5) - 2.5).abs() < 1e-15);
        assert!((quantile_type7(&x, 0.025) - 1.075).abs() < 1e-12);
    }

    #[test]
    fn config_checks() {
        assert!(BootstrapConfig { replicates: 1, ..Default::default() }.validate().is_err());
        assert!(BootstrapConfig { alpha: 1.0, ..Default::default() }.validate().is_err());
    }
}
