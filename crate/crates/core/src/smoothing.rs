//! Roughness-penalized basis smoothing of discretely sampled curves.

use nalgebra::{DMatrix, DVector};

use crate::basis::{BasisKind, BasisSystem, Domain, PenaltyMatrix};
use crate::criteria::Criterion;
use crate::error::{FofrError, Result};
use crate::linalg::{
    pseudo_log_det, scaled_condition, solve_symmetric, symmetrize,
    MAX_CONDITION,
};

/// Default derivative order of the roughness penalty.
pub const DEFAULT_PENALTY_ORDER: usize = 2;

/// `N` curves observed on a shared, strictly increasing grid of `J` points.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledCurves {
    grid: Vec<f64>,
    values: DMatrix<f64>,
    label: String,
    curve_labels: Vec<String>,
    domain: Domain,
}

impl SampledCurves {
    /// Curves whose domain is the span of the grid.
    pub fn new(grid: Vec<f64>, values: DMatrix<f64>, label: impl Into<String>) -> Result<Self> {
        let domain = Domain::from_points(&grid)?;
        Self::with_domain(grid, values, label, domain)
    }

    pub fn with_domain(
        grid: Vec<f64>,
        values: DMatrix<f64>,
        label: impl Into<String>,
        domain: Domain,
    ) -> Result<Self> {
        if grid.len() < 2 {
            return Err(FofrError::Config("a curve needs at least two grid points".into()));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(FofrError::Config("grid must be strictly increasing".into()));
        }
        if let Some(t) = grid.iter().find(|t| !domain.contains(**t)) {
            return Err(FofrError::Domain { point: *t, lower: domain.lower, upper: domain.upper });
        }
        if values.ncols() != grid.len() {
            return Err(FofrError::Shape(format!(
                "values have {} columns but the grid has {} points",
                values.ncols(),
                grid.len()
            )));
        }
        if values.nrows() == 0 {
            return Err(FofrError::SampleSize("no curves supplied".into()));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let (r, c) = (pos % values.nrows(), pos / values.nrows());
            return Err(FofrError::Numeric(format!("non-finite value at curve {r}, point {c}")));
        }
        let curve_labels = (1..=values.nrows()).map(|i| i.to_string()).collect();
        Ok(SampledCurves { grid, values, label: label.into(), curve_labels, domain })
    }

    pub fn with_curve_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.values.nrows() {
            return Err(FofrError::Shape(format!(
                "{} labels for {} curves",
                labels.len(),
                self.values.nrows()
            )));
        }
        self.curve_labels = labels;
        Ok(self)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// `N x J` matrix of observations.
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn curve_labels(&self) -> &[String] {
        &self.curve_labels
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn n_curves(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_points(&self) -> usize {
        self.grid.len()
    }

    /// Subset of the curves, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> SampledCurves {
        SampledCurves {
            grid: self.grid.clone(),
            values: self.values.select_rows(rows),
            label: self.label.clone(),
            curve_labels: rows.iter().map(|&r| self.curve_labels[r].clone()).collect(),
            domain: self.domain,
        }
    }
}

/// Basis-coefficient representation of a set of curves.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedCurves {
    /// `N x K` coefficients.
    pub coefficients: DMatrix<f64>,
    pub basis: BasisSystem,
    pub lambda: f64,
    pub penalty: PenaltyMatrix,
    /// Trace of the smoother matrix.
    pub df: f64,
    pub rss: f64,
    pub criterion: Option<Criterion>,
    pub criterion_value: Option<f64>,
}

impl SmoothedCurves {
    /// Curves evaluated at `points` (`N x |points|`).
    pub fn reconstruct(&self, points: &[f64]) -> Result<DMatrix<f64>> {
        let phi = self.basis.evaluate(points)?;
        Ok(&self.coefficients * phi.transpose())
    }

    pub fn n_curves(&self) -> usize {
        self.coefficients.nrows()
    }

    pub fn select_rows(&self, rows: &[usize]) -> SmoothedCurves {
        SmoothedCurves { coefficients: self.coefficients.select_rows(rows), ..self.clone() }
    }
}

/// Candidate values searched during selection.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionGrid {
    pub log10_lambda: Vec<f64>,
    pub k_candidates: Vec<usize>,
}

impl Default for SelectionGrid {
    fn default() -> Self {
        SelectionGrid { log10_lambda: log10_grid(-10.0, 10.0, 100), k_candidates: (4..=20).collect() }
    }
}

impl SelectionGrid {
    pub fn new(lower: f64, upper: f64, size: usize) -> Result<Self> {
        let grid = SelectionGrid {
            log10_lambda: log10_grid(lower, upper, size),
            ..SelectionGrid::default()
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn with_k(mut self, k_candidates: Vec<usize>) -> Self {
        self.k_candidates = k_candidates;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.log10_lambda.is_empty() || self.k_candidates.is_empty() {
            return Err(FofrError::Config("selection grid is empty".into()));
        }
        if self.log10_lambda.iter().any(|v| !v.is_finite()) {
            return Err(FofrError::Config("log10 lambda values must be finite".into()));
        }
        Ok(())
    }

    pub fn lambdas(&self) -> impl Iterator<Item = f64> + '_ {
        self.log10_lambda.iter().map(|v| 10f64.powf(*v))
    }
}

/// `size` equally spaced values on `[lower, upper]`.
pub fn log10_grid(lower: f64, upper: f64, size: usize) -> Vec<f64> {
    match size {
        0 => Vec::new(),
        1 => vec![lower],
        _ => {
            let step = (upper - lower) / (size - 1) as f64;
            (0..size).map(|i| lower + i as f64 * step).collect()
        }
    }
}

/// Pieces of a penalized fit that do not depend on `lambda`, so a sweep over
/// the grid only re-solves a `K x K` system.
#[derive(Debug, Clone)]
pub struct SmoothingProblem<'a> {
    curves: &'a SampledCurves,
    basis: BasisSystem,
    phi: DMatrix<f64>,
    cross: DMatrix<f64>,
    penalty: PenaltyMatrix,
    projected: DMatrix<f64>,
    penalty_log_det: (f64, usize),
    spectral: Option<Spectral>,
}

/// `L^{-1} R L^{-T} = U diag(gamma) U^T` with `Phi^T Phi = L L^T`. Solving in
/// this basis keeps the unpenalized directions exact at any `lambda`, and
/// gives `df = sum 1 / (1 + lambda gamma)`.
#[derive(Debug, Clone)]
struct Spectral {
    l: DMatrix<f64>,
    u: DMatrix<f64>,
    gamma: Vec<f64>,
}

impl Spectral {
    fn new(cross: &DMatrix<f64>, penalty: &DMatrix<f64>) -> Option<Self> {
        let l = cross.clone().cholesky()?.l();
        let half = l.solve_lower_triangular(penalty)?;
        let full = symmetrize(&l.solve_lower_triangular(&half.transpose())?);
        let k = full.nrows();
        let eig = full.symmetric_eigen();
        let top = eig.eigenvalues.amax();
        let floor = top * f64::EPSILON * k as f64 * 16.0;
        let gamma = eig.eigenvalues.iter().map(|&g| if g > floor { g } else { 0.0 }).collect();
        Some(Spectral { l, u: eig.eigenvectors, gamma })
    }

    /// Solves `(Phi^T Phi + lambda R) X = B`.
    fn solve(&self, lambda: f64, b: &DMatrix<f64>) -> DMatrix<f64> {
        let lt = self.l.transpose();
        let mut w = self.u.transpose() * self.l.solve_lower_triangular(b).expect("nonsingular factor");
        for (mut row, g) in w.row_iter_mut().zip(&self.gamma) {
            row /= 1.0 + lambda * g;
        }
        lt.solve_upper_triangular(&(&self.u * w)).expect("nonsingular factor")
    }
}

/// One evaluated grid point of a [`SmoothingProblem`].
#[derive(Debug, Clone)]
pub struct SmoothingFit {
    pub lambda: f64,
    /// `N x K`.
    pub coefficients: DMatrix<f64>,
    /// `N x J`.
    pub residuals: DMatrix<f64>,
    pub df: f64,
    /// `Phi^T Phi + lambda R`.
    pub system: DMatrix<f64>,
}

impl SmoothingFit {
    pub fn rss(&self) -> f64 {
        self.residuals.norm_squared()
    }
}

impl<'a> SmoothingProblem<'a> {
    pub fn new(curves: &'a SampledCurves, basis: &BasisSystem, n: usize) -> Result<Self> {
        if basis.domain() != curves.domain() {
            return Err(FofrError::Config(format!(
                "basis domain [{}, {}] differs from the curve domain [{}, {}]",
                basis.domain().lower,
                basis.domain().upper,
                curves.domain().lower,
                curves.domain().upper
            )));
        }
        let phi = basis.evaluate(curves.grid())?;
        let cross = phi.transpose() * &phi;
        let penalty = basis.penalty(n)?;
        let projected = curves.values() * &phi;
        let penalty_log_det = pseudo_log_det(&penalty.values);
        let spectral = Spectral::new(&cross, &penalty.values);
        Ok(SmoothingProblem {
            curves,
            basis: basis.clone(),
            phi,
            cross,
            penalty,
            projected,
            penalty_log_det,
            spectral,
        })
    }

    pub fn basis(&self) -> &BasisSystem {
        &self.basis
    }

    pub fn curves(&self) -> &SampledCurves {
        self.curves
    }

    /// Basis evaluated at the grid (`J x K`).
    pub fn design(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn fit(&self, lambda: f64) -> Result<SmoothingFit> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(FofrError::Config(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        let system = symmetrize(&(&self.cross + &self.penalty.values * lambda));
        let k = self.basis.n_basis();
        let j = self.curves.n_points();
        if scaled_condition(&system) >= MAX_CONDITION {
            let hint = if lambda == 0.0 && k > j {
                format!("K = {k} exceeds J = {j}; use lambda > 0 or a smaller K")
            } else {
                "use a larger lambda or a smaller K".to_string()
            };
            return Err(FofrError::Rank(format!(
                "penalized normal equations are ill-conditioned at lambda = {lambda:e}: {hint}"
            )));
        }
        let coef_t = match &self.spectral {
            Some(sp) => sp.solve(lambda, &self.projected.transpose()),
            None => solve_symmetric(&system, &self.projected.transpose())?,
        };
        let coefficients = coef_t.transpose();
        let residuals = self.curves.values() - &coefficients * self.phi.transpose();
        let df = match &self.spectral {
            Some(sp) => sp.gamma.iter().map(|g| 1.0 / (1.0 + lambda * g)).sum(),
            None => solve_symmetric(&system, &self.cross)?.trace(),
        };
        Ok(SmoothingFit { lambda, coefficients, residuals, df, system })
    }

    pub fn to_smoothed(&self, fit: SmoothingFit, criterion: Option<(Criterion, f64)>) -> SmoothedCurves {
        let rss = fit.rss();
        SmoothedCurves {
            coefficients: fit.coefficients,
            basis: self.basis.clone(),
            lambda: fit.lambda,
            penalty: self.penalty.clone(),
            df: fit.df,
            rss,
            criterion: criterion.map(|c| c.0),
            criterion_value: criterion.map(|c| c.1),
        }
    }

    /// Value of a smoothing-stage criterion at one fit.
    pub fn criterion(&self, fit: &SmoothingFit, criterion: Criterion) -> Result<f64> {
        match criterion {
            Criterion::Gcv => gcv_value(fit.rss(), fit.df, self.curves.n_curves(), self.curves.n_points()),
            Criterion::Maic => Ok(self.maic(fit)),
            Criterion::Gic => self.gic(fit),
            Criterion::Gbic => self.gbic(fit),
        }
    }

    fn variances(&self, fit: &SmoothingFit) -> Vec<f64> {
        let j = self.curves.n_points() as f64;
        (0..fit.residuals.nrows())
            .map(|i| {
                let rss = fit.residuals.row(i).norm_squared();
                let scale = self.curves.values().row(i).norm_squared() / j;
                (rss / j).max(1e-14 * scale).max(f64::MIN_POSITIVE)
            })
            .collect()
    }

    fn neg2_loglik(&self, fit: &SmoothingFit, variances: &[f64]) -> f64 {
        let j = self.curves.n_points() as f64;
        variances
            .iter()
            .enumerate()
            .map(|(i, s2)| {
                let rss = fit.residuals.row(i).norm_squared();
                j * (2.0 * std::f64::consts::PI * s2).ln() + rss / s2
            })
            .sum()
    }

    fn maic(&self, fit: &SmoothingFit) -> f64 {
        let s2 = self.variances(fit);
        self.neg2_loglik(fit, &s2) + 2.0 * self.curves.n_curves() as f64 * fit.df
    }

    /// Per-curve information matrices of the working model in `(c, sigma^2)`.
    fn curve_information(
        &self,
        fit: &SmoothingFit,
        i: usize,
        s2: f64,
    ) -> (DMatrix<f64>, DMatrix<f64>) {
        let k = self.basis.n_basis();
        let jn = self.curves.n_points();
        let j = jn as f64;
        let e = fit.residuals.row(i).transpose();
        let c = fit.coefficients.row(i).transpose();
        let s4 = s2 * s2;

        let mut r = DMatrix::zeros(k + 1, k + 1);
        r.view_mut((0, 0), (k, k)).copy_from(&(&fit.system / (j * s2)));
        let phite = self.phi.transpose() * &e / (j * s4);
        r.view_mut((0, k), (k, 1)).copy_from(&phite);
        r.view_mut((k, 0), (1, k)).copy_from(&phite.transpose());
        r[(k, k)] = 1.0 / (2.0 * s4);

        let shift = &self.penalty.values * &c * (fit.lambda / (j * s2));
        let mut q = DMatrix::zeros(k + 1, k + 1);
        let mut g = DVector::zeros(k + 1);
        for t in 0..jn {
            for a in 0..k {
                g[a] = self.phi[(t, a)] * e[t] / s2;
            }
            g[k] = (e[t] * e[t] / s2 - 1.0) / (2.0 * s2);
            let mut gt = g.clone();
            for a in 0..k {
                gt[a] -= shift[a];
            }
            q.ger(1.0 / j, &gt, &g, 1.0);
        }
        (r, q)
    }

    fn gic(&self, fit: &SmoothingFit) -> Result<f64> {
        let s2 = self.variances(fit);
        let mut bias = 0.0;
        for (i, v) in s2.iter().enumerate() {
            let (r, q) = self.curve_information(fit, i, *v);
            bias += solve_symmetric(&r, &q)?.trace();
        }
        Ok(self.neg2_loglik(fit, &s2) + 2.0 * bias)
    }

    fn gbic(&self, fit: &SmoothingFit) -> Result<f64> {
        if fit.lambda <= 0.0 {
            return Err(FofrError::Inapplicable("GBIC needs lambda > 0".into()));
        }
        let s2 = self.variances(fit);
        let k = self.basis.n_basis();
        let j = self.curves.n_points() as f64;
        let (log_det_pen, rank) = self.penalty_log_det;
        let q = (k - rank) as f64;
        let two_pi = 2.0 * std::f64::consts::PI;
        let mut total = self.neg2_loglik(fit, &s2);
        for (i, v) in s2.iter().enumerate() {
            let c = fit.coefficients.row(i).transpose();
            let rough = (c.transpose() * &self.penalty.values * &c)[(0, 0)];
            let beta = fit.lambda / (j * v);
            let (r, _) = self.curve_information(fit, i, *v);
            let log_det_r = crate::linalg::log_abs_det(&r)?;
            total += fit.lambda * rough / v + (q + 1.0) * (j.ln() - two_pi.ln())
                - (rank as f64 * beta.ln() + log_det_pen)
                + log_det_r;
        }
        Ok(total)
    }
}

fn gcv_value(rss: f64, df: f64, n: usize, j: usize) -> Result<f64> {
    let denom = 1.0 - df / j as f64;
    if denom <= 1e-12 {
        return Err(FofrError::Numeric(format!(
            "GCV undefined: effective degrees of freedom {df} reach the {j} grid points"
        )));
    }
    Ok(rss / (n * j) as f64 / (denom * denom))
}

/// Penalized least-squares fit of every curve at a fixed `lambda`.
pub fn penalized_fit(
    curves: &SampledCurves,
    basis: &BasisSystem,
    lambda: f64,
    n: usize,
) -> Result<SmoothedCurves> {
    let problem = SmoothingProblem::new(curves, basis, n)?;
    let fit = problem.fit(lambda)?;
    Ok(problem.to_smoothed(fit, None))
}

/// Generalized cross-validation score of a smoothing fit.
pub fn smoothing_gcv(curves: &SampledCurves, fit: &SmoothedCurves) -> Result<f64> {
    let fitted = fit.reconstruct(curves.grid())?;
    let rss = (curves.values() - fitted).norm_squared();
    gcv_value(rss, fit.df, curves.n_curves(), curves.n_points())
}

#[derive(Debug, Clone, Copy)]
struct Best {
    value: f64,
    lambda: f64,
    k: usize,
}

impl Best {
    fn beats(&self, other: &Option<Best>) -> bool {
        match other {
            None => true,
            Some(o) => {
                self.value < o.value
                    || (self.value == o.value
                        && (self.lambda > o.lambda || (self.lambda == o.lambda && self.k < o.k)))
            }
        }
    }
}

/// Chooses `lambda` (and `K` unless `fix_k` is given) by minimizing a
/// criterion; ties go to the larger `lambda`, then the smaller `K`.
pub fn select_smoothing(
    curves: &SampledCurves,
    kind: BasisKind,
    grid: &SelectionGrid,
    criterion: Criterion,
    fix_k: Option<usize>,
    n: usize,
) -> Result<SmoothedCurves> {
    grid.validate()?;
    let ks = match fix_k {
        Some(k) => vec![k],
        None => grid.k_candidates.iter().cloned().filter(|k| *k >= kind.min_size()).collect(),
    };
    let mut best: Option<Best> = None;
    let mut best_fit = None;
    let mut last_err = None;
    for k in ks {
        let basis = match BasisSystem::new(kind, curves.domain(), k) {
            Ok(b) => b,
            Err(e) if fix_k.is_some() => return Err(e),
            Err(e) => {
                last_err = Some(e);
                continue;
            }
        };
        let problem = SmoothingProblem::new(curves, &basis, n)?;
        for lambda in grid.lambdas() {
            let outcome = problem.fit(lambda).and_then(|fit| {
                let v = problem.criterion(&fit, criterion)?;
                Ok((fit, v))
            });
            match outcome {
                Ok((fit, value)) if value.is_finite() => {
                    let cand = Best { value, lambda, k };
                    if cand.beats(&best) {
                        best = Some(cand);
                        best_fit = Some(problem.to_smoothed(fit, Some((criterion, value))));
                    }
                }
                Ok(_) => {}
                Err(e) => last_err = Some(e),
            }
        }
    }
    best_fit.ok_or_else(|| {
        FofrError::Selection(format!(
            "no grid point produced a usable {criterion} value{}",
            last_err.map(|e| format!(" (last error: {e})")).unwrap_or_default()
        ))
    })
}

/// Selects `lambda` for a fixed basis under several criteria in one sweep.
pub fn select_smoothing_all(
    curves: &SampledCurves,
    basis: &BasisSystem,
    log10_lambda: &[f64],
    criteria: &[Criterion],
    n: usize,
) -> Result<Vec<Result<SmoothedCurves>>> {
    if log10_lambda.is_empty() {
        return Err(FofrError::Config("selection grid is empty".into()));
    }
    let problem = SmoothingProblem::new(curves, basis, n)?;
    let mut best: Vec<Option<(f64, SmoothingFit)>> = vec![None; criteria.len()];
    for &l in log10_lambda {
        let lambda = 10f64.powf(l);
        let Ok(fit) = problem.fit(lambda) else { continue };
        for (slot, c) in best.iter_mut().zip(criteria) {
            let Ok(v) = problem.criterion(&fit, *c) else { continue };
            if !v.is_finite() {
                continue;
            }
            let better = match slot {
                None => true,
                Some((bv, bf)) => v < *bv || (v == *bv && lambda > bf.lambda),
            };
            if better {
                *slot = Some((v, fit.clone()));
            }
        }
    }
    Ok(best
        .into_iter()
        .zip(criteria)
        .map(|(slot, c)| {
            slot.map(|(v, fit)| problem.to_smoothed(fit, Some((*c, v)))).ok_or_else(|| {
                FofrError::Selection(format!("no grid point produced a usable {c} value"))
            })
        })
        .collect())
}
