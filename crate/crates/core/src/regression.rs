//! Function-on-function linear regression in basis-coefficient space.
//!
//! With centred response coefficients `C` (`N x K_Y`) and the predictor design
//! `Z` (`N x p`, block `m` equal to `D_m * Gram(psi_m)`), the model is
//! `C = Z B + E` with rows of `E` distributed `N(0, Sigma)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::basis::BasisSystem;
use crate::error::{FofrError, Result};
use crate::linalg::{block_diagonal, scaled_condition, solve_symmetric, symmetrize, vec_of, unvec, MAX_CONDITION};
use crate::smoothing::SmoothedCurves;

/// Smoothed curves with their column means removed.
#[derive(Debug, Clone, PartialEq)]
pub struct CenteredCurves {
    pub curves: SmoothedCurves,
    pub mean: DVector<f64>,
}

pub fn center_curves(smoothed: &SmoothedCurves) -> Result<CenteredCurves> {
    let n = smoothed.n_curves();
    if n < 2 {
        return Err(FofrError::SampleSize(format!("centering needs N >= 2, got {n}")));
    }
    let mean = smoothed.coefficients.row_mean().transpose();
    let mut curves = smoothed.clone();
    for mut row in curves.coefficients.row_iter_mut() {
        row -= mean.transpose();
    }
    Ok(CenteredCurves { curves, mean })
}

/// Bases and centring means needed to map new curves through a fitted model.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignContext {
    pub response_basis: BasisSystem,
    pub predictor_bases: Vec<BasisSystem>,
    pub response_mean: DVector<f64>,
    pub predictor_means: Vec<DVector<f64>>,
    pub predictor_grams: Vec<DMatrix<f64>>,
    pub predictor_penalties: Vec<DMatrix<f64>>,
}

/// Regression design in coefficient space.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignBlocks {
    /// `N x p`.
    pub z: DMatrix<f64>,
    /// `N x K_Y`.
    pub c: DMatrix<f64>,
    /// Gram matrix of the response basis.
    pub zeta_phi: DMatrix<f64>,
    pub block_sizes: Vec<usize>,
    pub context: Option<DesignContext>,
}

impl DesignBlocks {
    pub fn from_parts(
        z: DMatrix<f64>,
        c: DMatrix<f64>,
        zeta_phi: DMatrix<f64>,
        block_sizes: Vec<usize>,
    ) -> Result<Self> {
        if z.nrows() != c.nrows() {
            return Err(FofrError::Shape(format!("Z has {} rows, C has {}", z.nrows(), c.nrows())));
        }
        if block_sizes.iter().sum::<usize>() != z.ncols() {
            return Err(FofrError::Shape(format!(
                "block sizes sum to {} but Z has {} columns",
                block_sizes.iter().sum::<usize>(),
                z.ncols()
            )));
        }
        if zeta_phi.nrows() != c.ncols() || zeta_phi.ncols() != c.ncols() {
            return Err(FofrError::Shape("response Gram does not match K_Y".into()));
        }
        if z.iter().chain(c.iter()).any(|v| !v.is_finite()) {
            return Err(FofrError::Numeric("design contains non-finite values".into()));
        }
        Ok(DesignBlocks { z, c, zeta_phi, block_sizes, context: None })
    }

    pub fn n(&self) -> usize {
        self.z.nrows()
    }

    pub fn p(&self) -> usize {
        self.z.ncols()
    }

    pub fn k_y(&self) -> usize {
        self.c.ncols()
    }

    /// Design built from a subset (possibly repeated) of the rows.
    pub fn resampled(&self, rows: &[usize]) -> DesignBlocks {
        DesignBlocks {
            z: self.z.select_rows(rows),
            c: self.c.select_rows(rows),
            zeta_phi: self.zeta_phi.clone(),
            block_sizes: self.block_sizes.clone(),
            context: self.context.clone(),
        }
    }

    /// Offsets of each predictor block within the columns of `Z`.
    pub fn block_offsets(&self) -> Vec<usize> {
        block_offsets(&self.block_sizes)
    }
}

fn block_offsets(sizes: &[usize]) -> Vec<usize> {
    sizes
        .iter()
        .scan(0, |acc, s| {
            let o = *acc;
            *acc += s;
            Some(o)
        })
        .collect()
}

/// Assembles `Z` and `C` from centred response and predictor curves.
pub fn build_design(response: &CenteredCurves, predictors: &[CenteredCurves]) -> Result<DesignBlocks> {
    if predictors.is_empty() {
        return Err(FofrError::Config("at least one predictor is required".into()));
    }
    let n = response.curves.n_curves();
    for (m, p) in predictors.iter().enumerate() {
        if p.curves.n_curves() != n {
            return Err(FofrError::Shape(format!(
                "predictor {} has {} curves, response has {n}",
                m + 1,
                p.curves.n_curves()
            )));
        }
    }
    let grams: Vec<DMatrix<f64>> = predictors.iter().map(|p| p.curves.basis.gram().values).collect();
    let penalties = predictors
        .iter()
        .map(|p| p.curves.basis.penalty(2).map(|r| r.values))
        .collect::<Result<Vec<_>>>()?;
    let blocks: Vec<DMatrix<f64>> =
        predictors.iter().zip(&grams).map(|(p, g)| &p.curves.coefficients * g).collect();
    let block_sizes: Vec<usize> = blocks.iter().map(|b| b.ncols()).collect();
    let mut z = DMatrix::zeros(n, block_sizes.iter().sum());
    for (b, off) in blocks.iter().zip(block_offsets(&block_sizes)) {
        z.view_mut((0, off), (n, b.ncols())).copy_from(b);
    }
    let mut design = DesignBlocks::from_parts(
        z,
        response.curves.coefficients.clone(),
        response.curves.basis.gram().values,
        block_sizes,
    )?;
    design.context = Some(DesignContext {
        response_basis: response.curves.basis.clone(),
        predictor_bases: predictors.iter().map(|p| p.curves.basis.clone()).collect(),
        response_mean: response.mean.clone(),
        predictor_means: predictors.iter().map(|p| p.mean.clone()).collect(),
        predictor_grams: grams,
        predictor_penalties: penalties,
    });
    Ok(design)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FitMethod {
    Ls,
    Mpl,
}

impl FitMethod {
    pub const ALL: [FitMethod; 2] = [FitMethod::Ls, FitMethod::Mpl];

    pub fn name(&self) -> &'static str {
        match self {
            FitMethod::Ls => "LS",
            FitMethod::Mpl => "MPL",
        }
    }
}

impl std::fmt::Display for FitMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for FitMethod {
    type Err = FofrError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ls" => Ok(FitMethod::Ls),
            "mpl" => Ok(FitMethod::Mpl),
            other => Err(FofrError::Config(format!("unknown fit method '{other}'"))),
        }
    }
}

/// Per-predictor smoothing weights and the block-diagonal roughness matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltySpec {
    pub lambdas: Vec<f64>,
    pub omega: DMatrix<f64>,
    pub block_sizes: Vec<usize>,
}

impl PenaltySpec {
    pub fn new(lambdas: Vec<f64>, blocks: &[DMatrix<f64>]) -> Result<Self> {
        if lambdas.len() != blocks.len() {
            return Err(FofrError::Shape(format!(
                "{} lambdas for {} predictor blocks",
                lambdas.len(),
                blocks.len()
            )));
        }
        if lambdas.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
            return Err(FofrError::Config("penalty weights must be finite and >= 0".into()));
        }
        Ok(PenaltySpec {
            lambdas,
            omega: block_diagonal(blocks),
            block_sizes: blocks.iter().map(|b| b.nrows()).collect(),
        })
    }

    /// Roughness penalty of each predictor basis, weighted per predictor.
    pub fn from_design(design: &DesignBlocks, lambdas: Vec<f64>) -> Result<Self> {
        let ctx = design.context.as_ref().ok_or_else(|| {
            FofrError::Config("design has no basis context; build Omega explicitly".into())
        })?;
        Self::new(lambdas, &ctx.predictor_penalties)
    }

    /// One shared weight for every predictor.
    pub fn common(design: &DesignBlocks, lambda: f64) -> Result<Self> {
        Self::from_design(design, vec![lambda; design.block_sizes.len()])
    }

    /// `Lambda_M ⊙ Omega`: block `(m, l)` of `Omega` scaled by `sqrt(lambda_m lambda_l)`.
    pub fn weighted(&self) -> DMatrix<f64> {
        let offsets = block_offsets(&self.block_sizes);
        let mut scale = Vec::with_capacity(self.omega.nrows());
        for (m, s) in self.block_sizes.iter().enumerate() {
            scale.extend(std::iter::repeat_n(self.lambdas[m].sqrt(), *s));
        }
        debug_assert_eq!(offsets.len(), self.lambdas.len());
        DMatrix::from_fn(self.omega.nrows(), self.omega.ncols(), |i, j| {
            self.omega[(i, j)] * scale[i] * scale[j]
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MplOptions {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for MplOptions {
    fn default() -> Self {
        MplOptions { max_iter: 100, tol: 1e-8 }
    }
}

/// A fitted coefficient matrix with its error covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct FofrModel {
    /// `p x K_Y`.
    pub b: DMatrix<f64>,
    /// `K_Y x K_Y`.
    pub sigma: DMatrix<f64>,
    pub method: FitMethod,
    pub lambdas: Vec<f64>,
    pub omega: DMatrix<f64>,
    pub iterations: usize,
    pub block_sizes: Vec<usize>,
    pub context: Option<DesignContext>,
}

impl FofrModel {
    /// `Lambda_M ⊙ Omega` (zero for least squares).
    pub fn weighted_penalty(&self) -> DMatrix<f64> {
        PenaltySpec {
            lambdas: self.lambdas.clone(),
            omega: self.omega.clone(),
            block_sizes: self.block_sizes.clone(),
        }
        .weighted()
    }

    /// `Z B`.
    pub fn fitted_coefficients(&self, design: &DesignBlocks) -> DMatrix<f64> {
        &design.z * &self.b
    }

    pub fn residuals(&self, design: &DesignBlocks) -> DMatrix<f64> {
        &design.c - &design.z * &self.b
    }

    /// Block of `B` belonging to predictor `m` (zero-based).
    pub fn block(&self, m: usize) -> Result<DMatrix<f64>> {
        if m >= self.block_sizes.len() {
            return Err(FofrError::Config(format!(
                "predictor index {} out of range 1..={}",
                m + 1,
                self.block_sizes.len()
            )));
        }
        let off = block_offsets(&self.block_sizes)[m];
        Ok(self.b.rows(off, self.block_sizes[m]).into_owned())
    }
}

fn check_ls_system(design: &DesignBlocks) -> Result<DMatrix<f64>> {
    let g = symmetrize(&(design.z.transpose() * &design.z));
    if design.p() > design.n() {
        return Err(FofrError::Rank(format!(
            "Z'Z is singular: p = {} predictor coefficients exceed N = {} curves",
            design.p(),
            design.n()
        )));
    }
    let cond = scaled_condition(&g);
    if cond >= MAX_CONDITION {
        return Err(FofrError::Rank(format!(
            "Z'Z ({}x{}) is singular or ill-conditioned (condition {cond:.3e}); \
             a predictor block is collinear",
            design.p(),
            design.p()
        )));
    }
    Ok(g)
}

fn residual_moment(design: &DesignBlocks, b: &DMatrix<f64>) -> DMatrix<f64> {
    let e = &design.c - &design.z * b;
    symmetrize(&(e.transpose() * &e / design.n() as f64))
}

fn ls_model(design: &DesignBlocks, b: DMatrix<f64>) -> FofrModel {
    let m = design.block_sizes.len();
    let omega = match &design.context {
        Some(ctx) => block_diagonal(&ctx.predictor_penalties),
        None => DMatrix::zeros(design.p(), design.p()),
    };
    FofrModel {
        sigma: residual_moment(design, &b),
        b,
        method: FitMethod::Ls,
        lambdas: vec![0.0; m],
        omega,
        iterations: 0,
        block_sizes: design.block_sizes.clone(),
        context: design.context.clone(),
    }
}

/// Least squares `B = (Z'Z)^{-1} Z'C`.
pub fn fit_ls(design: &DesignBlocks) -> Result<FofrModel> {
    let g = check_ls_system(design)?;
    let b = solve_symmetric(&g, &(design.z.transpose() * &design.c))?;
    Ok(ls_model(design, b))
}

/// Kronecker-product form `vec(B) = (zeta ⊗ Z'Z)^{-1} vec(Z' C zeta)`.
pub fn fit_ls_kronecker(design: &DesignBlocks) -> Result<FofrModel> {
    let g = check_ls_system(design)?;
    let big = symmetrize(&design.zeta_phi.kronecker(&g));
    let rhs = vec_of(&(design.z.transpose() * &design.c * &design.zeta_phi));
    let sol = solve_symmetric(&big, &DMatrix::from_column_slice(rhs.len(), 1, rhs.as_slice()))?;
    let b = unvec(&sol.column(0).into_owned(), design.p(), design.k_y());
    Ok(ls_model(design, b))
}

/// Inverse of a covariance estimate, nudging the diagonal until it factors.
pub(crate) fn regularized_inverse(sigma: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let k = sigma.nrows();
    let mut s = symmetrize(sigma);
    let mut jitter = 1e-10;
    for _ in 0..12 {
        if let Some(chol) = s.clone().cholesky() {
            return Ok((s, symmetrize(&chol.inverse())));
        }
        s += DMatrix::identity(k, k) * jitter;
        jitter *= 10.0;
    }
    Err(FofrError::Numeric("error covariance is not positive definite".into()))
}

/// One `B` update of the penalized likelihood at fixed `Sigma^{-1}`, solved
/// in the eigenbasis of `Sigma^{-1}` so only `K_Y` systems of size `p` remain.
pub(crate) fn mpl_b_step(
    gram: &DMatrix<f64>,
    ztc: &DMatrix<f64>,
    sigma_inv: &DMatrix<f64>,
    penalty: &DMatrix<f64>,
    n: usize,
) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(sigma_inv.clone());
    let u = &eig.eigenvectors;
    let f = ztc * sigma_inv * u;
    let mut bt = DMatrix::zeros(gram.nrows(), ztc.ncols());
    for k in 0..ztc.ncols() {
        let sys = gram * eig.eigenvalues[k] + penalty * n as f64;
        let col = solve_symmetric(&sys, &f.columns(k, 1).into_owned())?;
        bt.set_column(k, &col.column(0));
    }
    Ok(bt * u.transpose())
}

/// Explicit Kronecker form of the `B` update, for checking [`mpl_b_step`].
pub fn mpl_update_kronecker(
    design: &DesignBlocks,
    sigma: &DMatrix<f64>,
    penalty: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let (_, s_inv) = regularized_inverse(sigma)?;
    let k = design.k_y();
    let n = design.n() as f64;
    let g = design.z.transpose() * &design.z;
    let lhs = s_inv.kronecker(&g) + DMatrix::<f64>::identity(k, k).kronecker(penalty) * n;
    let rhs = s_inv.kronecker(&design.z.transpose()) * vec_of(&design.c);
    let sol = solve_symmetric(&symmetrize(&lhs), &DMatrix::from_column_slice(rhs.len(), 1, rhs.as_slice()))?;
    Ok(unvec(&sol.column(0).into_owned(), design.p(), k))
}

/// Maximum penalized likelihood: alternate the `B` update with
/// `Sigma = (C - ZB)'(C - ZB) / N` until `B` stops moving.
pub fn fit_mpl(design: &DesignBlocks, penalty: &PenaltySpec, options: MplOptions) -> Result<FofrModel> {
    let n = design.n();
    if n <= design.k_y() {
        return Err(FofrError::Config(format!(
            "MPL needs N > K_Y, got N = {n}, K_Y = {}",
            design.k_y()
        )));
    }
    if penalty.block_sizes != design.block_sizes {
        return Err(FofrError::Shape("penalty blocks do not match the design".into()));
    }
    let pm = penalty.weighted();
    let gram = symmetrize(&(design.z.transpose() * &design.z));
    let ztc = design.z.transpose() * &design.c;

    let (mut b, mut sigma) = match fit_ls(design) {
        Ok(ls) => (ls.b, ls.sigma),
        Err(e) if e.is_rank() => {
            let s = symmetrize(&(design.c.transpose() * &design.c / n as f64));
            let (s, s_inv) = regularized_inverse(&s)?;
            (mpl_b_step(&gram, &ztc, &s_inv, &pm, n)?, s)
        }
        Err(e) => return Err(e),
    };
    let mut change = f64::INFINITY;
    let model = |b: DMatrix<f64>, sigma: DMatrix<f64>, iterations: usize| FofrModel {
        b,
        sigma,
        method: FitMethod::Mpl,
        lambdas: penalty.lambdas.clone(),
        omega: penalty.omega.clone(),
        iterations,
        block_sizes: design.block_sizes.clone(),
        context: design.context.clone(),
    };
    for it in 1..=options.max_iter {
        let (_, s_inv) = regularized_inverse(&sigma)?;
        let next = mpl_b_step(&gram, &ztc, &s_inv, &pm, n)?;
        let scale = b.norm().max(f64::MIN_POSITIVE);
        change = (&next - &b).norm() / scale;
        if next.norm() == 0.0 && b.norm() == 0.0 {
            change = 0.0;
        }
        b = next;
        sigma = residual_moment(design, &b);
        if change < options.tol {
            let (s, _) = regularized_inverse(&sigma)?;
            return Ok(model(b, s, it));
        }
    }
    Err(FofrError::Convergence {
        iterations: options.max_iter,
        change,
        last: Box::new(model(b, sigma, options.max_iter)),
    })
}

/// Fit by the configured method; `lambda` is ignored for least squares.
pub fn fit_method(
    design: &DesignBlocks,
    method: FitMethod,
    lambda: f64,
    options: MplOptions,
) -> Result<FofrModel> {
    match method {
        FitMethod::Ls => fit_ls(design),
        FitMethod::Mpl => fit_mpl(design, &PenaltySpec::common(design, lambda)?, options),
    }
}

/// Maps new predictor curves to centred design rows with the training means.
pub fn design_rows(context: &DesignContext, predictors: &[SmoothedCurves]) -> Result<DMatrix<f64>> {
    if predictors.len() != context.predictor_bases.len() {
        return Err(FofrError::Config(format!(
            "model has {} predictors, got {}",
            context.predictor_bases.len(),
            predictors.len()
        )));
    }
    let n = predictors[0].n_curves();
    let sizes: Vec<usize> = context.predictor_bases.iter().map(|b| b.n_basis()).collect();
    let mut z = DMatrix::zeros(n, sizes.iter().sum());
    for (m, (p, off)) in predictors.iter().zip(block_offsets(&sizes)).enumerate() {
        if p.basis != context.predictor_bases[m] {
            return Err(FofrError::Config(format!(
                "predictor {} uses a different basis than the training data",
                m + 1
            )));
        }
        if p.n_curves() != n {
            return Err(FofrError::Shape("predictors disagree on the number of curves".into()));
        }
        let mut d = p.coefficients.clone();
        for mut row in d.row_iter_mut() {
            row -= context.predictor_means[m].transpose();
        }
        let block = d * &context.predictor_grams[m];
        z.view_mut((0, off), (n, sizes[m])).copy_from(&block);
    }
    Ok(z)
}

/// Predicted response curves at `eval_grid` (`N_new x |grid|`).
pub fn predict(model: &FofrModel, new_predictors: &[SmoothedCurves], eval_grid: &[f64]) -> Result<DMatrix<f64>> {
    let ctx = model
        .context
        .as_ref()
        .ok_or_else(|| FofrError::Config("model carries no basis context".into()))?;
    let z = design_rows(ctx, new_predictors)?;
    predict_from_rows(model, &z, eval_grid)
}

/// Prediction from already centred design rows.
pub fn predict_from_rows(model: &FofrModel, z: &DMatrix<f64>, eval_grid: &[f64]) -> Result<DMatrix<f64>> {
    let ctx = model
        .context
        .as_ref()
        .ok_or_else(|| FofrError::Config("model carries no basis context".into()))?;
    let mut coef = z * &model.b;
    for mut row in coef.row_iter_mut() {
        row += ctx.response_mean.transpose();
    }
    let phi = ctx.response_basis.evaluate(eval_grid)?;
    Ok(coef * phi.transpose())
}

/// `beta_m(s, t) = psi_m(s)' B_m phi(t)` on the product grid (`|s| x |t|`).
pub fn coefficient_surface(model: &FofrModel, m: usize, s_grid: &[f64], t_grid: &[f64]) -> Result<DMatrix<f64>> {
    let ctx = model
        .context
        .as_ref()
        .ok_or_else(|| FofrError::Config("model carries no basis context".into()))?;
    let bm = model.block(m)?;
    let psi = ctx.predictor_bases[m].evaluate(s_grid)?;
    let phi = ctx.response_basis.evaluate(t_grid)?;
    Ok(psi * bm * phi.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random_design(n: usize, p: usize, k: usize, seed: u64) -> DesignBlocks {
        let mut rng = crate::rng::substream(seed, 0);
        let z = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let b0 = DMatrix::from_fn(p, k, |_, _| rng.sample::<f64, _>(StandardNormal));
        let e = DMatrix::from_fn(n, k, |_, _| 0.3 * rng.sample::<f64, _>(StandardNormal));
        let c = &z * b0 + e;
        DesignBlocks::from_parts(z, c, DMatrix::identity(k, k), vec![p]).unwrap()
    }

    #[test]
    fn ls_matches_kronecker_form() {
        let mut d = random_design(30, 4, 3, 1);
        d.zeta_phi = DMatrix::from_fn(3, 3, |i, j| if i == j { 2.0 } else { 0.3 });
        let a = fit_ls(&d).unwrap().b;
        let b = fit_ls_kronecker(&d).unwrap().b;
        assert!((a - b).amax() < 1e-10);
    }

    #[test]
    fn p_above_n_is_rank_error() {
        let d = random_design(3, 5, 2, 2);
        assert!(fit_ls(&d).unwrap_err().is_rank());
    }

    #[test]
    fn b_step_matches_kronecker() {
        let d = random_design(40, 5, 3, 3);
        let sigma = DMatrix::from_fn(3, 3, |i, j| if i == j { 1.0 } else { 0.4 });
        let pen = DMatrix::from_fn(5, 5, |i, j| if i == j { 0.2 } else { 0.05 });
        let (_, s_inv) = regularized_inverse(&sigma).unwrap();
        let fast = mpl_b_step(&(d.z.transpose() * &d.z), &(d.z.transpose() * &d.c), &s_inv, &pen, 40).unwrap();
        let slow = mpl_update_kronecker(&d, &sigma, &pen).unwrap();
        assert!((fast - slow).amax() < 1e-10);
    }

    #[test]
    fn zero_penalty_mpl_is_ls() {
        let d = random_design(50, 4, 3, 4);
        let pen = PenaltySpec::new(vec![0.0], &[DMatrix::identity(4, 4)]).unwrap();
        let mpl = fit_mpl(&d, &pen, MplOptions::default()).unwrap();
        let ls = fit_ls(&d).unwrap();
        assert!((mpl.b - ls.b).amax() < 1e-9);
    }

    #[test]
    fn heavy_penalty_shrinks_to_zero() {
        let d = random_design(50, 4, 3, 5);
        let pen = PenaltySpec::new(vec![1e10], &[DMatrix::identity(4, 4)]).unwrap();
        let mpl = fit_mpl(&d, &pen, MplOptions::default()).unwrap();
        assert!(mpl.b.amax() < 1e-6);
    }

    #[test]
    fn mpl_needs_more_curves_than_response_dimension() {
        let d = random_design(3, 1, 3, 6);
        let pen = PenaltySpec::new(vec![1.0], &[DMatrix::identity(1, 1)]).unwrap();
        assert!(matches!(fit_mpl(&d, &pen, MplOptions::default()), Err(FofrError::Config(_))));
    }

    #[test]
    fn weighted_penalty_scales_blocks() {
        let spec = PenaltySpec::new(vec![4.0, 9.0], &[DMatrix::identity(2, 2), DMatrix::identity(1, 1)]).unwrap();
        let w = spec.weighted();
        assert_eq!(w[(0, 0)], 4.0);
        assert_eq!(w[(2, 2)], 9.0);
        assert_eq!(w[(0, 2)], 0.0);
    }

    #[test]
    fn centering_is_idempotent() {
        let mut rng = crate::rng::substream(9, 0);
        let basis = BasisSystem::fourier(crate::basis::Domain::new(0.0, 1.0).unwrap(), 3).unwrap();
        let sm = SmoothedCurves {
            coefficients: DMatrix::from_fn(5, 3, |_, _| rng.random::<f64>()),
            penalty: basis.penalty(2).unwrap(),
            basis,
            lambda: 1.0,
            df: 2.0,
            rss: 0.0,
            criterion: None,
            criterion_value: None,
        };
        let once = center_curves(&sm).unwrap();
        assert!(once.curves.coefficients.row_mean().amax() < 1e-12);
        let twice = center_curves(&once.curves).unwrap();
        assert!((twice.curves.coefficients - &once.curves.coefficients).amax() < 1e-15);
    }
}
