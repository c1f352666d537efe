//! Model-selection criteria for fitted regressions: GCV, GIC, MAIC and GBIC.
//!
//! Parameters are ordered as `theta = (vec(B), vech(Sigma))`, with `vec`
//! column-major and `vech` the lower triangle taken column by column.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{FofrError, Result};
use crate::linalg::{log_abs_det, numerical_rank, pseudo_log_det, solve_symmetric, symmetrize, trace_product};
use crate::regression::{regularized_inverse, DesignBlocks, FofrModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Criterion {
    Gcv,
    Gic,
    Maic,
    Gbic,
}

impl Criterion {
    pub const ALL: [Criterion; 4] = [Criterion::Gcv, Criterion::Gic, Criterion::Maic, Criterion::Gbic];

    pub fn name(&self) -> &'static str {
        match self {
            Criterion::Gcv => "GCV",
            Criterion::Gic => "GIC",
            Criterion::Maic => "MAIC",
            Criterion::Gbic => "GBIC",
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Criterion {
    type Err = FofrError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gcv" => Ok(Criterion::Gcv),
            "gic" => Ok(Criterion::Gic),
            "maic" => Ok(Criterion::Maic),
            "gbic" => Ok(Criterion::Gbic),
            other => Err(FofrError::Config(format!("unknown criterion '{other}'"))),
        }
    }
}

/// A criterion value split into its fit and complexity parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriterionReport {
    pub name: Criterion,
    pub value: f64,
    pub loglik: f64,
    /// Everything in `value` other than the `-2 loglik` part (for GCV, the
    /// inflation factor applied to the mean residual square).
    pub complexity: f64,
    /// Trace of the hat matrix.
    pub df: f64,
}

fn precision(model: &FofrModel) -> Result<DMatrix<f64>> {
    let chol = symmetrize(&model.sigma)
        .cholesky()
        .ok_or_else(|| FofrError::Numeric("error covariance is singular".into()))?;
    Ok(symmetrize(&chol.inverse()))
}

/// `sum_i ln f(c_i | z_i)` under `N(B' z_i, Sigma)`.
pub fn gaussian_loglik(design: &DesignBlocks, model: &FofrModel) -> Result<f64> {
    let s = precision(model)?;
    let e = model.residuals(design);
    let n = design.n() as f64;
    let k = design.k_y() as f64;
    let log_det = log_abs_det(&model.sigma)?;
    let quad = trace_product(&(e.transpose() * &e), &s);
    Ok(-0.5 * n * k * (2.0 * PI).ln() - 0.5 * n * log_det - 0.5 * quad)
}

/// Trace of the hat matrix mapping `vec(C)` to `vec(Z B)`.
///
/// With `Sigma^{-1} = U D U'` the trace is `sum_k tr((d_k G + N P)^{-1} d_k G)`,
/// `G = Z'Z`, `P = Lambda ⊙ Omega`; for least squares it is `p K_Y`.
pub fn hat_trace(design: &DesignBlocks, model: &FofrModel) -> Result<f64> {
    let g = symmetrize(&(design.z.transpose() * &design.z));
    let p = model.weighted_penalty();
    let n = design.n() as f64;
    if p.iter().all(|v| *v == 0.0) {
        return Ok((crate::linalg::numerical_rank(&g) * design.k_y()) as f64);
    }
    let (_, s_inv) = regularized_inverse(&model.sigma)?;
    let d = SymmetricEigen::new(s_inv).eigenvalues;
    let mut tr = 0.0;
    for dk in d.iter() {
        let sys = &g * *dk + &p * n;
        tr += solve_symmetric(&sys, &(&g * *dk))?.trace();
    }
    Ok(tr)
}

pub fn criterion_gcv(design: &DesignBlocks, model: &FofrModel) -> Result<f64> {
    report_gcv(design, model).map(|r| r.value)
}

fn report_gcv(design: &DesignBlocks, model: &FofrModel) -> Result<CriterionReport> {
    let df = hat_trace(design, model)?;
    let total = (design.n() * design.k_y()) as f64;
    let denom = 1.0 - df / total;
    if denom <= 1e-12 {
        return Err(FofrError::Numeric(format!(
            "GCV undefined: hat trace {df} reaches N K_Y = {total}"
        )));
    }
    let rss = model.residuals(design).norm_squared();
    let inflation = 1.0 / (denom * denom);
    Ok(CriterionReport {
        name: Criterion::Gcv,
        value: rss / total * inflation,
        loglik: f64::NAN,
        complexity: inflation,
        df,
    })
}

pub fn criterion_maic(design: &DesignBlocks, model: &FofrModel) -> Result<f64> {
    report_maic(design, model).map(|r| r.value)
}

fn report_maic(design: &DesignBlocks, model: &FofrModel) -> Result<CriterionReport> {
    let loglik = gaussian_loglik(design, model)?;
    let df = hat_trace(design, model)?;
    Ok(CriterionReport { name: Criterion::Maic, value: -2.0 * loglik + 2.0 * df, loglik, complexity: 2.0 * df, df })
}

pub fn criterion_gic(design: &DesignBlocks, model: &FofrModel) -> Result<f64> {
    report_gic(design, model).map(|r| r.value)
}

fn report_gic(design: &DesignBlocks, model: &FofrModel) -> Result<CriterionReport> {
    let loglik = gaussian_loglik(design, model)?;
    let bias = gic_trace(design, model)?;
    let df = hat_trace(design, model)?;
    Ok(CriterionReport { name: Criterion::Gic, value: -2.0 * loglik + 2.0 * bias, loglik, complexity: 2.0 * bias, df })
}

/// `tr(R^{-1} Q)` without forming `Q`.
pub fn gic_trace(design: &DesignBlocks, model: &FofrModel) -> Result<f64> {
    let parts = derivatives::Parts::new(design, model)?;
    let r = derivatives::negative_hessian(&parts);
    let g = derivatives::gradients(&parts);
    let n = design.n() as f64;
    let pi = derivatives::penalty_gradient(&parts);
    let gsum: DVector<f64> = g.column_sum();
    let too_singular = || FofrError::Numeric("R is singular; try a larger lambda".into());
    let value = if let Some(chol) = r.clone().cholesky() {
        let lg = chol.l().solve_lower_triangular(&g).ok_or_else(too_singular)?;
        let rpi = chol.solve(&pi);
        lg.norm_squared() - gsum.dot(&rpi)
    } else {
        let lu = r.clone().lu();
        let rg = lu.solve(&g).ok_or_else(too_singular)?;
        let rpi = lu.solve(&pi).ok_or_else(too_singular)?;
        trace_product(&g.transpose(), &rg) - gsum.dot(&rpi)
    };
    if !value.is_finite() {
        return Err(too_singular());
    }
    Ok(value / n)
}

pub fn criterion_gbic(design: &DesignBlocks, model: &FofrModel) -> Result<f64> {
    report_gbic(design, model).map(|r| r.value)
}

fn report_gbic(design: &DesignBlocks, model: &FofrModel) -> Result<CriterionReport> {
    if model.lambdas.iter().all(|l| *l == 0.0) {
        return Err(FofrError::Inapplicable("GBIC needs a positive penalty weight".into()));
    }
    let loglik = gaussian_loglik(design, model)?;
    let n = design.n() as f64;
    let k = design.k_y() as f64;
    let p_mat = model.weighted_penalty();
    let r_count = k * (k + 1.0) / 2.0;
    let q = (design.p() - numerical_rank(&model.omega)) as f64;
    let rough = trace_product(&model.b.transpose(), &(&p_mat * &model.b));
    let (log_det_p, _) = pseudo_log_det(&p_mat);
    let parts = derivatives::Parts::new(design, model)?;
    let log_det_r = log_abs_det(&derivatives::negative_hessian(&parts))?;
    let complexity = n * rough + (r_count + k * q) * (n.ln() - (2.0 * PI).ln()) - k * log_det_p + log_det_r;
    Ok(CriterionReport {
        name: Criterion::Gbic,
        value: -2.0 * loglik + complexity,
        loglik,
        complexity,
        df: hat_trace(design, model)?,
    })
}

pub fn evaluate_criterion(design: &DesignBlocks, model: &FofrModel, criterion: Criterion) -> Result<CriterionReport> {
    match criterion {
        Criterion::Gcv => report_gcv(design, model),
        Criterion::Gic => report_gic(design, model),
        Criterion::Maic => report_maic(design, model),
        Criterion::Gbic => report_gbic(design, model),
    }
}

/// Explicit `R` (negative averaged Hessian) and `Q = (1/N) sum g~_i g_i'`.
pub fn information_matrices(design: &DesignBlocks, model: &FofrModel) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let parts = derivatives::Parts::new(design, model)?;
    let r = derivatives::negative_hessian(&parts);
    let g = derivatives::gradients(&parts);
    let pi = derivatives::penalty_gradient(&parts);
    let n = design.n() as f64;
    let mut gt = g.clone();
    for mut col in gt.column_iter_mut() {
        col -= &pi;
    }
    Ok((r, gt * g.transpose() / n))
}

/// Analytic and brute-force derivatives of the per-observation likelihood.
pub mod derivatives {
    use super::*;

    /// Length of `vech` for a `k x k` matrix.
    pub fn vech_len(k: usize) -> usize {
        k * (k + 1) / 2
    }

    /// Index pairs `(row, col)`, `row >= col`, in `vech` order.
    pub fn vech_pairs(k: usize) -> Vec<(usize, usize)> {
        (0..k).flat_map(|c| (c..k).map(move |r| (r, c))).collect()
    }

    pub fn pack_theta(b: &DMatrix<f64>, sigma: &DMatrix<f64>) -> DVector<f64> {
        let k = sigma.nrows();
        let mut v: Vec<f64> = b.as_slice().to_vec();
        v.extend(vech_pairs(k).into_iter().map(|(r, c)| sigma[(r, c)]));
        DVector::from_vec(v)
    }

    pub fn unpack_theta(theta: &DVector<f64>, p: usize, k: usize) -> (DMatrix<f64>, DMatrix<f64>) {
        let b = DMatrix::from_column_slice(p, k, &theta.as_slice()[..p * k]);
        let mut s = DMatrix::zeros(k, k);
        for (idx, (r, c)) in vech_pairs(k).into_iter().enumerate() {
            s[(r, c)] = theta[p * k + idx];
            s[(c, r)] = theta[p * k + idx];
        }
        (b, s)
    }

    /// `ln f(c_i | z_i)` at an arbitrary parameter vector.
    pub fn loglik_obs(design: &DesignBlocks, theta: &DVector<f64>, i: usize) -> f64 {
        let (b, s) = unpack_theta(theta, design.p(), design.k_y());
        let Some(chol) = s.clone().cholesky() else { return f64::NAN };
        let e = design.c.row(i).transpose() - b.transpose() * design.z.row(i).transpose();
        let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let quad = e.dot(&chol.solve(&e));
        -0.5 * design.k_y() as f64 * (2.0 * PI).ln() - 0.5 * log_det - 0.5 * quad
    }

    /// `ln f(c_i | z_i) - tr(B' P B) / 2`.
    pub fn penalized_loglik_obs(design: &DesignBlocks, penalty: &DMatrix<f64>, theta: &DVector<f64>, i: usize) -> f64 {
        let (b, _) = unpack_theta(theta, design.p(), design.k_y());
        loglik_obs(design, theta, i) - 0.5 * trace_product(&b.transpose(), &(penalty * &b))
    }

    /// Quantities shared by the gradient and Hessian.
    pub struct Parts {
        pub p: usize,
        pub k: usize,
        pub n: usize,
        pub z: DMatrix<f64>,
        pub b: DMatrix<f64>,
        /// `Sigma^{-1}`.
        pub s: DMatrix<f64>,
        /// `E Sigma^{-1}`, rows `w_i'`.
        pub w: DMatrix<f64>,
        pub g: DMatrix<f64>,
        pub penalty: DMatrix<f64>,
        /// `Sigma^{-1} (E'E / N) Sigma^{-1}`.
        pub ws: DMatrix<f64>,
    }

    impl Parts {
        pub fn new(design: &DesignBlocks, model: &FofrModel) -> Result<Self> {
            let s = precision(model)?;
            let e = model.residuals(design);
            let n = design.n();
            let w = &e * &s;
            let v = e.transpose() * &e / n as f64;
            Ok(Parts {
                p: design.p(),
                k: design.k_y(),
                n,
                z: design.z.clone(),
                b: model.b.clone(),
                ws: symmetrize(&(&s * v * &s)),
                s,
                w,
                g: design.z.transpose() * &design.z,
                penalty: model.weighted_penalty(),
            })
        }

        fn dim(&self) -> usize {
            self.p * self.k + vech_len(self.k)
        }
    }

    /// Gradient of each `ln f(c_i | z_i)`, one column per observation.
    pub fn gradients(parts: &Parts) -> DMatrix<f64> {
        let (p, k) = (parts.p, parts.k);
        let pairs = vech_pairs(k);
        let mut out = DMatrix::zeros(parts.dim(), parts.n);
        for i in 0..parts.n {
            let mut col = out.column_mut(i);
            for c in 0..k {
                let wc = parts.w[(i, c)];
                for j in 0..p {
                    col[j + p * c] = parts.z[(i, j)] * wc;
                }
            }
            for (a, &(r, c)) in pairs.iter().enumerate() {
                let wr = parts.w[(i, r)];
                let wc = parts.w[(i, c)];
                col[p * k + a] = if r == c {
                    0.5 * (wr * wr - parts.s[(r, r)])
                } else {
                    wr * wc - parts.s[(r, c)]
                };
            }
        }
        out
    }

    /// Per-observation gradient of the penalty term, `(vec(P B), 0)`.
    pub fn penalty_gradient(parts: &Parts) -> DVector<f64> {
        let mut v = DVector::zeros(parts.dim());
        let pb = &parts.penalty * &parts.b;
        v.rows_mut(0, parts.p * parts.k).copy_from_slice(pb.as_slice());
        v
    }

    /// `(S E_b S)_{xy}` for the symmetric unit matrix of pair `(m, l)`.
    fn sandwich(a: &DMatrix<f64>, c: &DMatrix<f64>, m: usize, l: usize, x: usize, y: usize) -> f64 {
        if m == l {
            a[(x, m)] * c[(m, y)]
        } else {
            a[(x, m)] * c[(l, y)] + a[(x, l)] * c[(m, y)]
        }
    }

    /// `R = -(1/N) sum_i Hessian of the penalized per-observation likelihood`.
    pub fn negative_hessian(parts: &Parts) -> DMatrix<f64> {
        let (p, k) = (parts.p, parts.k);
        let nf = parts.n as f64;
        let pk = p * k;
        let pairs = vech_pairs(k);
        let mut r = DMatrix::zeros(parts.dim(), parts.dim());

        for c1 in 0..k {
            for c2 in 0..k {
                let s = parts.s[(c1, c2)] / nf;
                for j1 in 0..p {
                    for j2 in 0..p {
                        let mut v = s * parts.g[(j1, j2)];
                        if c1 == c2 {
                            v += parts.penalty[(j1, j2)];
                        }
                        r[(j1 + p * c1, j2 + p * c2)] = v;
                    }
                }
            }
        }

        // B-Sigma block: Hessian is -vec(Y E_a S) with Y = Z' E S / N.
        let y = parts.z.transpose() * &parts.w / nf;
        for (a, &(m, l)) in pairs.iter().enumerate() {
            for c in 0..k {
                for j in 0..p {
                    let v = if m == l {
                        y[(j, m)] * parts.s[(m, c)]
                    } else {
                        y[(j, m)] * parts.s[(l, c)] + y[(j, l)] * parts.s[(m, c)]
                    };
                    r[(j + p * c, pk + a)] = v;
                    r[(pk + a, j + p * c)] = v;
                }
            }
        }

        // Sigma-Sigma block: Hessian is tr(E_a X_b) / 2 with
        // X_b = S E_b S - S E_b W - W E_b S.
        let (s, ws) = (&parts.s, &parts.ws);
        let x_entry = |m: usize, l: usize, x: usize, y: usize| {
            sandwich(s, s, m, l, x, y) - sandwich(s, ws, m, l, x, y) - sandwich(ws, s, m, l, x, y)
        };
        for (a, &(ra, ca)) in pairs.iter().enumerate() {
            for (b, &(m, l)) in pairs.iter().enumerate().skip(a) {
                let tr = if ra == ca {
                    x_entry(m, l, ra, ra)
                } else {
                    x_entry(m, l, ra, ca) + x_entry(m, l, ca, ra)
                };
                r[(pk + a, pk + b)] = -0.5 * tr;
                r[(pk + b, pk + a)] = -0.5 * tr;
            }
        }
        r
    }

    /// Central-difference gradient of `f` at `theta`.
    pub fn numeric_gradient(f: impl Fn(&DVector<f64>) -> f64, theta: &DVector<f64>, h: f64) -> DVector<f64> {
        let mut out = DVector::zeros(theta.len());
        for a in 0..theta.len() {
            let mut up = theta.clone();
            let mut dn = theta.clone();
            up[a] += h;
            dn[a] -= h;
            out[a] = (f(&up) - f(&dn)) / (2.0 * h);
        }
        out
    }

    /// Analytic gradient of every observation at an arbitrary `theta`.
    pub fn gradients_at(design: &DesignBlocks, template: &FofrModel, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        let model = at_theta(design, template, theta);
        Ok(gradients(&Parts::new(design, &model)?))
    }

    /// Analytic `R` at an arbitrary `theta`.
    pub fn negative_hessian_at(design: &DesignBlocks, template: &FofrModel, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        let model = at_theta(design, template, theta);
        Ok(negative_hessian(&Parts::new(design, &model)?))
    }

    fn at_theta(design: &DesignBlocks, template: &FofrModel, theta: &DVector<f64>) -> FofrModel {
        let (b, sigma) = unpack_theta(theta, design.p(), design.k_y());
        FofrModel { b, sigma, ..template.clone() }
    }
}
