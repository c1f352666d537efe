//! Basis-function systems (Fourier, B-spline, Gaussian) and their Gram and
//! roughness-penalty matrices.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{FofrError, Result};
use crate::linalg::symmetrize;
use crate::quadrature::gauss_legendre_rule;

/// Default B-spline order (cubic).
pub const DEFAULT_ORDER: usize = 4;

/// Closed, bounded interval on which curves live.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    pub lower: f64,
    pub upper: f64,
}

impl Domain {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite()) || lower >= upper {
            return Err(FofrError::Config(format!(
                "domain needs finite lower < upper, got [{lower}, {upper}]"
            )));
        }
        Ok(Domain { lower, upper })
    }

    /// Smallest domain containing every point.
    pub fn from_points(points: &[f64]) -> Result<Self> {
        let lo = points.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = points.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Domain::new(lo, hi)
    }

    pub fn length(&self) -> f64 {
        self.upper - self.lower
    }

    fn tolerance(&self) -> f64 {
        1e-12 * self.length().max(self.lower.abs()).max(self.upper.abs())
    }

    pub fn contains(&self, t: f64) -> bool {
        let tol = self.tolerance();
        t >= self.lower - tol && t <= self.upper + tol
    }

    fn check(&self, t: f64) -> Result<f64> {
        if !t.is_finite() || !self.contains(t) {
            return Err(FofrError::Domain { point: t, lower: self.lower, upper: self.upper });
        }
        Ok(t.clamp(self.lower, self.upper))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BasisKind {
    Gaussian,
    BSpline,
    Fourier,
}

impl BasisKind {
    pub const ALL: [BasisKind; 3] = [BasisKind::Gaussian, BasisKind::BSpline, BasisKind::Fourier];

    pub fn name(&self) -> &'static str {
        match self {
            BasisKind::Fourier => "fourier",
            BasisKind::BSpline => "bspline",
            BasisKind::Gaussian => "gaussian",
        }
    }

    /// Smallest number of functions the default construction supports.
    pub fn min_size(&self) -> usize {
        match self {
            BasisKind::Fourier => 1,
            BasisKind::BSpline => DEFAULT_ORDER,
            BasisKind::Gaussian => 3,
        }
    }
}

impl fmt::Display for BasisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BasisKind {
    type Err = FofrError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fourier" => Ok(BasisKind::Fourier),
            "bspline" | "b-spline" => Ok(BasisKind::BSpline),
            "gaussian" => Ok(BasisKind::Gaussian),
            other => Err(FofrError::Config(format!("unknown basis '{other}'"))),
        }
    }
}

/// A finite system of `K` basis functions on a domain.
///
/// * Fourier: `1/sqrt(T)` followed by `sin(r w (t-a))/sqrt(T/2)`,
///   `cos(r w (t-a))/sqrt(T/2)` pairs, `w = 2 pi / T`. `K` counts every
///   function, so an even `K` ends on a sine.
/// * B-spline: order `m` splines on an augmented knot vector whose boundary
///   knots are repeated `m` times.
/// * Gaussian: `exp(-(t - tau_{k+2})^2 / (2 sigma^2))` with evenly spaced knots
///   `tau_4 = lower`, `tau_{K+2} = upper` and `sigma = (tau_{k+2} - tau_k) / 3`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSystem {
    kind: BasisKind,
    n_basis: usize,
    domain: Domain,
    order: usize,
    knots: Vec<f64>,
    width: f64,
}

/// Gram matrix `int phi(t) phi(t)^T dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub values: DMatrix<f64>,
}

/// Roughness penalty `int D^n phi(t) D^n phi(t)^T dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyMatrix {
    pub values: DMatrix<f64>,
    pub derivative_order: usize,
}

impl BasisSystem {
    /// Default construction of a basis of the given kind (cubic B-splines).
    pub fn new(kind: BasisKind, domain: Domain, n_basis: usize) -> Result<Self> {
        match kind {
            BasisKind::Fourier => Self::fourier(domain, n_basis),
            BasisKind::BSpline => Self::bspline(domain, n_basis, DEFAULT_ORDER),
            BasisKind::Gaussian => Self::gaussian(domain, n_basis),
        }
    }

    pub fn fourier(domain: Domain, n_basis: usize) -> Result<Self> {
        if n_basis == 0 {
            return Err(FofrError::Config("Fourier basis needs K >= 1".into()));
        }
        Ok(BasisSystem {
            kind: BasisKind::Fourier,
            n_basis,
            domain,
            order: 0,
            knots: Vec::new(),
            width: 0.0,
        })
    }

    /// B-spline basis with `K - order + 1` equal-width intervals.
    pub fn bspline(domain: Domain, n_basis: usize, order: usize) -> Result<Self> {
        if order == 0 {
            return Err(FofrError::Config("B-spline order must be positive".into()));
        }
        if n_basis < order {
            return Err(FofrError::Config(format!(
                "B-spline basis needs K >= order, got K = {n_basis}, order = {order}"
            )));
        }
        let intervals = n_basis - order + 1;
        let h = domain.length() / intervals as f64;
        let interior: Vec<f64> = (1..intervals).map(|i| domain.lower + i as f64 * h).collect();
        Self::bspline_with_breaks(domain, &interior, order)
    }

    /// B-spline basis on user-supplied interior breakpoints.
    pub fn bspline_with_breaks(domain: Domain, interior: &[f64], order: usize) -> Result<Self> {
        if order == 0 {
            return Err(FofrError::Config("B-spline order must be positive".into()));
        }
        let mut prev = domain.lower;
        for &b in interior {
            if !(b > prev && b < domain.upper) {
                return Err(FofrError::Config(
                    "interior breakpoints must be strictly increasing inside the domain".into(),
                ));
            }
            prev = b;
        }
        let mut knots = vec![domain.lower; order];
        knots.extend_from_slice(interior);
        knots.extend(std::iter::repeat_n(domain.upper, order));
        let n_basis = knots.len() - order;
        Ok(BasisSystem { kind: BasisKind::BSpline, n_basis, domain, order, knots, width: 0.0 })
    }

    pub fn gaussian(domain: Domain, n_basis: usize) -> Result<Self> {
        if n_basis < 3 {
            return Err(FofrError::Config(format!(
                "Gaussian basis needs K >= 3, got {n_basis}"
            )));
        }
        let h = domain.length() / (n_basis - 2) as f64;
        // tau_1 .. tau_{K+4}, tau_4 = lower
        let knots: Vec<f64> =
            (1..=n_basis + 4).map(|i| domain.lower + (i as f64 - 4.0) * h).collect();
        Ok(BasisSystem {
            kind: BasisKind::Gaussian,
            n_basis,
            domain,
            order: 0,
            knots,
            width: 2.0 * h / 3.0,
        })
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn n_basis(&self) -> usize {
        self.n_basis
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Gaussian width `sigma` (zero for the other kinds).
    pub fn width(&self) -> f64 {
        self.width
    }

    /// Gaussian centres `tau_3, ..., tau_{K+2}`.
    pub fn centers(&self) -> &[f64] {
        match self.kind {
            BasisKind::Gaussian => &self.knots[2..self.n_basis + 2],
            _ => &[],
        }
    }

    pub fn evaluate(&self, points: &[f64]) -> Result<DMatrix<f64>> {
        self.evaluate_derivative(points, 0)
    }

    /// `n`-th derivative of every basis function at every point.
    pub fn evaluate_derivative(&self, points: &[f64], n: usize) -> Result<DMatrix<f64>> {
        if self.kind == BasisKind::BSpline && n >= self.order && n > 0 {
            return Err(FofrError::Config(format!(
                "derivative order {n} needs B-spline order > {n}, have {}",
                self.order
            )));
        }
        let k = self.n_basis;
        let mut out = DMatrix::zeros(points.len(), k);
        let mut row = vec![0.0; k];
        for (i, &t) in points.iter().enumerate() {
            let t = self.domain.check(t)?;
            self.fill_row(t, n, &mut row);
            for (j, v) in row.iter().enumerate() {
                out[(i, j)] = *v;
            }
        }
        Ok(out)
    }

    fn fill_row(&self, t: f64, n: usize, row: &mut [f64]) {
        match self.kind {
            BasisKind::Fourier => self.fourier_row(t, n, row),
            BasisKind::BSpline => self.bspline_row(t, n, row),
            BasisKind::Gaussian => self.gaussian_row(t, n, row),
        }
    }

    fn fourier_row(&self, t: f64, n: usize, row: &mut [f64]) {
        let period = self.domain.length();
        let omega = 2.0 * PI / period;
        let x = t - self.domain.lower;
        let amp = (2.0 / period).sqrt();
        row[0] = if n == 0 { 1.0 / period.sqrt() } else { 0.0 };
        let shift = n as f64 * PI / 2.0;
        for (idx, v) in row.iter_mut().enumerate().skip(1) {
            let r = idx.div_ceil(2) as f64;
            let freq = r * omega;
            let scale = amp * freq.powi(n as i32);
            *v = if idx % 2 == 1 {
                scale * (freq * x + shift).sin()
            } else {
                scale * (freq * x + shift).cos()
            };
        }
    }

    fn bspline_row(&self, t: f64, n: usize, row: &mut [f64]) {
        let table = bspline_table(&self.knots, self.order, t);
        for (j, v) in row.iter_mut().enumerate() {
            *v = bspline_derivative(&table, &self.knots, j, self.order, n);
        }
    }

    fn gaussian_row(&self, t: f64, n: usize, row: &mut [f64]) {
        let s = self.width;
        for (v, &c) in row.iter_mut().zip(self.centers()) {
            let x = (t - c) / s;
            let base = (-0.5 * x * x).exp();
            // D^n exp(-x^2/2) = (-1)^n He_n(x) exp(-x^2/2)
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            *v = sign * hermite_he(n, x) * base / s.powi(n as i32);
        }
    }

    /// Breakpoints used to align quadrature panels.
    fn quadrature_breaks(&self) -> Vec<f64> {
        let mut breaks: Vec<f64> = match self.kind {
            BasisKind::Fourier => vec![self.domain.lower, self.domain.upper],
            BasisKind::BSpline | BasisKind::Gaussian => self
                .knots
                .iter()
                .cloned()
                .filter(|&x| self.domain.contains(x))
                .map(|x| x.clamp(self.domain.lower, self.domain.upper))
                .collect(),
        };
        breaks.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * self.domain.length());
        if breaks.first() != Some(&self.domain.lower) {
            breaks.insert(0, self.domain.lower);
        }
        if breaks.last() != Some(&self.domain.upper) {
            breaks.push(self.domain.upper);
        }
        breaks
    }

    /// Gauss–Legendre rule with 8 nodes per panel on at least `10 K` panels.
    pub(crate) fn quadrature_rule(&self) -> (Vec<f64>, Vec<f64>) {
        let breaks = self.quadrature_breaks();
        let intervals = breaks.len() - 1;
        let per = (10 * self.n_basis).div_ceil(intervals).max(1);
        gauss_legendre_rule(&breaks, per)
    }

    fn quadrature_cross(&self, n: usize) -> Result<DMatrix<f64>> {
        let (nodes, weights) = self.quadrature_rule();
        let d = self.evaluate_derivative(&nodes, n)?;
        let mut wd = d.clone();
        for (i, w) in weights.iter().enumerate() {
            wd.row_mut(i).scale_mut(*w);
        }
        Ok(symmetrize(&(d.transpose() * wd)))
    }

    pub fn gram(&self) -> GramMatrix {
        let values = match self.kind {
            BasisKind::Gaussian => {
                let c = self.centers();
                let s2 = self.width * self.width;
                let scale = (PI * s2).sqrt();
                DMatrix::from_fn(self.n_basis, self.n_basis, |j, k| {
                    let d = c[j] - c[k];
                    scale * (-d * d / (4.0 * s2)).exp()
                })
            }
            _ => self.quadrature_cross(0).expect("nodes lie inside the domain"),
        };
        GramMatrix { values }
    }

    pub fn penalty(&self, n: usize) -> Result<PenaltyMatrix> {
        if self.kind == BasisKind::BSpline && n >= self.order {
            return Err(FofrError::Config(format!(
                "penalty derivative order {n} must be below the B-spline order {}",
                self.order
            )));
        }
        let values = match self.kind {
            BasisKind::Fourier => {
                let omega = 2.0 * PI / self.domain.length();
                let mut m = DMatrix::zeros(self.n_basis, self.n_basis);
                m[(0, 0)] = if n == 0 { 1.0 } else { 0.0 };
                for idx in 1..self.n_basis {
                    let r = idx.div_ceil(2) as f64;
                    m[(idx, idx)] = (r * omega).powi(2 * n as i32);
                }
                m
            }
            BasisKind::BSpline if n > 0 => annihilate_constants(&self.quadrature_cross(n)?),
            _ => self.quadrature_cross(n)?,
        };
        Ok(PenaltyMatrix { values, derivative_order: n })
    }
}

/// `P R P` with `P = I - 11'/K`. B-splines sum to one, so derivatives of
/// the constant coefficient vector vanish; this removes the quadrature
/// roundoff that would otherwise leak into constant fits at large lambda.
fn annihilate_constants(r: &DMatrix<f64>) -> DMatrix<f64> {
    let k = r.nrows();
    let proj = DMatrix::identity(k, k) - DMatrix::from_element(k, k, 1.0 / k as f64);
    crate::linalg::symmetrize(&(&proj * r * &proj))
}

/// Evaluates every basis function at every point (`|points| x K`).
pub fn evaluate_basis(basis: &BasisSystem, points: &[f64]) -> Result<DMatrix<f64>> {
    basis.evaluate(points)
}

pub fn gram_matrix(basis: &BasisSystem) -> GramMatrix {
    basis.gram()
}

pub fn penalty_matrix(basis: &BasisSystem, n: usize) -> Result<PenaltyMatrix> {
    basis.penalty(n)
}

/// Probabilists' Hermite polynomial `He_n(x)`.
fn hermite_he(n: usize, x: f64) -> f64 {
    let (mut h0, mut h1) = (1.0, x);
    if n == 0 {
        return h0;
    }
    for k in 1..n {
        let h2 = x * h1 - k as f64 * h0;
        h0 = h1;
        h1 = h2;
    }
    h1
}

/// Cox–de Boor table: `table[q - 1][j] = B_{j,q}(t)` for `q = 1..=order`.
///
/// Intervals are half-open, except that the last non-degenerate interval is
/// closed on the right so the final knot evaluates to the right limit.
fn bspline_table(knots: &[f64], order: usize, t: f64) -> Vec<Vec<f64>> {
    let nk = knots.len();
    let mut first = vec![0.0; nk - 1];
    let last_span = (0..nk - 1).rev().find(|&j| knots[j] < knots[j + 1]);
    let span = (0..nk - 1)
        .find(|&j| knots[j] <= t && t < knots[j + 1])
        .or_else(|| last_span.filter(|&j| t == knots[j + 1]));
    if let Some(s) = span {
        first[s] = 1.0;
    }
    let mut table = vec![first];
    for q in 2..=order {
        let prev = &table[q - 2];
        let mut cur = vec![0.0; nk - q];
        for (j, v) in cur.iter_mut().enumerate() {
            let d1 = knots[j + q - 1] - knots[j];
            let d2 = knots[j + q] - knots[j + 1];
            let mut acc = 0.0;
            if d1 > 0.0 {
                acc += (t - knots[j]) / d1 * prev[j];
            }
            if d2 > 0.0 {
                acc += (knots[j + q] - t) / d2 * prev[j + 1];
            }
            *v = acc;
        }
        table.push(cur);
    }
    table
}

fn bspline_derivative(table: &[Vec<f64>], knots: &[f64], j: usize, q: usize, n: usize) -> f64 {
    if n == 0 {
        return table[q - 1][j];
    }
    if q == 1 {
        return 0.0;
    }
    let c = (q - 1) as f64;
    let d1 = knots[j + q - 1] - knots[j];
    let d2 = knots[j + q] - knots[j + 1];
    let mut v = 0.0;
    if d1 > 0.0 {
        v += c / d1 * bspline_derivative(table, knots, j, q - 1, n - 1);
    }
    if d2 > 0.0 {
        v -= c / d2 * bspline_derivative(table, knots, j + 1, q - 1, n - 1);
    }
    v
}

/// Direct recursive Cox–de Boor evaluation of `B_{index,order}(t)` on an
/// arbitrary knot vector, with half-open support intervals.
pub fn cox_de_boor(knots: &[f64], index: usize, order: usize, t: f64) -> f64 {
    if order == 1 {
        return if knots[index] <= t && t < knots[index + 1] { 1.0 } else { 0.0 };
    }
    let d1 = knots[index + order - 1] - knots[index];
    let d2 = knots[index + order] - knots[index + 1];
    let mut v = 0.0;
    if d1 > 0.0 {
        v += (t - knots[index]) / d1 * cox_de_boor(knots, index, order - 1, t);
    }
    if d2 > 0.0 {
        v += (knots[index + order] - t) / d2 * cox_de_boor(knots, index + 1, order - 1, t);
    }
    v
}
