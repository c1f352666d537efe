#![allow(dead_code)]

use fofr::regression::{build_design, center_curves};
use fofr::rng::substream;
use fofr::smoothing::penalized_fit;
use fofr::{BasisKind, BasisSystem, DesignBlocks, Domain, SampledCurves};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

pub fn normal_matrix(seed: u64, rows: usize, cols: usize) -> DMatrix<f64> {
    let mut rng = substream(seed, 7);
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Coefficient-space design `C = Z B0 + noise` with `M` equal blocks.
pub fn random_design(n: usize, blocks: &[usize], k_y: usize, seed: u64) -> DesignBlocks {
    let p: usize = blocks.iter().sum();
    let z = normal_matrix(seed, n, p);
    let b0 = normal_matrix(seed ^ 0x55, p, k_y);
    let e = normal_matrix(seed ^ 0xAA, n, k_y) * 0.3;
    let c = &z * b0 + e;
    DesignBlocks::from_parts(z, c, DMatrix::identity(k_y, k_y), blocks.to_vec()).unwrap()
}

/// Noisy curves sharing a smooth shape with random amplitudes.
pub fn wavy_curves(n: usize, j: usize, seed: u64, label: &str) -> SampledCurves {
    let mut rng = substream(seed, 3);
    let grid: Vec<f64> = (0..j).map(|i| i as f64 / (j - 1) as f64).collect();
    let values = DMatrix::from_fn(n, j, |_, _| 0.0);
    let mut values = values;
    for i in 0..n {
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        for (c, &t) in grid.iter().enumerate() {
            let noise: f64 = rng.sample(StandardNormal);
            values[(i, c)] = a * (2.0 * std::f64::consts::PI * t).sin() + b * t * t + 0.1 * noise;
        }
    }
    SampledCurves::new(grid, values, label).unwrap()
}

/// Design with basis context from smoothed synthetic curves.
pub fn curve_design(n: usize, seed: u64) -> DesignBlocks {
    let x = wavy_curves(n, 30, seed, "x");
    let y = wavy_curves(n, 30, seed + 1, "y");
    let domain = Domain::new(0.0, 1.0).unwrap();
    let bx = BasisSystem::new(BasisKind::BSpline, domain, 6).unwrap();
    let by = BasisSystem::new(BasisKind::BSpline, domain, 5).unwrap();
    let xs = penalized_fit(&x, &bx, 1e-4, 2).unwrap();
    let ys = penalized_fit(&y, &by, 1e-4, 2).unwrap();
    build_design(&center_curves(&ys).unwrap(), &[center_curves(&xs).unwrap()]).unwrap()
}

pub fn max_rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = b.amax().max(1e-300);
    (a - b).amax() / scale
}

/// Composite Simpson rule with `intervals` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let h = (b - a) / intervals as f64;
    let mut acc = f(a) + f(b);
    for i in 1..intervals {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}
