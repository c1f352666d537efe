mod common;

use common::simpson;
use fofr::linalg::symmetric_eigenvalues;
use fofr::quadrature::gauss_legendre_rule;
use fofr::{BasisKind, BasisSystem, Domain};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn domain_strategy() -> impl Strategy<Value = Domain> {
    (-5.0..5.0f64, 0.5..20.0f64).prop_map(|(a, len)| Domain::new(a, a + len).unwrap())
}

fn points(domain: Domain, count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| domain.lower + domain.length() * i as f64 / (count - 1) as f64)
        .collect()
}

fn assert_psd(m: &DMatrix<f64>) {
    let eig = symmetric_eigenvalues(m);
    let top = eig.iter().cloned().fold(0.0f64, f64::max);
    for e in eig {
        assert!(e >= -1e-9 * top.max(1.0), "negative eigenvalue {e} (largest {top})");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn bspline_partition_of_unity(domain in domain_strategy(), k in 4usize..25, order in 1usize..6) {
        prop_assume!(k >= order);
        let basis = BasisSystem::bspline(domain, k, order).unwrap();
        let phi = basis.evaluate(&points(domain, 257)).unwrap();
        for row in phi.row_iter() {
            prop_assert!((row.sum() - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|v| *v >= -1e-15));
        }
    }

    #[test]
    fn fourier_gram_is_identity(domain in domain_strategy(), k in 1usize..30) {
        let g = BasisSystem::fourier(domain, k).unwrap().gram().values;
        prop_assert!((g - DMatrix::identity(k, k)).amax() < 1e-8);
    }

    #[test]
    fn gram_and_penalty_are_psd(domain in domain_strategy(), k in 4usize..16, n in 0usize..3) {
        for kind in BasisKind::ALL {
            let basis = BasisSystem::new(kind, domain, k).unwrap();
            assert_psd(&basis.gram().values);
            assert_psd(&basis.penalty(n).unwrap().values);
        }
    }

    #[test]
    fn gaussian_gram_matches_quadrature(domain in domain_strategy(), k in 4usize..14) {
        let basis = BasisSystem::gaussian(domain, k).unwrap();
        let sigma = basis.width();
        let centers = basis.centers().to_vec();
        let g = basis.gram().values;
        let lo = centers[0] - 10.0 * sigma;
        let hi = centers[k - 1] + 10.0 * sigma;
        let intervals = 4000 * (1 + ((hi - lo) / sigma) as usize / 40);
        for a in 0..k {
            for b in a..k {
                let f = |t: f64| {
                    (-(t - centers[a]).powi(2) / (2.0 * sigma * sigma)).exp()
                        * (-(t - centers[b]).powi(2) / (2.0 * sigma * sigma)).exp()
                };
                let q = simpson(f, lo, hi, intervals);
                prop_assert!((g[(a, b)] - q).abs() <= 1e-6 * q.abs().max(1e-12 * g[(a, a)]),
                    "entry ({a},{b}): closed form {} vs quadrature {q}", g[(a, b)]);
            }
        }
    }
}

#[test]
fn bspline_roughness_matches_finite_difference_oracle() {
    let domain = Domain::new(0.0, 3.0).unwrap();
    let basis = BasisSystem::bspline(domain, 9, 4).unwrap();
    let r = basis.penalty(2).unwrap().values;
    let h = 1e-4;
    let second = |t: f64| -> Vec<f64> {
        let at = |x: f64| basis.evaluate(&[x.clamp(0.0, 3.0)]).unwrap();
        let d = (at(t + h) - at(t) * 2.0 + at(t - h)) / (h * h);
        d.iter().cloned().collect()
    };
    // Second derivatives are linear on each knot span, so a 3-point Gauss
    // rule per span is exact and never puts a stencil across a knot.
    let mut breaks = basis.knots().to_vec();
    breaks.dedup();
    let (nodes, weights) = gauss_legendre_rule(&breaks, 3);
    let mut oracle = DMatrix::zeros(9, 9);
    for (t, w) in nodes.iter().zip(&weights) {
        let d = second(*t);
        for x in 0..9 {
            for y in 0..9 {
                oracle[(x, y)] += w * d[x] * d[y];
            }
        }
    }
    let err = (&r - &oracle).norm() / oracle.norm();
    assert!(err < 1e-4, "relative error {err}");
}

#[test]
fn fourier_roughness_is_diagonal_in_frequency() {
    let domain = Domain::new(0.0, 24.0).unwrap();
    let basis = BasisSystem::fourier(domain, 7).unwrap();
    let r = basis.penalty(2).unwrap().values;
    let omega = 2.0 * std::f64::consts::PI / 24.0;
    assert!(r[(0, 0)].abs() < 1e-12);
    for f in 1..=3 {
        let expected = (f as f64 * omega).powi(4);
        assert!((r[(2 * f - 1, 2 * f - 1)] - expected).abs() < 1e-9 * expected);
        assert!((r[(2 * f, 2 * f)] - expected).abs() < 1e-9 * expected);
    }
    let off = r.clone() - DMatrix::from_diagonal(&r.diagonal());
    assert!(off.amax() < 1e-9);
}

#[test]
fn evaluation_outside_domain_is_rejected() {
    for kind in BasisKind::ALL {
        let basis = BasisSystem::new(kind, Domain::new(0.0, 1.0).unwrap(), 6).unwrap();
        assert!(basis.evaluate(&[1.5]).is_err(), "{kind}");
    }
}
