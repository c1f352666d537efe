mod common;

use common::{normal_matrix, random_design};
use fofr::criteria::derivatives::{gradients_at, loglik_obs, pack_theta, penalized_loglik_obs};
use fofr::criteria::{evaluate_criterion, gic_trace, hat_trace, information_matrices, Criterion};
use fofr::linalg::solve_symmetric;
use fofr::regression::{fit_ls, fit_mpl};
use fofr::{DesignBlocks, FofrError, FofrModel, MplOptions, PenaltySpec};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn penalized_model(d: &DesignBlocks, lambda: f64, seed: u64) -> FofrModel {
    let p = d.p();
    let a = normal_matrix(seed ^ 0xF00, p, p);
    let pen = PenaltySpec::new(vec![lambda], &[a.transpose() * a + DMatrix::identity(p, p)]).unwrap();
    fit_mpl(d, &pen, MplOptions { max_iter: 2000, tol: 1e-10 }).unwrap()
}

fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / b.amax().max(1e-12)
}

/// Central second differences of `f`.
fn numeric_hessian(f: &dyn Fn(&DVector<f64>) -> f64, theta: &DVector<f64>, h: f64) -> DMatrix<f64> {
    let n = theta.len();
    let mut out = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in a..n {
            let at = |da: f64, db: f64| {
                let mut t = theta.clone();
                t[a] += da;
                t[b] += db;
                f(&t)
            };
            let v = (at(h, h) - at(h, -h) - at(-h, h) + at(-h, -h)) / (4.0 * h * h);
            out[(a, b)] = v;
            out[(b, a)] = v;
        }
    }
    out
}

fn numeric_gradients(d: &DesignBlocks, theta: &DVector<f64>, h: f64) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(theta.len(), d.n());
    for i in 0..d.n() {
        for a in 0..theta.len() {
            let (mut up, mut dn) = (theta.clone(), theta.clone());
            up[a] += h;
            dn[a] -= h;
            g[(a, i)] = (loglik_obs(d, &up, i) - loglik_obs(d, &dn, i)) / (2.0 * h);
        }
    }
    g
}

#[test]
fn analytic_information_matrices_match_finite_differences() {
    for seed in 0..20u64 {
        let d = random_design(25, &[2 + (seed % 2) as usize], 2, 500 + seed);
        let model = penalized_model(&d, 0.05 + 0.1 * (seed % 3) as f64, seed);
        let theta = pack_theta(&model.b, &model.sigma);
        let n = d.n() as f64;
        let pen = model.weighted_penalty();

        let g_fd = numeric_gradients(&d, &theta, 1e-6);
        let g = gradients_at(&d, &model, &theta).unwrap();
        assert!(rel(&g, &g_fd) < 1e-6, "seed {seed}: gradients {}", rel(&g, &g_fd));

        let mean = |t: &DVector<f64>| (0..d.n()).map(|i| penalized_loglik_obs(&d, &pen, t, i)).sum::<f64>() / n;
        let r_fd = -numeric_hessian(&mean, &theta, 1e-4);
        let (r, q) = information_matrices(&d, &model).unwrap();
        assert!(rel(&r, &r_fd) < 1e-4, "seed {seed}: R {}", rel(&r, &r_fd));

        let pb = &pen * &model.b;
        let mut tilde = g_fd.clone();
        for mut col in tilde.column_iter_mut() {
            for (a, v) in pb.iter().enumerate() {
                col[a] -= v;
            }
        }
        let q_fd = tilde * g_fd.transpose() / n;
        assert!(rel(&q, &q_fd) < 1e-4, "seed {seed}: Q {}", rel(&q, &q_fd));

        let trace = solve_symmetric(&r_fd, &q_fd).map(|m| m.trace()).unwrap_or_else(|_| {
            r_fd.clone().lu().solve(&q_fd).unwrap().trace()
        });
        let analytic = gic_trace(&d, &model).unwrap();
        assert!((analytic - trace).abs() < 1e-4 * trace.abs().max(1.0), "seed {seed}: {analytic} vs {trace}");
    }
}

#[test]
fn gbic_is_inapplicable_without_penalty() {
    let d = random_design(30, &[3], 2, 7);
    let m = fit_ls(&d).unwrap();
    assert!(matches!(evaluate_criterion(&d, &m, Criterion::Gbic), Err(FofrError::Inapplicable(_))));
    for c in [Criterion::Gcv, Criterion::Gic, Criterion::Maic] {
        assert!(evaluate_criterion(&d, &m, c).unwrap().value.is_finite(), "{c}");
    }
}

#[test]
fn gbic_roughness_term_scales_with_n() {
    // Doubling every observation doubles N and the log-likelihood while the
    // estimates stay put; the GBIC penalty must follow its N-dependence.
    let d = random_design(30, &[3], 2, 8);
    let m = penalized_model(&d, 0.3, 8);
    let rows: Vec<usize> = (0..30).chain(0..30).collect();
    let d2 = d.resampled(&rows);
    let a = evaluate_criterion(&d, &m, Criterion::Gbic).unwrap();
    let b = evaluate_criterion(&d2, &m, Criterion::Gbic).unwrap();
    assert!((b.loglik - 2.0 * a.loglik).abs() < 1e-9 * a.loglik.abs());
    let rough = (m.b.transpose() * m.weighted_penalty() * &m.b).trace();
    let (k, q) = (2.0, 0.0);
    let r_count = k * (k + 1.0) / 2.0 + k * q;
    let expected = 30.0 * rough + r_count * 2f64.ln();
    let observed = b.complexity - a.complexity;
    assert!((observed - expected).abs() < 1e-6 * expected.abs().max(1.0), "{observed} vs {expected}");
}

#[test]
fn hat_trace_is_p_times_k_for_least_squares() {
    let d = random_design(30, &[4, 2], 3, 9);
    assert_eq!(hat_trace(&d, &fit_ls(&d).unwrap()).unwrap(), 18.0);
    let m = penalized_model(&random_design(30, &[4], 3, 9), 1.0, 9);
    assert!(hat_trace(&random_design(30, &[4], 3, 9), &m).unwrap() < 12.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn criteria_ignore_observation_order(seed in 0u64..10_000) {
        let d = random_design(24, &[3], 2, seed);
        let m = penalized_model(&d, 0.2, seed);
        let rows: Vec<usize> = (0..24).map(|i| (i * 7) % 24).collect();
        let shuffled = d.resampled(&rows);
        for c in Criterion::ALL {
            let a = evaluate_criterion(&d, &m, c).unwrap().value;
            let b = evaluate_criterion(&shuffled, &m, c).unwrap().value;
            prop_assert!((a - b).abs() < 1e-9 * a.abs().max(1.0), "{c}: {a} vs {b}");
        }
    }
}
