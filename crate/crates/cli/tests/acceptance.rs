//! Acceptance checks. Prints one PASS/FAIL line per criterion; a failing
//! criterion does not abort the run.
//!
//! `cargo test --release -p fofr-cli --test acceptance`; set
//! `ACCEPTANCE_ONLY=5,7` to run a subset.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use fofr::criteria::derivatives::{loglik_obs, pack_theta, penalized_loglik_obs};
use fofr::criteria::{evaluate_criterion, information_matrices, Criterion};
use fofr::quadrature::gauss_legendre_rule;
use fofr::regression::{fit_ls, fit_ls_kronecker, fit_mpl};
use fofr::rng::substream;
use fofr::simulation::{run_campaign, AmseScale, CellKey, Metric};
use fofr::smoothing::penalized_fit;
use fofr::{
    BasisKind, BasisSystem, BootstrapConfig, CampaignConfig, DesignBlocks, DgpCase, Domain, FitMethod, McResult,
    MplOptions, PenaltySpec, SampledCurves,
};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

type Check = Result<(bool, String), String>;

fn main() {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("MPL(0) equals LS", mpl_zero_is_ls),
        ("Kronecker LS equals direct OLS", kronecker_is_ols),
        ("basis property suite", basis_suite),
        ("smoothing limits", smoothing_limits),
        ("Case I rho=0.5 AMSE table", case1_table),
        ("Case II AMSE table", case2_table),
        ("bootstrap calibration", bootstrap_calibration),
        ("GIC derivative blocks", gic_derivatives),
        ("timing ordering", timing_ordering),
        ("determinism", determinism),
    ];
    // ACCEPTANCE_ONLY=5,7 runs a subset.
    let only: Option<Vec<usize>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let (mut passed, mut ran) = (0, 0);
    for (i, (name, check)) in criteria.iter().enumerate() {
        if only.as_ref().is_some_and(|o| !o.contains(&(i + 1))) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or(p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let (ok, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
        passed += ok as usize;
        let tag = if ok { "PASS" } else { "FAIL" };
        println!("{tag} {:>2} {name} [{:.1}s]: {detail}", i + 1, start.elapsed().as_secs_f64());
    }
    println!("{passed}/{ran} criteria passed");
}

fn normal_matrix(seed: u64, rows: usize, cols: usize) -> DMatrix<f64> {
    let mut rng = substream(seed, 11);
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn random_design(n: usize, blocks: &[usize], k_y: usize, seed: u64) -> DesignBlocks {
    let p: usize = blocks.iter().sum();
    let z = normal_matrix(seed, n, p);
    let c = &z * normal_matrix(seed ^ 0x55, p, k_y) + normal_matrix(seed ^ 0xAA, n, k_y) * 0.3;
    DesignBlocks::from_parts(z, c, DMatrix::identity(k_y, k_y), blocks.to_vec()).unwrap()
}

fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / b.amax().max(1e-300)
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn mpl_zero_is_ls() -> Check {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for seed in 0..50u64 {
        let m = 1 + (seed % 2) as usize;
        let d = random_design(60, &vec![6; m], 6, seed);
        let omega: Vec<DMatrix<f64>> = (0..m)
            .map(|b| {
                let a = normal_matrix(seed * 7 + b as u64, 6, 6);
                a.transpose() * a
            })
            .collect();
        let pen = PenaltySpec::new(vec![0.0; m], &omega).map_err(err)?;
        let mpl = fit_mpl(&d, &pen, MplOptions::default()).map_err(err)?;
        worst = worst.max(rel(&mpl.b, &fit_ls(&d).map_err(err)?.b));
    }
    let secs = start.elapsed().as_secs_f64();
    Ok((worst < 1e-7 && secs < 10.0, format!("max rel diff {worst:.2e} (< 1e-7), {secs:.2}s (< 10s)")))
}

fn kronecker_is_ols() -> Check {
    let mut worst = 0.0f64;
    for seed in 0..50u64 {
        let d = random_design(40 + seed as usize % 20, &[3, 2 + seed as usize % 4], 5, 1000 + seed);
        let ztz = d.z.transpose() * &d.z;
        let direct = ztz.lu().solve(&(d.z.transpose() * &d.c)).ok_or("singular Z'Z")?;
        worst = worst.max((fit_ls_kronecker(&d).map_err(err)?.b - direct).amax());
    }
    Ok((worst < 1e-9, format!("max abs diff {worst:.2e} (< 1e-9)")))
}

fn min_eig_ratio(m: &DMatrix<f64>) -> f64 {
    let e = m.clone().symmetric_eigen().eigenvalues;
    e.min() / e.amax().max(1.0)
}

fn basis_suite() -> Check {
    let start = Instant::now();
    let mut rng = substream(2718, 0);
    let (mut pou, mut fourier, mut gauss, mut psd) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..60 {
        let lower = rng.random_range(-5.0..5.0);
        let domain = Domain::new(lower, lower + rng.random_range(0.5..20.0)).map_err(err)?;
        let k = rng.random_range(4..20usize);
        let pts: Vec<f64> = (0..201).map(|i| domain.lower + domain.length() * i as f64 / 200.0).collect();

        let order = rng.random_range(1..=4usize.min(k));
        let phi = BasisSystem::bspline(domain, k, order).map_err(err)?.evaluate(&pts).map_err(err)?;
        for row in phi.row_iter() {
            pou = pou.max((row.sum() - 1.0).abs());
        }

        let kf = rng.random_range(1..30usize);
        let g = BasisSystem::fourier(domain, kf).map_err(err)?.gram().values;
        fourier = fourier.max((g - DMatrix::identity(kf, kf)).amax());

        let gb = BasisSystem::gaussian(domain, k).map_err(err)?;
        let (sigma, centers) = (gb.width(), gb.centers().to_vec());
        let g = gb.gram().values;
        for a in 0..k {
            for b in a..k {
                // The product is a Gaussian bump at the midpoint; +-12 widths covers it.
                let mid = 0.5 * (centers[a] + centers[b]);
                let breaks: Vec<f64> = (0..=48).map(|p| mid - 12.0 * sigma + p as f64 * sigma / 2.0).collect();
                let (nodes, weights) = gauss_legendre_rule(&breaks, 10);
                let q: f64 = nodes
                    .iter()
                    .zip(&weights)
                    .map(|(t, w)| w * (-((t - centers[a]).powi(2) + (t - centers[b]).powi(2)) / (2.0 * sigma * sigma)).exp())
                    .sum();
                if q > 1e-12 * g[(a, a)] {
                    gauss = gauss.max((g[(a, b)] - q).abs() / q);
                }
            }
        }

        for kind in BasisKind::ALL {
            let basis = BasisSystem::new(kind, domain, k).map_err(err)?;
            psd = psd.min(min_eig_ratio(&basis.gram().values));
            for n in 0..3 {
                psd = psd.min(min_eig_ratio(&basis.penalty(n).map_err(err)?.values));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let ok = pou < 1e-12 && fourier < 1e-8 && gauss < 1e-6 && psd > -1e-9 && secs < 30.0;
    Ok((
        ok,
        format!(
            "unity {pou:.1e}, Fourier Gram {fourier:.1e}, Gaussian Gram rel {gauss:.1e}, min eig ratio {psd:.1e}, {secs:.2}s"
        ),
    ))
}

fn smoothing_limits() -> Check {
    let mut interp = 0.0f64;
    let mut line = 0.0f64;
    for seed in 0..10u64 {
        let j = 6 + seed as usize;
        let t: Vec<f64> = (0..j).map(|i| i as f64 / (j - 1) as f64).collect();
        let values = normal_matrix(seed, 3, j);
        let curves = SampledCurves::new(t.clone(), values.clone(), "y").map_err(err)?;
        let basis = BasisSystem::bspline(curves.domain(), j, 4.min(j)).map_err(err)?;
        let fit = penalized_fit(&curves, &basis, 0.0, 2).map_err(err)?;
        interp = interp.max((fit.reconstruct(&t).map_err(err)? - &values).amax());

        let t: Vec<f64> = (0..40).map(|i| -1.0 + 3.0 * i as f64 / 39.0).collect();
        let y: Vec<f64> = t.iter().map(|x| (2.0 * x + seed as f64).sin() + 0.5 * x * x).collect();
        let curves = SampledCurves::new(t.clone(), DMatrix::from_row_slice(1, 40, &y), "y").map_err(err)?;
        let basis = BasisSystem::bspline(curves.domain(), 8 + seed as usize, 4).map_err(err)?;
        let smooth = penalized_fit(&curves, &basis, 1e8, 2).map_err(err)?.reconstruct(&t).map_err(err)?;
        let n = t.len() as f64;
        let (mx, my) = (t.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
        let sxy: f64 = t.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = t.iter().map(|a| (a - mx).powi(2)).sum();
        for (c, &x) in t.iter().enumerate() {
            line = line.max((smooth[(0, c)] - (my + sxy / sxx * (x - mx))).abs());
        }
    }
    Ok((interp < 1e-8 && line < 1e-3, format!("K=J interpolation {interp:.1e}, lambda=1e8 vs LS line {line:.1e} (< 1e-3)")))
}

fn campaign(dgp: DgpCase, bases: &[BasisKind], criteria: &[Criterion], boot: Option<usize>) -> Result<McResult, String> {
    let mut cfg = CampaignConfig::new(dgp, 100, 20240601);
    cfg.bases = bases.to_vec();
    cfg.methods = vec![FitMethod::Ls];
    cfg.criteria = criteria.to_vec();
    cfg.amse_scale = AmseScale::GridSum;
    cfg.bootstrap = boot.map(|b| BootstrapConfig { replicates: b, alpha: 0.05, seed: 77 });
    run_campaign(&cfg).map_err(err)
}

fn ls(basis: BasisKind, criterion: Criterion) -> CellKey {
    CellKey { basis, method: FitMethod::Ls, criterion }
}

fn amse(r: &McResult, basis: BasisKind, criterion: Criterion) -> Result<f64, String> {
    r.mean(ls(basis, criterion), Metric::Amse).ok_or_else(|| format!("no AMSE for {basis}+{criterion}"))
}

fn case1_table() -> Check {
    let r = campaign(DgpCase::case1(100, 0.5), &BasisKind::ALL, &[Criterion::Gic, Criterion::Gbic], None)?;
    let bs = amse(&r, BasisKind::BSpline, Criterion::Gic)?;
    let fo = amse(&r, BasisKind::Fourier, Criterion::Gic)?;
    let (g_gic, g_gbic) = (amse(&r, BasisKind::Gaussian, Criterion::Gic)?, amse(&r, BasisKind::Gaussian, Criterion::Gbic)?);
    let ok = (7.5..=14.0).contains(&bs) && fo > bs && g_gbic > g_gic;
    Ok((
        ok,
        format!(
            "LS, MC=100: B-spline+GIC {bs:.3} (in [7.5, 14]); Fourier+GIC {fo:.3} > {bs:.3}; Gaussian GBIC {g_gbic:.3} > GIC {g_gic:.3}"
        ),
    ))
}

fn case2_table() -> Check {
    let r = campaign(DgpCase::case2(100), &[BasisKind::Gaussian], &[Criterion::Gcv, Criterion::Gbic], None)?;
    let gcv = amse(&r, BasisKind::Gaussian, Criterion::Gcv)?;
    let gbic = amse(&r, BasisKind::Gaussian, Criterion::Gbic)?;
    let ok = (0.4..=0.9).contains(&gcv) && gbic > 10.0;
    Ok((ok, format!("LS, MC=100: Gaussian+GCV {gcv:.3} (in [0.4, 0.9]); Gaussian+GBIC {gbic:.3} (> 10)")))
}

fn bootstrap_calibration() -> Check {
    let j = DgpCase::case1(100, 2.0).j as f64;
    let r = campaign(DgpCase::case1(100, 2.0), &[BasisKind::BSpline], &Criterion::ALL, Some(100))?;
    let cp = r.mean(ls(BasisKind::BSpline, Criterion::Gic), Metric::Cp).ok_or("no CP")?;
    let mut structural = true;
    let mut cells = Vec::new();
    for c in Criterion::ALL {
        let key = ls(BasisKind::BSpline, c);
        let (w, s) = (r.mean(key, Metric::Width).ok_or("no width")?, r.mean(key, Metric::Score).ok_or("no score")?);
        structural &= s >= w / j;
        cells.push(format!("{c} {s:.2}>={:.2}", w / j));
    }
    Ok((
        (0.93..=0.99).contains(&cp) && structural,
        format!("B=100, MC=100: B-spline+GIC CP {cp:.4} (in [0.93, 0.99]); score >= mean width: {}", cells.join(", ")),
    ))
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

fn gic_derivatives() -> Check {
    let (mut worst_r, mut worst_q) = (0.0f64, 0.0f64);
    for seed in 0..20u64 {
        let d = random_design(25, &[2 + (seed % 2) as usize], 2, 700 + seed);
        let p = d.p();
        let a = normal_matrix(seed ^ 0xF00, p, p);
        let pen = PenaltySpec::new(vec![0.05 + 0.1 * (seed % 3) as f64], &[a.transpose() * a + DMatrix::identity(p, p)])
            .map_err(err)?;
        let model = fit_mpl(&d, &pen, MplOptions { max_iter: 2000, tol: 1e-10 }).map_err(err)?;
        let theta = pack_theta(&model.b, &model.sigma);
        let n = d.n() as f64;
        let weighted = model.weighted_penalty();
        let (r, q) = information_matrices(&d, &model).map_err(err)?;

        let mean = |t: &DVector<f64>| (0..d.n()).map(|i| penalized_loglik_obs(&d, &weighted, t, i)).sum::<f64>() / n;
        worst_r = worst_r.max(rel(&r, &-numeric_hessian(&mean, &theta, 1e-4)));

        let g = numeric_gradients(&d, &theta, 1e-6);
        let pb = &weighted * &model.b;
        let mut tilde = g.clone();
        for mut col in tilde.column_iter_mut() {
            for (k, v) in pb.iter().enumerate() {
                col[k] -= v;
            }
        }
        worst_q = worst_q.max(rel(&q, &(tilde * g.transpose() / n)));
    }
    Ok((worst_r < 1e-4 && worst_q < 1e-4, format!("max rel error R {worst_r:.1e}, Q {worst_q:.1e} (< 1e-4)")))
}

/// Best of `reps` wall times.
fn best_time(reps: usize, mut f: impl FnMut() -> Result<(), String>) -> Result<Duration, String> {
    let mut best = Duration::MAX;
    for _ in 0..reps {
        let start = Instant::now();
        f()?;
        best = best.min(start.elapsed());
    }
    Ok(best)
}

fn timing_ordering() -> Check {
    let grid: Vec<f64> = (0..=20).map(|i| -10.0 + i as f64).collect();
    let mut times = Vec::new();
    for k in [10, 40] {
        // Case I predictors span a low-dimensional space, so use a generic
        // full-rank design with a B-spline roughness penalty instead.
        let d = random_design(100, &[k], k, 31);
        let domain = Domain::new(0.0, 1.0).map_err(err)?;
        let omega = BasisSystem::bspline(domain, k, 4).map_err(err)?.penalty(2).map_err(err)?.values;
        let ls = best_time(5, || fit_ls(&d).map(|_| ()).map_err(err))?;
        let mpl = best_time(1, || {
            for &l in &grid {
                let pen = PenaltySpec::new(vec![10f64.powf(l)], &[omega.clone()]).map_err(err)?;
                // Non-converging lambdas are skipped, as the selection loop does.
                if let Ok(m) = fit_mpl(&d, &pen, MplOptions::default()) {
                    evaluate_criterion(&d, &m, Criterion::Gic).map_err(err)?;
                }
            }
            Ok(())
        })?;
        times.push((ls.as_secs_f64(), mpl.as_secs_f64()));
    }
    let [(ls10, mpl10), (ls40, mpl40)] = [times[0], times[1]];
    let ok = mpl10 > ls10 && mpl40 / mpl10 > ls40 / ls10;
    Ok((
        ok,
        format!(
            "K=10 LS {ls10:.2e}s, MPL {mpl10:.2e}s; K=40/K=10 ratio LS {:.1}, MPL {:.1}",
            ls40 / ls10,
            mpl40 / mpl10
        ),
    ))
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_fofr")).args(args).output().map_err(err)?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("fofr {}: {}", args[0], String::from_utf8_lossy(&out.stderr).trim()))
    }
}

/// Every file under `dir`, by relative path.
fn snapshot(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).map_err(err)? {
            let path = entry.map_err(err)?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let name = path.strip_prefix(dir).map_err(err)?.display().to_string();
                out.push((name, std::fs::read(&path).map_err(err)?));
            }
        }
    }
    out.sort();
    Ok(out)
}

fn determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(err)?;
    let root = tmp.path();
    let data = root.join("data");
    run_cli(&[
        "simulate", "--case", "II", "--n", "24", "--mc", "1", "--boot", "0", "--lambda-size", "3", "--bases",
        "bspline", "--criteria", "gcv", "--methods", "ls", "--seed", "4", "--export-data", "--out",
        data.to_str().unwrap(),
    ])?;
    let x = data.join("data/x.csv");
    let y = data.join("data/y.csv");
    let (x, y) = (x.to_str().unwrap(), y.to_str().unwrap());

    let commands: Vec<Vec<&str>> = vec![
        vec!["simulate", "--case", "I", "--rho", "2", "--n", "20", "--mc", "2", "--boot", "10", "--lambda-size", "7", "--seed", "9"],
        vec!["fit", "--response", y, "--predictor", x, "--k", "7", "--lambda-size", "7", "--boot", "10", "--seed", "9"],
        vec!["smooth", "--input", x, "--k-max", "9", "--lambda-size", "7"],
        vec!["bootstrap", "--response", y, "--predictor", x, "--k", "7", "--lambda-size", "7", "--boot", "20", "--seed", "9"],
    ];
    let mut differing = Vec::new();
    for (i, cmd) in commands.iter().enumerate() {
        let mut snaps = Vec::new();
        for run in 0..2 {
            let out = root.join(format!("c{i}_{run}"));
            let mut args = cmd.clone();
            args.extend(["--out", out.to_str().unwrap()]);
            run_cli(&args)?;
            snaps.push(snapshot(&out)?);
        }
        if snaps[0] != snaps[1] || snaps[0].is_empty() {
            differing.push(cmd[0]);
        }
    }

    let mut cfg = CampaignConfig::new(DgpCase::case1(30, 0.5), 4, 5);
    cfg.log10_lambda = (0..=6).map(|i| -6.0 + 2.0 * i as f64).collect();
    cfg.bootstrap = Some(BootstrapConfig { replicates: 10, alpha: 0.05, seed: 5 });
    let by_workers: Vec<McResult> = [1, 2, 4]
        .iter()
        .map(|&w| {
            cfg.workers = w;
            run_campaign(&cfg).map_err(err)
        })
        .collect::<Result<_, _>>()?;
    let pool_free = by_workers.windows(2).all(|w| w[0] == w[1]);
    let ok = differing.is_empty() && pool_free;
    Ok((
        ok,
        format!(
            "CLI reruns byte-identical for {} of {} commands{}; campaign equal for 1/2/4 workers: {pool_free}",
            commands.len() - differing.len(),
            commands.len(),
            if differing.is_empty() { String::new() } else { format!(" (differ: {})", differing.join(", ")) }
        ),
    ))
}
