use std::collections::BTreeMap;

use fofr::simulation::{generate, run_campaign, CellKey, Metric, NoiseScale};
use fofr::{BootstrapConfig, CampaignConfig, Criterion, DgpCase, McResult};

use crate::args::{parse_amse_scale, parse_one, SimulateArgs};
use crate::commands::create_out_dir;
use crate::csvio::{num, write_curves, CurveCsv, Table};
use crate::error::{CliError, CliResult};
use crate::manifest::Manifest;

pub fn config(args: &SimulateArgs) -> CliResult<(CampaignConfig, Manifest)> {
    let case: fofr::simulation::Case = parse_one("--case", &args.case)?;
    let dgp = match (case, args.rho) {
        (fofr::simulation::Case::I, Some(rho)) => DgpCase::case1(args.n, rho),
        (fofr::simulation::Case::I, None) => return Err(CliError::Usage("--rho is required for --case I".into())),
        (_, Some(_)) => return Err(CliError::Usage(format!("--rho only applies to --case I, not --case {case}"))),
        (fofr::simulation::Case::II, None) => DgpCase::case2(args.n),
        (fofr::simulation::Case::III, None) => DgpCase::case3(args.n),
    };
    dgp.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    if args.mc == 0 {
        return Err(CliError::Usage("--mc must be positive".into()));
    }
    if args.k < 4 {
        return Err(CliError::Usage("--k must be at least 4".into()));
    }
    args.boot.validate()?;
    let mut cfg = CampaignConfig::new(dgp, args.mc, args.seed);
    cfg.bases = args.model.bases()?;
    cfg.methods = args.model.methods()?;
    cfg.criteria = args.model.criteria()?;
    cfg.n_basis = args.k;
    cfg.log10_lambda = args.lambda.grid()?;
    cfg.bootstrap = (args.boot.boot > 0)
        .then_some(BootstrapConfig { replicates: args.boot.boot, alpha: args.boot.alpha, seed: args.seed });
    cfg.amse_scale = parse_amse_scale(&args.amse_scale)?;
    cfg.workers = args.workers;
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let mut m = Manifest::new("simulate");
    m.set("case", case);
    m.set("rho", args.rho.map(|r| r.to_string()).unwrap_or_else(|| "none".into()));
    m.set("n", args.n);
    m.set("j", dgp.j);
    m.set("domain", if case == fofr::simulation::Case::I { "-1,1".to_string() } else { format!("1,{}", dgp.j) });
    m.set("mc", args.mc);
    m.set("seed", args.seed);
    m.set("k", args.k);
    args.model.record(&mut m)?;
    args.lambda.record(&mut m);
    args.boot.record(&mut m);
    m.set("amse_scale", cfg.amse_scale.name());
    m.set("mpl_max_iter", cfg.mpl.max_iter);
    m.set("mpl_tol", cfg.mpl.tol);
    m.set("export_data", args.export_data);
    // Worker count does not change results, so it stays out of the hash.
    Ok((cfg, m))
}

pub fn run(args: &SimulateArgs) -> CliResult<()> {
    let (cfg, manifest) = config(args)?;
    create_out_dir(&args.out)?;
    let result = run_campaign(&cfg)?;
    let hash = manifest.hash();
    tidy_table(&cfg, &result).write(&args.out.join("results.csv"), &hash)?;
    wide_table(&cfg, &result).write(&args.out.join("table.csv"), &hash)?;
    if args.export_data {
        export(&cfg, &args.out.join("data"), &hash)?;
    }
    manifest.write(&args.out)?;
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn tidy_table(cfg: &CampaignConfig, result: &McResult) -> Table {
    let mut t = Table::new(&["basis", "method", "criterion", "metric", "mean", "se", "sd", "count", "failures"]);
    for key in cfg.cells() {
        let cell = result.cells.get(&key);
        for metric in Metric::ALL {
            let s = cell.and_then(|c| c.metrics.get(&metric));
            t.push(vec![
                key.basis.to_string(),
                key.method.to_string(),
                key.criterion.to_string(),
                metric.to_string(),
                num(s.map(|s| s.mean)),
                num(s.map(|s| s.se)),
                num(s.map(|s| s.sd)),
                s.map(|s| s.count).unwrap_or(0).to_string(),
                cell.map(|c| c.failures).unwrap_or(cfg.mc).to_string(),
            ]);
        }
    }
    t
}

/// One row per basis, method and metric with a `mean (se)` column per criterion.
fn wide_table(cfg: &CampaignConfig, result: &McResult) -> Table {
    let mut header = vec!["basis", "method", "metric"];
    let names: Vec<&str> = cfg.criteria.iter().map(Criterion::name).collect();
    header.extend(names.iter());
    let mut t = Table::new(&header);
    let mut seen = BTreeMap::new();
    for key in cfg.cells() {
        seen.entry((cfg.bases.iter().position(|b| *b == key.basis), key.basis, key.method)).or_insert(());
    }
    for &(_, basis, method) in seen.keys() {
        for metric in Metric::ALL {
            let mut row = vec![basis.to_string(), method.to_string(), metric.to_string()];
            for &criterion in &cfg.criteria {
                let s = result.cells.get(&CellKey { basis, method, criterion }).and_then(|c| c.metrics.get(&metric));
                row.push(match s {
                    Some(s) => format!("{:.4} ({:.4})", s.mean, s.se),
                    None => "NA".into(),
                });
            }
            t.push(row);
        }
    }
    t
}

fn export(cfg: &CampaignConfig, dir: &std::path::Path, hash: &str) -> CliResult<()> {
    create_out_dir(dir)?;
    let data = generate(&cfg.dgp, cfg.seed, 0, NoiseScale::default())?;
    let labels: Vec<String> = (1..=cfg.dgp.n).map(|i| format!("curve_{i}")).collect();
    let table = |grid: &[f64], values: &nalgebra::DMatrix<f64>| CurveCsv {
        grid: grid.to_vec(),
        labels: labels.clone(),
        values: values.clone(),
    };
    write_curves(&dir.join("x.csv"), &table(data.predictor.grid(), data.predictor.values()), hash)?;
    write_curves(&dir.join("y.csv"), &table(data.response.grid(), data.response.values()), hash)?;
    write_curves(&dir.join("truth.csv"), &table(data.response.grid(), &data.truth), hash)?;
    Ok(())
}
