use fofr::bootstrap::{band_coverage, band_width, bootstrap_bands_at, interval_score};
use fofr::regression::{build_design, center_curves, design_rows, fit_ls, predict_from_rows};
use fofr::rng::derive_seed;
use fofr::simulation::{select_mpl_lambda, AmseScale};
use fofr::smoothing::{penalized_fit, select_smoothing, SelectionGrid, DEFAULT_PENALTY_ORDER};
use fofr::{
    BasisKind, BootstrapBand, BootstrapConfig, Criterion, DesignBlocks, Domain, ErrorCurves, FitMethod, FofrError,
    FofrModel, MplOptions, Refit, SampledCurves, SmoothedCurves,
};
use nalgebra::DMatrix;

use crate::args::{parse_amse_scale, parse_domain, FitArgs};
use crate::commands::{collinearity_error, create_out_dir, load_data, train_test_split, Variable};
use crate::csvio::{num, Table};
use crate::error::{CliError, CliResult};
use crate::manifest::Manifest;

/// Smoothed training variables for one basis and criterion.
pub struct Smoothed {
    pub response: SmoothedCurves,
    pub predictors: Vec<SmoothedCurves>,
}

pub fn smooth_variables(
    response: &SampledCurves,
    predictors: &[SampledCurves],
    kind: BasisKind,
    criterion: Criterion,
    grid: &SelectionGrid,
    fix_k: Option<usize>,
) -> fofr::Result<Smoothed> {
    let sel = |c: &SampledCurves| select_smoothing(c, kind, grid, criterion, fix_k, DEFAULT_PENALTY_ORDER);
    Ok(Smoothed { response: sel(response)?, predictors: predictors.iter().map(sel).collect::<fofr::Result<_>>()? })
}

/// A fitted regression with the design it came from.
pub struct CellFit {
    pub design: DesignBlocks,
    pub model: FofrModel,
    pub lambda: Option<f64>,
}

pub fn fit_cell(
    smoothed: &Smoothed,
    method: FitMethod,
    criterion: Criterion,
    log10_lambda: &[f64],
    names: &[String],
) -> CliResult<CellFit> {
    let xs = smoothed.predictors.iter().map(center_curves).collect::<fofr::Result<Vec<_>>>()?;
    let design = build_design(&center_curves(&smoothed.response)?, &xs)?;
    match method {
        FitMethod::Ls => match fit_ls(&design) {
            Ok(model) => Ok(CellFit { design, model, lambda: None }),
            Err(e) if e.is_rank() => Err(collinearity_error(&design, names, e)),
            Err(e) => Err(e.into()),
        },
        FitMethod::Mpl => {
            let (model, lambda) = select_mpl_lambda(&design, log10_lambda, criterion, MplOptions::default())?;
            Ok(CellFit { design, model, lambda: Some(lambda) })
        }
    }
}

/// Bands for the rows `z_new`, refitting the cell's method inside each replicate.
pub fn cell_bands(
    cell: &CellFit,
    smoothed: &Smoothed,
    observed: &SampledCurves,
    z_new: &DMatrix<f64>,
    config: &BootstrapConfig,
) -> fofr::Result<BootstrapBand> {
    let grid = observed.grid();
    let fitted = predict_from_rows(&cell.model, &cell.design.z, grid)?;
    let errors = ErrorCurves::from_fits(observed.values(), &smoothed.response.reconstruct(grid)?, &fitted)?;
    let refit = Refit { method: cell.model.method, lambda: cell.lambda.unwrap_or(0.0), options: MplOptions::default() };
    bootstrap_bands_at(&cell.design, &errors, &refit, config, grid, z_new)
}

/// Mean width and mean interval score over curves, plus coverage.
pub fn band_metrics(band: &BootstrapBand, target: &DMatrix<f64>) -> fofr::Result<(f64, f64, f64)> {
    let n = target.nrows();
    let cp = band_coverage(band, target)?;
    let width = (0..n).map(|i| band_width(band, i)).sum::<f64>() / n as f64;
    let score = (0..n)
        .map(|i| interval_score(band, i, target.row(i).transpose().as_slice()))
        .sum::<f64>()
        / n as f64;
    Ok((cp, width, score))
}

/// Stable seed for a cell, independent of which cells were requested.
pub fn cell_seed(seed: u64, kind: BasisKind, method: FitMethod, criterion: Criterion) -> u64 {
    let pos = |i: Option<usize>| i.expect("enum listed in ALL") as u64;
    derive_seed(
        seed,
        &[
            pos(BasisKind::ALL.iter().position(|k| *k == kind)),
            pos(FitMethod::ALL.iter().position(|m| *m == method)),
            pos(Criterion::ALL.iter().position(|c| *c == criterion)),
        ],
    )
}

pub fn sampled_all(vars: &[Variable], domain: Option<Domain>) -> CliResult<Vec<SampledCurves>> {
    vars.iter().map(|v| v.sampled(domain)).collect()
}

pub fn push_selection(table: &mut Table, kind: BasisKind, criterion: Criterion, name: &str, role: &str, s: &SmoothedCurves) {
    table.push(vec![
        kind.to_string(),
        criterion.to_string(),
        name.to_string(),
        role.to_string(),
        s.basis.n_basis().to_string(),
        num(Some(s.lambda.log10())),
        num(Some(s.df)),
    ]);
}

pub fn push_model(table: &mut Table, prefix: &[String], model: &FofrModel, names: &[String]) {
    let mut row_labels = Vec::new();
    for (name, &size) in names.iter().zip(&model.block_sizes) {
        row_labels.extend((1..=size).map(|k| format!("{name}:{k}")));
    }
    let k_y = model.b.ncols();
    for (r, label) in row_labels.iter().enumerate() {
        for c in 0..k_y {
            let mut row = prefix.to_vec();
            row.extend(["B".into(), label.clone(), format!("y:{}", c + 1), num(Some(model.b[(r, c)]))]);
            table.push(row);
        }
    }
    for r in 0..k_y {
        for c in 0..k_y {
            let mut row = prefix.to_vec();
            row.extend(["Sigma".into(), format!("y:{}", r + 1), format!("y:{}", c + 1), num(Some(model.sigma[(r, c)]))]);
            table.push(row);
        }
    }
}

struct Outputs {
    selection: Table,
    metrics: Table,
    predictions: Table,
    models: Table,
}

pub fn run(args: &FitArgs) -> CliResult<()> {
    let bases = args.model.bases()?;
    let criteria = args.model.criteria()?;
    let methods = args.model.methods()?;
    let (grid, fix_k) = args.k.selection(&args.lambda)?;
    args.boot.validate()?;
    let scale: AmseScale = parse_amse_scale(&args.amse_scale)?;
    let domain = parse_domain(args.data.domain.as_deref())?;

    let mut m = Manifest::new("fit");
    let (response, predictors) = load_data(&args.data, &mut m)?;
    let (train, test) = train_test_split(response.table.n_curves(), args.train_fraction, args.seed)?;
    let labels = |rows: &[usize]| rows.iter().map(|&r| response.table.labels[r].clone()).collect::<Vec<_>>().join(",");
    m.set("train_fraction", args.train_fraction);
    m.set("seed", args.seed);
    m.set("train_curves", labels(&train));
    m.set("test_curves", labels(&test));
    m.set("domain", domain.map(|d| format!("{},{}", d.lower, d.upper)).unwrap_or_else(|| "grid".into()));
    m.set("amse_scale", scale.name());
    args.model.record(&mut m)?;
    args.k.record(&mut m);
    args.lambda.record(&mut m);
    args.boot.record(&mut m);
    let hash = m.hash();

    let pick = |v: &Variable, rows: &[usize]| Variable { name: v.name.clone(), table: v.table.select(rows) };
    let y_train = pick(&response, &train).sampled(domain)?;
    let y_test = pick(&response, &test).sampled(domain)?;
    let x_train = sampled_all(&predictors.iter().map(|v| pick(v, &train)).collect::<Vec<_>>(), domain)?;
    let x_test = sampled_all(&predictors.iter().map(|v| pick(v, &test)).collect::<Vec<_>>(), domain)?;
    let names: Vec<String> = predictors.iter().map(|v| v.name.clone()).collect();

    let mut out = Outputs {
        selection: Table::new(&["basis", "criterion", "variable", "role", "K", "log10_lambda", "df"]),
        metrics: Table::new(&["basis", "method", "criterion", "metric", "value", "status"]),
        predictions: Table::new(&["basis", "method", "criterion", "curve", "t", "observed", "fitted", "lower", "upper"]),
        models: Table::new(&["basis", "method", "criterion", "matrix", "row", "column", "value"]),
    };
    create_out_dir(&args.out)?;

    for &kind in &bases {
        for &criterion in &criteria {
            let smoothed = match smooth_variables(&y_train, &x_train, kind, criterion, &grid, fix_k) {
                Ok(s) => s,
                Err(e) => {
                    for &method in &methods {
                        push_unavailable(&mut out.metrics, kind, method, criterion, &e.to_string());
                    }
                    continue;
                }
            };
            push_selection(&mut out.selection, kind, criterion, &response.name, "response", &smoothed.response);
            for (name, s) in names.iter().zip(&smoothed.predictors) {
                push_selection(&mut out.selection, kind, criterion, name, "predictor", s);
            }
            for &method in &methods {
                let cell = match fit_cell(&smoothed, method, criterion, &grid.log10_lambda, &names) {
                    Ok(c) => c,
                    Err(CliError::Model(e)) if !e.is_rank() => {
                        push_unavailable(&mut out.metrics, kind, method, criterion, &e.to_string());
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                let config = BootstrapConfig {
                    replicates: args.boot.boot,
                    alpha: args.boot.alpha,
                    seed: cell_seed(args.seed, kind, method, criterion),
                };
                if let Err(e) = evaluate(&mut out, &cell, &smoothed, &y_train, &y_test, &x_test, (kind, method, criterion), &config, scale, &names) {
                    push_unavailable(&mut out.metrics, kind, method, criterion, &e.to_string());
                }
            }
        }
    }
    out.selection.write(&args.out.join("selection.csv"), &hash)?;
    out.metrics.write(&args.out.join("metrics.csv"), &hash)?;
    out.predictions.write(&args.out.join("predictions.csv"), &hash)?;
    out.models.write(&args.out.join("models.csv"), &hash)?;
    m.write(&args.out)
}

#[allow(clippy::too_many_arguments)]
fn evaluate(
    out: &mut Outputs,
    cell: &CellFit,
    smoothed: &Smoothed,
    y_train: &SampledCurves,
    y_test: &SampledCurves,
    x_test: &[SampledCurves],
    (kind, method, criterion): (BasisKind, FitMethod, Criterion),
    config: &BootstrapConfig,
    scale: AmseScale,
    names: &[String],
) -> fofr::Result<()> {
    let test_smoothed = x_test
        .iter()
        .zip(&smoothed.predictors)
        .map(|(c, s)| penalized_fit(c, &s.basis, s.lambda, DEFAULT_PENALTY_ORDER))
        .collect::<fofr::Result<Vec<_>>>()?;
    let ctx = cell.model.context.as_ref().ok_or_else(|| FofrError::Config("model has no basis context".into()))?;
    let z_new = design_rows(ctx, &test_smoothed)?;
    let grid = y_test.grid();
    let pred = predict_from_rows(&cell.model, &z_new, grid)?;
    let observed = y_test.values();
    let amse = scale.apply(observed, &pred)?;
    let band = if config.replicates > 0 { Some(cell_bands(cell, smoothed, y_train, &z_new, config)?) } else { None };
    let metrics = band.as_ref().map(|b| band_metrics(b, observed)).transpose()?;

    let id = [kind.to_string(), method.to_string(), criterion.to_string()];
    let mut push = |metric: &str, value: Option<f64>, missing: &str| {
        let mut row = id.to_vec();
        row.extend([metric.to_string(), num(value), if value.is_some() { "ok" } else { missing }.to_string()]);
        out.metrics.push(row);
    };
    push("AMSE", Some(amse), "");
    push("CP", metrics.map(|m| m.0), "no bootstrap");
    push("width", metrics.map(|m| m.1), "no bootstrap");
    push("score", metrics.map(|m| m.2), "no bootstrap");
    push("regression_log10_lambda", cell.lambda.map(f64::log10), "least squares has no penalty");

    for (i, label) in y_test.curve_labels().iter().enumerate() {
        for (c, t) in grid.iter().enumerate() {
            let mut row = id.to_vec();
            row.extend([
                label.clone(),
                num(Some(*t)),
                num(Some(observed[(i, c)])),
                num(Some(pred[(i, c)])),
                num(band.as_ref().map(|b| b.lower[(i, c)])),
                num(band.as_ref().map(|b| b.upper[(i, c)])),
            ]);
            out.predictions.push(row);
        }
    }
    push_model(&mut out.models, &id, &cell.model, names);
    Ok(())
}

fn push_unavailable(table: &mut Table, kind: BasisKind, method: FitMethod, criterion: Criterion, why: &str) {
    for metric in ["AMSE", "CP", "width", "score", "regression_log10_lambda"] {
        table.push(vec![
            kind.to_string(),
            method.to_string(),
            criterion.to_string(),
            metric.to_string(),
            "NA".into(),
            format!("not available: {why}"),
        ]);
    }
}
