use fofr::regression::predict_from_rows;
use fofr::{BasisKind, BootstrapConfig, Criterion, FitMethod};

use crate::args::{parse_domain, parse_one, BootstrapArgs};
use crate::commands::fit::{band_metrics, cell_bands, cell_seed, fit_cell, push_model, push_selection, sampled_all, smooth_variables};
use crate::commands::{create_out_dir, load_data};
use crate::csvio::{num, Table};
use crate::error::{CliError, CliResult};
use crate::manifest::Manifest;

/// Bands for every curve of the data set, at its own design row.
pub fn run(args: &BootstrapArgs) -> CliResult<()> {
    let kind: BasisKind = parse_one("--basis", &args.basis)?;
    let criterion: Criterion = parse_one("--criterion", &args.criterion)?;
    let method: FitMethod = parse_one("--method", &args.method)?;
    let (grid, fix_k) = args.k.selection(&args.lambda)?;
    args.boot.validate()?;
    if args.boot.boot == 0 {
        return Err(CliError::Usage("--boot must be at least 2 for the bootstrap command".into()));
    }
    let domain = parse_domain(args.data.domain.as_deref())?;

    let mut m = Manifest::new("bootstrap");
    let (response, predictors) = load_data(&args.data, &mut m)?;
    m.set("basis", kind);
    m.set("criterion", criterion);
    m.set("method", method);
    m.set("seed", args.seed);
    m.set("domain", domain.map(|d| format!("{},{}", d.lower, d.upper)).unwrap_or_else(|| "grid".into()));
    args.k.record(&mut m);
    args.lambda.record(&mut m);
    args.boot.record(&mut m);
    let hash = m.hash();

    let y = response.sampled(domain)?;
    let xs = sampled_all(&predictors, domain)?;
    let names: Vec<String> = predictors.iter().map(|v| v.name.clone()).collect();
    let smoothed = smooth_variables(&y, &xs, kind, criterion, &grid, fix_k)?;
    let cell = fit_cell(&smoothed, method, criterion, &grid.log10_lambda, &names)?;
    let config = BootstrapConfig {
        replicates: args.boot.boot,
        alpha: args.boot.alpha,
        seed: cell_seed(args.seed, kind, method, criterion),
    };
    let band = cell_bands(&cell, &smoothed, &y, &cell.design.z, &config)?;
    let fitted = predict_from_rows(&cell.model, &cell.design.z, y.grid())?;
    let (cp, width, score) = band_metrics(&band, y.values())?;

    create_out_dir(&args.out)?;
    let mut bands = Table::new(&["curve", "t", "observed", "fitted", "lower", "upper"]);
    for (i, label) in y.curve_labels().iter().enumerate() {
        for (c, t) in y.grid().iter().enumerate() {
            bands.push(vec![
                label.clone(),
                num(Some(*t)),
                num(Some(y.values()[(i, c)])),
                num(Some(fitted[(i, c)])),
                num(Some(band.lower[(i, c)])),
                num(Some(band.upper[(i, c)])),
            ]);
        }
    }
    let mut summary = Table::new(&["metric", "value"]);
    for (k, v) in [
        ("CP", cp),
        ("width", width),
        ("score", score),
        ("replicates_used", band.replicates_used as f64),
        ("replicates_skipped", band.skipped as f64),
    ] {
        summary.push(vec![k.to_string(), num(Some(v))]);
    }
    if let Some(l) = cell.lambda {
        summary.push(vec!["regression_log10_lambda".into(), num(Some(l.log10()))]);
    }
    let mut selection = Table::new(&["basis", "criterion", "variable", "role", "K", "log10_lambda", "df"]);
    push_selection(&mut selection, kind, criterion, &response.name, "response", &smoothed.response);
    for (name, s) in names.iter().zip(&smoothed.predictors) {
        push_selection(&mut selection, kind, criterion, name, "predictor", s);
    }
    let mut models = Table::new(&["basis", "method", "criterion", "matrix", "row", "column", "value"]);
    push_model(&mut models, &[kind.to_string(), method.to_string(), criterion.to_string()], &cell.model, &names);

    bands.write(&args.out.join("bands.csv"), &hash)?;
    summary.write(&args.out.join("summary.csv"), &hash)?;
    selection.write(&args.out.join("selection.csv"), &hash)?;
    models.write(&args.out.join("models.csv"), &hash)?;
    m.write(&args.out)
}
