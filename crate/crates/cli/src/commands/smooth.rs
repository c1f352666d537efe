use fofr::smoothing::select_smoothing;
use fofr::{BasisKind, Criterion};

use crate::args::{join, parse_domain, parse_list, SmoothArgs};
use crate::commands::{create_out_dir, to_sampled};
use crate::csvio::{num, read_curves, write_curves, CurveCsv, Table};
use crate::error::{CliError, CliResult};
use crate::manifest::{file_digest, Manifest};

pub fn run(args: &SmoothArgs) -> CliResult<()> {
    let bases: Vec<BasisKind> = parse_list("--bases", &args.bases)?;
    let criteria: Vec<Criterion> = parse_list("--criteria", &args.criteria)?;
    let (grid, fix_k) = args.k.selection(&args.lambda)?;
    let domain = parse_domain(args.domain.as_deref())?;
    let table = read_curves(&args.input)?;
    let name = args.input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "input".into());
    let curves = to_sampled(&table, &name, domain)?;

    let mut m = Manifest::new("smooth");
    m.set("input", args.input.display());
    m.set("input_sha256", file_digest(&args.input)?);
    m.set("bases", join(&bases));
    m.set("criteria", join(&criteria));
    m.set("penalty_order", args.order);
    m.set("domain", format!("{},{}", curves.domain().lower, curves.domain().upper));
    args.k.record(&mut m);
    args.lambda.record(&mut m);
    let hash = m.hash();

    create_out_dir(&args.out)?;
    let mut report = Table::new(&["variable", "basis", "criterion", "K", "log10_lambda", "df", "value", "rss", "status"]);
    let mut failures = 0;
    for &kind in &bases {
        for &criterion in &criteria {
            match select_smoothing(&curves, kind, &grid, criterion, fix_k, args.order) {
                Ok(fit) => {
                    report.push(vec![
                        name.clone(),
                        kind.to_string(),
                        criterion.to_string(),
                        fit.basis.n_basis().to_string(),
                        num(Some(fit.lambda.log10())),
                        num(Some(fit.df)),
                        num(fit.criterion_value),
                        num(Some(fit.rss)),
                        "ok".into(),
                    ]);
                    let values = fit.reconstruct(curves.grid())?;
                    let out = CurveCsv { grid: table.grid.clone(), labels: table.labels.clone(), values };
                    write_curves(&args.out.join(format!("smoothed_{kind}_{criterion}.csv")), &out, &hash)?;
                }
                Err(e) => {
                    failures += 1;
                    let na = || "NA".to_string();
                    report.push(vec![
                        name.clone(),
                        kind.to_string(),
                        criterion.to_string(),
                        na(),
                        na(),
                        na(),
                        na(),
                        na(),
                        e.to_string(),
                    ]);
                }
            }
        }
    }
    report.write(&args.out.join("selection.csv"), &hash)?;
    m.write(&args.out)?;
    if failures == bases.len() * criteria.len() {
        return Err(CliError::Model(fofr::FofrError::Selection("no basis/criterion combination could be fitted".into())));
    }
    Ok(())
}
