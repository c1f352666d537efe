pub mod bootstrap;
pub mod fit;
pub mod simulate;
pub mod smooth;

use std::path::{Path, PathBuf};

use fofr::linalg::{scaled_condition, MAX_CONDITION};
use fofr::rng::substream;
use fofr::{DesignBlocks, Domain, FofrError, SampledCurves};
use rand::seq::index::sample;

use crate::args::DataArgs;
use crate::csvio::{read_curves, CurveCsv};
use crate::error::{CliError, CliResult};
use crate::manifest::{file_digest, Manifest};

/// A named variable read from disk.
#[derive(Debug, Clone)]
pub struct Variable {
    pub name: String,
    pub table: CurveCsv,
}

impl Variable {
    pub fn sampled(&self, domain: Option<Domain>) -> CliResult<SampledCurves> {
        to_sampled(&self.table, &self.name, domain)
    }
}

pub fn to_sampled(table: &CurveCsv, name: &str, domain: Option<Domain>) -> CliResult<SampledCurves> {
    let curves = match domain {
        Some(d) => SampledCurves::with_domain(table.grid.clone(), table.values.clone(), name, d),
        None => SampledCurves::new(table.grid.clone(), table.values.clone(), name),
    }
    .map_err(|e| CliError::Usage(format!("{name}: {e}")))?;
    curves.with_curve_labels(table.labels.clone()).map_err(CliError::from)
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| path.display().to_string())
}

/// Reads the response and predictors and aligns every predictor to the
/// response's curve order. Label mismatches list the offending labels.
pub fn load_data(args: &DataArgs, manifest: &mut Manifest) -> CliResult<(Variable, Vec<Variable>)> {
    let response = Variable { name: stem(&args.response), table: read_curves(&args.response)? };
    manifest.set("response", args.response.display());
    manifest.set("response_sha256", file_digest(&args.response)?);
    let mut predictors = Vec::new();
    let mut names: Vec<String> = vec![response.name.clone()];
    for (m, path) in args.predictors.iter().enumerate() {
        let table = read_curves(path)?;
        let aligned = align_labels(&response.table, &table, path)?;
        let mut name = stem(path);
        if names.contains(&name) {
            name = format!("{name}_{}", m + 1);
        }
        names.push(name.clone());
        manifest.set(&format!("predictor_{}", m + 1), path.display());
        manifest.set(&format!("predictor_{}_sha256", m + 1), file_digest(path)?);
        predictors.push(Variable { name, table: aligned });
    }
    Ok((response, predictors))
}

fn align_labels(response: &CurveCsv, other: &CurveCsv, path: &PathBuf) -> CliResult<CurveCsv> {
    let missing: Vec<&str> =
        response.labels.iter().filter(|l| !other.labels.contains(l)).map(String::as_str).collect();
    let extra: Vec<&str> =
        other.labels.iter().filter(|l| !response.labels.contains(l)).map(String::as_str).collect();
    if !missing.is_empty() || !extra.is_empty() {
        let mut parts = Vec::new();
        if !missing.is_empty() {
            parts.push(format!("missing {}", missing.join(", ")));
        }
        if !extra.is_empty() {
            parts.push(format!("not in the response: {}", extra.join(", ")));
        }
        return Err(CliError::Input {
            path: path.display().to_string(),
            message: format!("curve labels differ from the response ({})", parts.join("; ")),
        });
    }
    let rows: Vec<usize> = response
        .labels
        .iter()
        .map(|l| other.labels.iter().position(|o| o == l).expect("checked above"))
        .collect();
    Ok(other.select(&rows))
}

/// Seeded split without replacement; `round(fraction * n)` curves train.
pub fn train_test_split(n: usize, fraction: f64, seed: u64) -> CliResult<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(CliError::Usage(format!("--train-fraction must lie in (0, 1), got {fraction}")));
    }
    let n_train = (fraction * n as f64).round() as usize;
    if n_train < 2 || n_train >= n {
        return Err(CliError::Usage(format!(
            "train fraction {fraction} of {n} curves leaves {n_train} for training and {} for testing",
            n.saturating_sub(n_train)
        )));
    }
    let mut rng = substream(seed, 0x5711);
    let mut train: Vec<usize> = sample(&mut rng, n, n_train).into_vec();
    train.sort_unstable();
    let test: Vec<usize> = (0..n).filter(|i| !train.contains(i)).collect();
    Ok((train, test))
}

/// Names the first predictor whose block makes `Z'Z` singular.
pub fn collinearity_error(design: &DesignBlocks, names: &[String], cause: FofrError) -> CliError {
    let offsets = design.block_offsets();
    for (m, name) in names.iter().enumerate() {
        let cols = offsets[m] + design.block_sizes[m];
        let z = design.z.columns(0, cols);
        let g = z.transpose() * z;
        if scaled_condition(&g) >= MAX_CONDITION {
            let with = if m == 0 { String::new() } else { format!(" together with {}", names[..m].join(", ")) };
            return CliError::Model(FofrError::Rank(format!(
                "least squares is singular: predictor '{name}' is collinear{with}"
            )));
        }
    }
    CliError::Model(cause)
}

pub fn create_out_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_of_twenty_seven() {
        let (train, test) = train_test_split(27, 0.7, 3).unwrap();
        assert_eq!((train.len(), test.len()), (19, 8));
        let mut all: Vec<usize> = train.iter().chain(&test).cloned().collect();
        all.sort_unstable();
        assert_eq!(all, (0..27).collect::<Vec<_>>());
        assert_eq!(train_test_split(27, 0.7, 3).unwrap().0, train);
        assert_ne!(train_test_split(27, 0.7, 4).unwrap().0, train);
        assert!(train_test_split(27, 1.0, 3).is_err());
    }
}
