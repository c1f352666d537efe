//! Curve tables: a header row of grid values, then one row per curve with
//! its label followed by the observations.

use std::io::Read;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{CliError, CliResult};
use crate::manifest::HASH_KEY;

#[derive(Debug, Clone, PartialEq)]
pub struct CurveCsv {
    pub grid: Vec<f64>,
    pub labels: Vec<String>,
    /// One row per curve.
    pub values: DMatrix<f64>,
}

impl CurveCsv {
    pub fn n_curves(&self) -> usize {
        self.labels.len()
    }

    pub fn select(&self, rows: &[usize]) -> CurveCsv {
        CurveCsv {
            grid: self.grid.clone(),
            labels: rows.iter().map(|&r| self.labels[r].clone()).collect(),
            values: self.values.select_rows(rows),
        }
    }
}

fn input_error(path: &str, message: impl Into<String>) -> CliError {
    CliError::Input { path: path.to_string(), message: message.into() }
}

fn parse_number(path: &str, row: usize, col: usize, cell: &str) -> CliResult<f64> {
    match cell.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(input_error(path, format!("row {row}, column {col}: '{cell}' is not a finite number"))),
    }
}

pub fn read_curves(path: &Path) -> CliResult<CurveCsv> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    parse_curves(file, &path.display().to_string())
}

/// Parses a curve table; `name` is used in error messages. Rows and
/// columns in messages are 1-based and count the header and label column.
pub fn parse_curves(reader: impl Read, name: &str) -> CliResult<CurveCsv> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        None => return Err(input_error(name, "file is empty")),
        Some(r) => r.map_err(|e| input_error(name, e.to_string()))?,
    };
    if header.len() < 2 {
        return Err(input_error(name, "header needs a label column and at least one grid value"));
    }
    let grid = header
        .iter()
        .enumerate()
        .skip(1)
        .map(|(c, cell)| parse_number(name, 1, c + 1, cell))
        .collect::<CliResult<Vec<f64>>>()?;
    if let Some(c) = grid.windows(2).position(|w| w[1] <= w[0]) {
        return Err(input_error(name, format!("row 1, column {}: grid is not strictly increasing", c + 3)));
    }
    let j = grid.len();
    let mut labels = Vec::new();
    let mut data = Vec::new();
    for (idx, rec) in records.enumerate() {
        let row = idx + 2;
        let rec = rec.map_err(|e| input_error(name, format!("row {row}: {e}")))?;
        if rec.len() != j + 1 {
            return Err(input_error(
                name,
                format!("row {row}: expected {} fields (label + {j} values), found {}", j + 1, rec.len()),
            ));
        }
        let label = rec[0].trim().to_string();
        if label.is_empty() {
            return Err(input_error(name, format!("row {row}, column 1: empty curve label")));
        }
        if labels.contains(&label) {
            return Err(input_error(name, format!("row {row}, column 1: duplicate curve label '{label}'")));
        }
        for (c, cell) in rec.iter().enumerate().skip(1) {
            data.push(parse_number(name, row, c + 1, cell)?);
        }
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(input_error(name, "no curves after the header"));
    }
    let values = DMatrix::from_row_slice(labels.len(), j, &data);
    Ok(CurveCsv { grid, labels, values })
}

/// Writes a curve table; the first header cell carries the manifest hash.
pub fn write_curves(path: &Path, curves: &CurveCsv, hash: &str) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    let mut header = vec![format!("{HASH_KEY}={hash}")];
    header.extend(curves.grid.iter().map(|v| v.to_string()));
    w.write_record(&header).map_err(|e| csv_io(path, e))?;
    for (i, label) in curves.labels.iter().enumerate() {
        let mut rec = vec![label.clone()];
        rec.extend(curves.values.row(i).iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// A tidy table; a trailing column repeats the manifest hash on every row.
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write(&self, path: &Path, hash: &str) -> CliResult<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
        let mut header = self.header.clone();
        header.push(HASH_KEY.to_string());
        w.write_record(&header).map_err(|e| csv_io(path, e))?;
        for row in &self.rows {
            let mut rec = row.clone();
            rec.push(hash.to_string());
            w.write_record(&rec).map_err(|e| csv_io(path, e))?;
        }
        w.flush().map_err(|e| CliError::io(path, e))
    }
}

fn csv_io(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::Input { path: path.display().to_string(), message: format!("{other:?}") },
    }
}

/// Shortest round-trip representation, or `NA`.
pub fn num(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => x.to_string(),
        _ => "NA".to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_small_table() {
        let text = "station,1,2,3\na,1.5,2,3\nb,-1,0,1e2\n";
        let c = parse_curves(text.as_bytes(), "t.csv").unwrap();
        assert_eq!(c.grid, vec![1.0, 2.0, 3.0]);
        assert_eq!(c.labels, vec!["a", "b"]);
        assert_eq!(c.values[(1, 2)], 100.0);
    }

    #[test]
    fn bad_cells_are_located() {
        let err = parse_curves("x,1,2\na,1,oops\n".as_bytes(), "t.csv").unwrap_err().to_string();
        assert!(err.contains("row 2, column 3"), "{err}");
        let err = parse_curves("x,1,2\na,1,NaN\n".as_bytes(), "t.csv").unwrap_err().to_string();
        assert!(err.contains("row 2, column 3"), "{err}");
        let err = parse_curves("x,1,1\na,1,2\n".as_bytes(), "t.csv").unwrap_err().to_string();
        assert!(err.contains("strictly increasing"), "{err}");
        let err = parse_curves("x,1,2\na,1\n".as_bytes(), "t.csv").unwrap_err().to_string();
        assert!(err.contains("row 2"), "{err}");
    }
}
