//! Quadrature datasets as CSV: one row per estimation signal, header
//! `a_q,a_p,b_q,b_p,r_q,r_p`, optional `#` comment lines.

use std::io::{Read, Write};
use std::path::Path;

use cvmdi::QuadratureDataset;

use crate::error::{CliError, CliResult};

pub const COLUMNS: [&str; 6] = ["a_q", "a_p", "b_q", "b_p", "r_q", "r_p"];

pub fn write_dataset<W: Write>(out: W, d: &QuadratureDataset) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| CliError::config(format!("writing dataset: {e}"));
    w.write_record(COLUMNS).map_err(err)?;
    for i in 0..d.len() {
        w.write_record(d.row(i).iter().map(|x| x.to_string())).map_err(err)?;
    }
    w.flush().map_err(|e| CliError::config(format!("writing dataset: {e}")))
}

pub fn read_dataset<R: Read>(input: R) -> CliResult<QuadratureDataset> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input);
    let header = r
        .headers()
        .map_err(|e| CliError::config(format!("dataset header: {e}")))?
        .clone();
    let mut index = [0usize; 6];
    for (k, name) in COLUMNS.iter().enumerate() {
        index[k] = header
            .iter()
            .position(|h| h == *name)
            .ok_or_else(|| CliError::config(format!("dataset is missing column '{name}'")))?;
    }
    let mut d = QuadratureDataset::default();
    for (line, record) in r.records().enumerate() {
        let record = record.map_err(|e| CliError::config(format!("dataset row {}: {e}", line + 1)))?;
        let mut row = [0.0f64; 6];
        for (k, &col) in index.iter().enumerate() {
            let field = record.get(col).unwrap_or("");
            row[k] = field.parse().map_err(|_| {
                CliError::config(format!(
                    "dataset row {}: '{field}' in {} is not a number",
                    line + 1,
                    COLUMNS[k]
                ))
            })?;
            if !row[k].is_finite() {
                return Err(CliError::config(format!(
                    "dataset row {}: non-finite {}",
                    line + 1,
                    COLUMNS[k]
                )));
            }
        }
        d.push(row);
    }
    d.validate()?;
    Ok(d)
}

pub fn load_dataset(path: &Path) -> CliResult<QuadratureDataset> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    read_dataset(std::io::BufReader::new(file))
}
