//! Rendering of results as CSV or JSON with the run configuration
//! embedded, and atomic file output.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::config::{Format, RunConfig};
use crate::error::{CliError, CliResult};

/// Prefix of the metadata line that carries the configuration in CSV files.
pub const CONFIG_PREFIX: &str = "# config: ";

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Bool(bool),
    Text(String),
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Int(x)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Bool(x)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Text(String::new()), Cell::Num)
    }
}

/// Shortest round-trip representation; exponent form outside `[1e-4, 1e15)`.
pub fn format_float(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || !x.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(x) => format_float(*x),
            Cell::Int(n) => n.to_string(),
            Cell::Bool(b) => b.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

/// A rectangular result with named columns.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: Vec<&'static str>) -> Self {
        Self {
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

/// What a command produced: a JSON document and its tabular view.
#[derive(Debug, Clone)]
pub struct Output {
    pub result: serde_json::Value,
    pub table: Table,
    /// Extra `# key: value` lines for the CSV header.
    pub notes: Vec<(String, String)>,
}

impl Output {
    pub fn new(result: impl Serialize, table: Table) -> CliResult<Self> {
        let result =
            serde_json::to_value(result).map_err(|e| CliError::Numerical(format!("serialising result: {e}")))?;
        Ok(Self {
            result,
            table,
            notes: Vec::new(),
        })
    }

    pub fn note(mut self, key: &str, value: impl ToString) -> Self {
        self.notes.push((key.to_string(), value.to_string()));
        self
    }
}

pub fn render(config: &RunConfig, out: &Output) -> CliResult<String> {
    match config.format {
        Format::Json => {
            #[derive(Serialize)]
            struct Doc<'a> {
                config: &'a RunConfig,
                result: &'a serde_json::Value,
            }
            let mut s = serde_json::to_string_pretty(&Doc {
                config,
                result: &out.result,
            })
            .map_err(|e| CliError::Numerical(format!("serialising result: {e}")))?;
            s.push('\n');
            Ok(s)
        }
        Format::Csv => {
            let mut s = String::new();
            let json = serde_json::to_string(config).map_err(|e| CliError::config(e.to_string()))?;
            writeln!(s, "# generator: {}", config.generator).unwrap();
            writeln!(s, "{CONFIG_PREFIX}{json}").unwrap();
            for (k, v) in &out.notes {
                writeln!(s, "# {k}: {v}").unwrap();
            }
            let mut w = csv::Writer::from_writer(Vec::new());
            let err = |e: csv::Error| CliError::config(format!("writing csv: {e}"));
            w.write_record(&out.table.columns).map_err(err)?;
            for row in &out.table.rows {
                w.write_record(row.iter().map(Cell::render)).map_err(err)?;
            }
            let bytes = w
                .into_inner()
                .map_err(|e| CliError::config(format!("writing csv: {e}")))?;
            s.push_str(&String::from_utf8(bytes).expect("csv output is utf-8"));
            Ok(s)
        }
    }
}

/// Recovers the configuration embedded in a CSV or JSON output file.
pub fn read_metadata(text: &str) -> CliResult<RunConfig> {
    let parse = |json: &str| {
        serde_json::from_str::<RunConfig>(json).map_err(|e| CliError::config(format!("embedded config: {e}")))
    };
    if let Some(line) = text
        .lines()
        .take_while(|l| l.starts_with('#'))
        .find_map(|l| l.strip_prefix(CONFIG_PREFIX))
    {
        return parse(line);
    }
    let doc: serde_json::Value =
        serde_json::from_str(text).map_err(|_| CliError::config("file carries no embedded config"))?;
    let config = doc
        .get("config")
        .ok_or_else(|| CliError::config("JSON file has no 'config' field"))?;
    serde_json::from_value(config.clone()).map_err(|e| CliError::config(format!("embedded config: {e}")))
}

/// Writes `contents` to `path` through a temporary file in the same
/// directory, so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> CliResult<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(contents).map_err(|e| CliError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}
