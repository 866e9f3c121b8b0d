//! Small readers and writers for the CLI's tabular inputs and outputs.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;
use spillover::Error;

use crate::{CliError, CliResult};

/// Numeric CSV with a header row.
pub struct Table {
    headers: Vec<String>,
    values: DMatrix<f64>,
}

impl Table {
    pub fn read(path: &Path) -> CliResult<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(Error::from)?;
        let headers: Vec<String> = rdr.headers().map_err(Error::from)?.iter().map(str::to_string).collect();
        let mut flat = Vec::new();
        let mut rows = 0;
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(Error::from)?;
            for (j, cell) in rec.iter().enumerate() {
                let v = cell.parse::<f64>().map_err(|e| {
                    Error::Parse(format!("{}: row {}, column '{}': {e}", path.display(), i + 2, headers[j]))
                })?;
                flat.push(v);
            }
            rows += 1;
        }
        Ok(Table {
            values: DMatrix::from_row_slice(rows, headers.len(), &flat),
            headers,
        })
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.headers.iter().position(|h| h == name)?;
        Some(self.values.column(j).iter().copied().collect())
    }

    /// Columns `prefix1, prefix2, ...` in order; `None` when absent.
    pub fn numbered(&self, prefix: &str) -> CliResult<Option<DMatrix<f64>>> {
        let mut cols = Vec::new();
        while let Some(j) = self.headers.iter().position(|h| *h == format!("{prefix}{}", cols.len() + 1)) {
            cols.push(j);
        }
        let stray = self.headers.iter().any(|h| {
            h.strip_prefix(prefix)
                .and_then(|rest| rest.parse::<usize>().ok())
                .is_some_and(|k| k == 0 || k > cols.len())
        });
        if stray {
            return Err(Error::Parse(format!("columns with prefix '{prefix}' are not numbered 1..k")).into());
        }
        if cols.is_empty() {
            return Ok(None);
        }
        Ok(Some(self.values.select_columns(&cols)))
    }

    /// Rejects header names outside `allowed` prefixes and exact names.
    pub fn check_headers(&self, prefixes: &[&str], names: &[&str]) -> CliResult<()> {
        for h in &self.headers {
            let numbered = prefixes.iter().any(|p| {
                h.strip_prefix(p).is_some_and(|rest| !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()))
            });
            if !numbered && !names.contains(&h.as_str()) {
                return Err(Error::Parse(format!("unexpected column '{h}'")).into());
            }
        }
        Ok(())
    }
}

pub fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    serde_json::to_writer_pretty(create(path)?, value)?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let f = std::io::BufReader::new(File::open(path)?);
    Ok(serde_json::from_reader(f)?)
}

/// Parses `lo:hi:points`.
pub fn parse_grid(s: &str) -> CliResult<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || CliError::Usage(format!("grid '{s}' must be lo:hi:points"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
    if n == 0 || !(lo.is_finite() && hi.is_finite()) {
        return Err(bad());
    }
    Ok(spillover::bias::linspace(lo, hi, n))
}
