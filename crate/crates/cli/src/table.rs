//! CSV tables: a tiny string-cell writer and the sample-file format
//! `trial,horizon,loss,x_value`.

use std::path::Path;

use contagion_core::Samples;

use crate::CliError;

/// Shortest decimal that round-trips, always with `.` as separator.
pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self::with_header(header.iter().map(|s| s.to_string()).collect())
    }

    pub fn with_header(header: Vec<String>) -> Self {
        Self {
            header,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let io = |e: csv::Error| CliError::Validation(format!("cannot write {}: {e}", path.display()));
        let mut w = csv::Writer::from_path(path).map_err(io)?;
        w.write_record(&self.header).map_err(io)?;
        for row in &self.rows {
            w.write_record(row).map_err(io)?;
        }
        w.flush()
            .map_err(|e| CliError::Validation(format!("cannot write {}: {e}", path.display())))
    }
}

/// Loss samples in file form. Extra columns in the file are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTable {
    pub horizons: Vec<f64>,
    /// `losses[h][m]`
    pub losses: Vec<Vec<f64>>,
    pub x_values: Vec<Vec<f64>>,
}

impl SampleTable {
    pub fn from_samples(s: &Samples) -> Self {
        Self {
            horizons: s.horizons.clone(),
            losses: s.losses.clone(),
            x_values: s.x_values.clone(),
        }
    }

    pub fn into_table(self) -> Table {
        let mut t = Table::new(&["trial", "horizon", "loss", "x_value"]);
        let trials = self.losses.first().map_or(0, Vec::len);
        for m in 0..trials {
            for (h, &horizon) in self.horizons.iter().enumerate() {
                t.push(vec![
                    m.to_string(),
                    fmt_f64(horizon),
                    fmt_f64(self.losses[h][m]),
                    fmt_f64(self.x_values[h][m]),
                ]);
            }
        }
        t
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let bad = |msg: String| CliError::Validation(format!("{}: {msg}", path.display()));
        let mut r = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
        let header = r.headers().map_err(|e| bad(e.to_string()))?.clone();
        let column = |name: &str| {
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| bad(format!("missing column {name:?}")))
        };
        let (ih, il, ix) = (column("horizon")?, column("loss")?, column("x_value")?);
        let mut out = Self {
            horizons: Vec::new(),
            losses: Vec::new(),
            x_values: Vec::new(),
        };
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let num = |i: usize| -> Result<f64, CliError> {
                let cell = rec.get(i).unwrap_or("");
                cell.parse()
                    .map_err(|_| bad(format!("row {}: not a number: {cell:?}", line + 2)))
            };
            let (t, loss, x) = (num(ih)?, num(il)?, num(ix)?);
            let h = match out.horizons.iter().position(|&u| u == t) {
                Some(h) => h,
                None => {
                    out.horizons.push(t);
                    out.losses.push(Vec::new());
                    out.x_values.push(Vec::new());
                    out.horizons.len() - 1
                }
            };
            out.losses[h].push(loss);
            out.x_values[h].push(x);
        }
        if out.horizons.is_empty() {
            return Err(bad("no samples".into()));
        }
        Ok(out)
    }
}
