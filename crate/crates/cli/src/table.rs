//! Result tables: CSV with `#` metadata lines plus a JSON sidecar.

use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum TableError {
    #[error("table {table}: non-finite value in column {column}, row {row}")]
    NonFinite { table: String, column: String, row: usize },
    #[error("table {table}: row {row} has {got} cells, expected {want}")]
    Width { table: String, row: usize, got: usize, want: usize },
    #[error("writing {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Column {
    pub name: String,
    pub unit: String,
}

/// What produced a table; identical provenance means identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub code_version: String,
    pub command: String,
    pub config_sha256: String,
    pub solver: serde_json::Value,
}

impl Provenance {
    pub fn new(command: &str, config_text: &str, solver: serde_json::Value) -> Self {
        Provenance {
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config_sha256: format!("{:x}", Sha256::digest(config_text.as_bytes())),
            solver,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub name: String,
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<f64>>,
    /// free-form `key: value` lines, e.g. mode labels
    pub notes: Vec<String>,
}

impl ResultTable {
    pub fn new(name: &str, columns: &[(&str, &str)]) -> Self {
        ResultTable {
            name: name.to_string(),
            columns: columns.iter().map(|(n, u)| Column { name: n.to_string(), unit: u.to_string() }).collect(),
            rows: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        self.rows.push(row);
    }

    pub fn note(&mut self, line: impl Into<String>) {
        self.notes.push(line.into());
    }

    pub fn check(&self) -> Result<(), TableError> {
        for (r, row) in self.rows.iter().enumerate() {
            if row.len() != self.columns.len() {
                return Err(TableError::Width { table: self.name.clone(), row: r, got: row.len(), want: self.columns.len() });
            }
            if let Some(c) = row.iter().position(|v| !v.is_finite()) {
                return Err(TableError::NonFinite { table: self.name.clone(), column: self.columns[c].name.clone(), row: r });
            }
        }
        Ok(())
    }

    pub fn to_csv(&self, prov: &Provenance) -> String {
        let mut s = String::new();
        writeln!(s, "# table: {}", self.name).unwrap();
        writeln!(s, "# code_version: {}", prov.code_version).unwrap();
        writeln!(s, "# command: {}", prov.command).unwrap();
        writeln!(s, "# config_sha256: {}", prov.config_sha256).unwrap();
        writeln!(s, "# solver: {}", prov.solver).unwrap();
        let units: Vec<String> = self.columns.iter().map(|c| format!("{}[{}]", c.name, c.unit)).collect();
        writeln!(s, "# units: {}", units.join(",")).unwrap();
        for n in &self.notes {
            writeln!(s, "# {n}").unwrap();
        }
        let names: Vec<&str> = self.columns.iter().map(|c| c.name.as_str()).collect();
        writeln!(s, "{}", names.join(",")).unwrap();
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            writeln!(s, "{}", cells.join(",")).unwrap();
        }
        s
    }

    pub fn sidecar(&self, prov: &Provenance) -> serde_json::Value {
        serde_json::json!({
            "table": self.name,
            "csv": format!("{}.csv", self.name),
            "columns": self.columns,
            "rows": self.rows.len(),
            "notes": self.notes,
            "provenance": prov,
        })
    }

    /// Writes `<dir>/<name>.csv` and `<dir>/<name>.json`.
    pub fn write(&self, dir: &Path, prov: &Provenance) -> Result<PathBuf, TableError> {
        self.check()?;
        let io = |path: &Path| {
            let path = path.display().to_string();
            move |source| TableError::Io { path, source }
        };
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        let csv = dir.join(format!("{}.csv", self.name));
        std::fs::write(&csv, self.to_csv(prov)).map_err(io(&csv))?;
        let json = dir.join(format!("{}.json", self.name));
        let text = serde_json::to_string_pretty(&self.sidecar(prov)).expect("sidecar serializes") + "\n";
        std::fs::write(&json, text).map_err(io(&json))?;
        Ok(csv)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prov() -> Provenance {
        Provenance::new("rates", "[emitter]\n", serde_json::json!({"quad_rel_tol": 1e-6}))
    }

    #[test]
    fn csv_has_header_lines_and_round_trips_values() {
        let mut t = ResultTable::new("demo", &[("x", "nm"), ("eta", "1")]);
        t.push(vec![1.5, 0.1 + 0.2]);
        t.note("mode 0: TE-like");
        let csv = t.to_csv(&prov());
        let data: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(data[0], "x,eta");
        let cells: Vec<f64> = data[1].split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(cells, vec![1.5, 0.1 + 0.2]);
        assert!(csv.contains("# mode 0: TE-like"));
        assert!(csv.contains("# units: x[nm],eta[1]"));
    }

    #[test]
    fn rejects_nan_and_ragged_rows() {
        let mut t = ResultTable::new("bad", &[("a", "1")]);
        t.push(vec![f64::NAN]);
        assert!(matches!(t.check(), Err(TableError::NonFinite { .. })));
        let mut t = ResultTable::new("bad", &[("a", "1")]);
        t.push(vec![1.0, 2.0]);
        assert!(matches!(t.check(), Err(TableError::Width { .. })));
    }

    #[test]
    fn same_input_same_bytes() {
        let mut t = ResultTable::new("demo", &[("x", "nm")]);
        t.push(vec![std::f64::consts::PI]);
        assert_eq!(t.to_csv(&prov()), t.to_csv(&prov()));
        assert_eq!(prov().config_sha256.len(), 64);
    }
}
