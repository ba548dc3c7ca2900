//! CSV tables with a `#`-prefixed header block of `key: value` lines.

use std::io::Write;
use std::path::Path;

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub meta: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

/// Shortest round-trip representation, so equal values give equal bytes.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:?}")
    }
}

pub fn flag(b: bool) -> String {
    if b { "1" } else { "0" }.to_string()
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            meta: Vec::new(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn set_meta(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string().replace('\n', " ");
        match self.meta.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value,
            None => self.meta.push((key.to_string(), value)),
        }
    }

    pub fn push_meta(&mut self, key: &str, value: impl ToString) {
        self.meta.push((key.to_string(), value.to_string().replace('\n', " ")));
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Numeric column; empty cells read as NaN.
    pub fn column(&self, name: &str) -> Result<Vec<f64>, CliError> {
        let k = self
            .column_index(name)
            .ok_or_else(|| CliError::Format(format!("missing column '{name}' (have: {})", self.columns.join(", "))))?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let cell = r[k].trim();
                if cell.is_empty() {
                    return Ok(f64::NAN);
                }
                cell.parse::<f64>()
                    .map_err(|_| CliError::Format(format!("row {}, column '{name}': '{cell}' is not a number", i + 1)))
            })
            .collect()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, CliError> {
        let mut out = Vec::new();
        for (k, v) in &self.meta {
            writeln!(out, "# {k}: {v}").expect("in-memory write");
        }
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| CliError::Io(e.to_string());
        w.write_record(&self.columns).map_err(io)?;
        for r in &self.rows {
            w.write_record(r).map_err(io)?;
        }
        w.into_inner().map_err(|e| CliError::Io(e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }

    pub fn read(path: &Path) -> Result<Table, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Table, CliError> {
        let mut table = Table::default();
        for line in text.lines() {
            if let Some(rest) = line.strip_prefix('#') {
                if let Some((k, v)) = rest.split_once(':') {
                    table.meta.push((k.trim().to_string(), v.trim().to_string()));
                }
            }
        }
        let mut r = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let fmt = |e: csv::Error| CliError::Format(e.to_string());
        table.columns = r.headers().map_err(fmt)?.iter().map(str::to_string).collect();
        if table.columns.is_empty() || table.columns.iter().all(String::is_empty) {
            return Err(CliError::Format("table has no header row".into()));
        }
        for rec in r.records() {
            table.rows.push(rec.map_err(fmt)?.iter().map(str::to_string).collect());
        }
        Ok(table)
    }
}
