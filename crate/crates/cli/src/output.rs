//! Numeric formatting and the JSON/CSV table writers.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

use crate::error::CliError;

/// Rounds floats to a number of significant digits, or leaves them alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Precision(pub Option<usize>);

impl Precision {
    pub fn round(self, x: f64) -> f64 {
        match self.0 {
            Some(digits) if x.is_finite() && x != 0.0 => {
                format!("{:.*e}", digits.max(1) - 1, x).parse().expect("formatted float parses")
            }
            _ => x,
        }
    }

    pub fn number(self, x: f64) -> Value {
        serde_json::Number::from_f64(self.round(x)).map(Value::Number).unwrap_or(Value::Null)
    }

    pub fn numbers(self, xs: &[f64]) -> Value {
        Value::Array(xs.iter().map(|x| self.number(*x)).collect())
    }

    /// Rounds every float in a JSON tree; integers are left as they are.
    pub fn apply(self, value: Value) -> Value {
        match value {
            Value::Number(n) if n.is_f64() => self.number(n.as_f64().expect("f64 number")),
            Value::Array(items) => Value::Array(items.into_iter().map(|v| self.apply(v)).collect()),
            Value::Object(map) => Value::Object(map.into_iter().map(|(k, v)| (k, self.apply(v))).collect()),
            other => other,
        }
    }
}

/// Rows with a fixed column order, written side by side as JSON records
/// and CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn with_columns(columns: Vec<String>) -> Self {
        Table { columns, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_json(&self) -> Value {
        Value::Array(
            self.rows
                .iter()
                .map(|row| {
                    let record: Map<String, Value> = self.columns.iter().cloned().zip(row.iter().cloned()).collect();
                    Value::Object(record)
                })
                .collect(),
        )
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(csv_cell).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

fn csv_cell(value: &Value) -> String {
    match value {
        Value::Null => String::new(),
        Value::String(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Files produced by a command, relative to the output directory.
#[derive(Debug, Clone, Default)]
pub struct Bundle {
    pub files: Vec<(String, String)>,
}

impl Bundle {
    pub fn table(&mut self, stem: &str, table: &Table) {
        self.files.push((format!("{stem}.json"), pretty(&table.to_json())));
        self.files.push((format!("{stem}.csv"), table.to_csv()));
    }

    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
        fs::create_dir_all(dir).map_err(|source| CliError::Write { path: dir.to_path_buf(), source })?;
        let mut written = Vec::new();
        for (name, contents) in &self.files {
            let path = dir.join(name);
            fs::write(&path, contents).map_err(|source| CliError::Write { path: path.clone(), source })?;
            written.push(path);
        }
        Ok(written)
    }
}

pub fn pretty(value: &Value) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("JSON values serialize");
    text.push('\n');
    text
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn rounds_to_significant_digits() {
        let p = Precision(Some(7));
        assert_eq!(p.round(12.210953312), 12.21095);
        assert_eq!(p.round(-107.95493), -107.9549);
        assert_eq!(p.round(1.23456789e-12), 1.234568e-12);
        assert_eq!(p.round(0.0), 0.0);
        assert_eq!(Precision(None).round(0.1 + 0.2), 0.1 + 0.2);
    }

    #[test]
    fn non_finite_becomes_null() {
        assert_eq!(Precision(Some(7)).number(f64::NAN), Value::Null);
    }

    #[test]
    fn apply_leaves_integers() {
        let v = Precision(Some(3)).apply(json!({"n": 3, "x": [1.23456, "a"]}));
        assert_eq!(v, json!({"n": 3, "x": [1.23, "a"]}));
    }

    #[test]
    fn table_formats() {
        let mut t = Table::new(&["label", "x", "y"]);
        t.push(vec![json!("(1, a,b)"), json!(0.5), Value::Null]);
        assert_eq!(t.to_csv(), "label,x,y\n\"(1, a,b)\",0.5,\n");
        assert_eq!(t.to_json(), json!([{"label": "(1, a,b)", "x": 0.5, "y": null}]));
    }
}
