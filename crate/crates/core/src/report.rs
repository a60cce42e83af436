//! Report records and their JSON / CSV serialization.
//!
//! A report carries the same numbers twice: `summary.points` holds one
//! object per sweep point keyed by column name, `raw` holds the flat table
//! that is written to CSV. Scalars derived from the whole sweep (fitted
//! slopes, maxima) appear in `summary` and `raw.scalars` alike. Only the
//! `timing` section differs between two runs of the same config.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::experiments::ExperimentKind;
use crate::tolerance::Tolerances;

/// One table entry. Non-finite floats serialize as the strings `"inf"`,
/// `"-inf"` and `"NaN"` since JSON has no literal for them.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Num(f64),
    Bool(bool),
    Text(String),
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(i) => Some(*i as f64),
            Cell::Num(x) => Some(*x),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Cell::Bool(b) => Some(*b),
            _ => None,
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Bool(b)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Int(i) => write!(f, "{i}"),
            Cell::Num(x) if x.is_nan() => write!(f, "NaN"),
            Cell::Num(x) if x.is_infinite() => write!(f, "{}", if *x > 0.0 { "inf" } else { "-inf" }),
            // shortest round-trip form, same as the JSON report
            Cell::Num(x) => write!(f, "{}", serde_json::Number::from_f64(*x).expect("finite")),
            Cell::Bool(b) => write!(f, "{b}"),
            Cell::Text(s) => write!(f, "{s}"),
        }
    }
}

impl Serialize for Cell {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Cell::Int(i) => s.serialize_i64(*i),
            Cell::Num(x) if x.is_finite() => s.serialize_f64(*x),
            Cell::Num(x) => s.serialize_str(&Cell::Num(*x).to_string()),
            Cell::Bool(b) => s.serialize_bool(*b),
            Cell::Text(t) => s.serialize_str(t),
        }
    }
}

impl<'de> Deserialize<'de> for Cell {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match Value::deserialize(d)? {
            Value::Bool(b) => Ok(Cell::Bool(b)),
            Value::Number(n) => Ok(n.as_i64().map_or_else(|| Cell::Num(n.as_f64().unwrap_or(f64::NAN)), Cell::Int)),
            Value::String(s) => Ok(match s.as_str() {
                "inf" => Cell::Num(f64::INFINITY),
                "-inf" => Cell::Num(f64::NEG_INFINITY),
                "NaN" => Cell::Num(f64::NAN),
                _ => Cell::Text(s),
            }),
            other => Err(serde::de::Error::custom(format!("unsupported table cell {other}"))),
        }
    }
}

/// Flat per-point table plus sweep-level scalars.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    #[serde(default)]
    pub scalars: BTreeMap<String, Cell>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new(), scalars: BTreeMap::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<&Cell>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| &r[i]).collect())
    }

    /// Rows as objects keyed by column name.
    pub fn points(&self) -> Vec<BTreeMap<String, Cell>> {
        self.rows.iter().map(|r| self.columns.iter().cloned().zip(r.iter().cloned()).collect()).collect()
    }
}

/// Fields that legitimately change between identical runs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Timing {
    /// Milliseconds since the Unix epoch at the start of the run.
    pub started_unix_ms: u64,
    pub wall_time_seconds: f64,
}

/// Everything one experiment run produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportRecord {
    pub experiment: ExperimentKind,
    pub version: String,
    pub seed: u64,
    pub jobs: usize,
    /// Experiment parameters with defaults filled in.
    pub inputs: Value,
    pub tolerances: Tolerances,
    pub summary: Summary,
    pub raw: Table,
    pub diagnostics: Value,
    /// Set when a solver or search did not converge; the values are still
    /// reported.
    pub failed: bool,
    pub failures: Vec<String>,
    pub timing: Timing,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Summary {
    pub scalars: BTreeMap<String, Cell>,
    pub points: Vec<BTreeMap<String, Cell>>,
}

impl Summary {
    pub fn from_table(t: &Table) -> Self {
        Summary { scalars: t.scalars.clone(), points: t.points() }
    }
}

impl ReportRecord {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Numerical(format!("report serialization: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Validation(format!("not a report record: {e}")))
    }

    /// The CSV rendering of `raw`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(&self.raw.columns).map_err(io)?;
        for row in &self.raw.rows {
            w.write_record(row.iter().map(|c| c.to_string())).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
    }

    /// Checks that `summary` and `raw` carry the same numbers.
    pub fn consistency_defect(&self) -> Option<String> {
        if self.summary.scalars != self.raw.scalars {
            return Some("summary and raw scalars differ".into());
        }
        if self.summary.points != self.raw.points() {
            return Some("summary points differ from raw rows".into());
        }
        None
    }
}

/// JSON value of a serialized report with the `timing` section removed.
pub fn strip_timing(json: &str) -> Result<Value> {
    let mut v: Value = serde_json::from_str(json).map_err(|e| Error::Validation(e.to_string()))?;
    if let Value::Object(m) = &mut v {
        m.remove("timing");
    }
    Ok(v)
}

/// Paths written by [`emit_report`].
#[derive(Debug, Clone)]
pub struct EmittedFiles {
    pub json: PathBuf,
    pub csv: PathBuf,
}

/// Writes `<out>/report.json` and `<out>/<experiment>.csv`.
pub fn emit_report(record: &ReportRecord, out: &Path) -> Result<EmittedFiles> {
    let wrap = |p: &Path, e: std::io::Error| Error::Io(format!("{}: {e}", p.display()));
    fs::create_dir_all(out).map_err(|e| wrap(out, e))?;
    let json = out.join("report.json");
    let csv = out.join(format!("{}.csv", record.experiment.name()));
    fs::write(&json, record.to_json()? + "\n").map_err(|e| wrap(&json, e))?;
    fs::write(&csv, record.to_csv()?).map_err(|e| wrap(&csv, e))?;
    Ok(EmittedFiles { json, csv })
}
