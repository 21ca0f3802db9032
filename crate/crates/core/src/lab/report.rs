//! Report rows, assertions and their JSON/CSV serialisation.
//!
//! Floats are written with the same shortest round-trip formatter in both
//! outputs, so a CSV cell and the matching JSON number are identical strings.

use serde::ser::{SerializeMap, Serializer};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::io::Write;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Bool(bool),
}

impl Cell {
    fn to_value(&self) -> Value {
        match self {
            Cell::Num(x) => serde_json::Number::from_f64(*x).map(Value::Number).unwrap_or(Value::Null),
            Cell::Int(i) => Value::from(*i),
            Cell::Text(s) => Value::String(s.clone()),
            Cell::Bool(b) => Value::Bool(*b),
        }
    }

    /// CSV text; numbers use the JSON formatter.
    fn to_field(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            other => other.to_value().to_string(),
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
impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Int(x as i64)
    }
}
impl From<i64> for Cell {
    fn from(x: i64) -> Self {
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
impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}

/// Ordered `(column, value)` pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Row(pub Vec<(String, Cell)>);

impl Row {
    pub fn new() -> Self {
        Row(Vec::new())
    }

    pub fn with(mut self, key: &str, value: impl Into<Cell>) -> Self {
        self.0.push((key.to_string(), value.into()));
        self
    }

    pub fn push(&mut self, key: &str, value: impl Into<Cell>) {
        self.0.push((key.to_string(), value.into()));
    }

    pub fn get(&self, key: &str) -> Option<&Cell> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    pub fn num(&self, key: &str) -> Option<f64> {
        match self.get(key)? {
            Cell::Num(x) => Some(*x),
            Cell::Int(i) => Some(*i as f64),
            _ => None,
        }
    }
}

impl Serialize for Row {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            m.serialize_entry(k, &v.to_value())?;
        }
        m.end()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    /// Statistical miss below four standard errors.
    Warn,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assertion {
    pub name: String,
    pub status: Status,
    pub pass: bool,
    pub detail: String,
}

impl Assertion {
    pub fn check(name: impl Into<String>, ok: bool, detail: impl Into<String>) -> Self {
        let status = if ok { Status::Pass } else { Status::Fail };
        Assertion { name: name.into(), status, pass: ok, detail: detail.into() }
    }

    /// `z` standard errors off: pass below 2, warning below 4, failure from 4.
    pub fn z_check(name: impl Into<String>, z: f64, detail: impl Into<String>) -> Self {
        let status = if z < 2.0 {
            Status::Pass
        } else if z < 4.0 {
            Status::Warn
        } else {
            Status::Fail
        };
        Assertion { name: name.into(), status, pass: status != Status::Fail, detail: detail.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub version: String,
    pub seed: u64,
    pub spec: Value,
    pub rows: Vec<Row>,
    pub assertions: Vec<Assertion>,
    pub all_pass: bool,
    pub wall_clock_seconds: f64,
}

impl RunReport {
    pub fn failures(&self) -> impl Iterator<Item = &Assertion> {
        self.assertions.iter().filter(|a| !a.pass)
    }

    pub fn assertion(&self, name: &str) -> Option<&Assertion> {
        self.assertions.iter().find(|a| a.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    /// JSON value with the wall-clock field removed.
    pub fn numeric_json(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("report serialises");
        if let Value::Object(m) = &mut v {
            m.remove("wall_clock_seconds");
        }
        v
    }

    /// Union of row columns in first-seen order.
    pub fn columns(&self) -> Vec<String> {
        let mut cols: Vec<String> = Vec::new();
        for row in &self.rows {
            for (k, _) in &row.0 {
                if !cols.iter().any(|c| c == k) {
                    cols.push(k.clone());
                }
            }
        }
        cols
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut wr = csv::WriterBuilder::new().quote_style(csv::QuoteStyle::Necessary).from_writer(w);
        let cols = self.columns();
        let mut header = vec!["scenario".to_string()];
        header.extend(cols.iter().cloned());
        wr.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![self.scenario.clone()];
            rec.extend(cols.iter().map(|c| row.get(c).map(Cell::to_field).unwrap_or_default()));
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory csv");
        String::from_utf8(buf).expect("utf-8 csv")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> RunReport {
        let rows = vec![
            Row::new().with("n", 3usize).with("x", 0.1 + 0.2).with("label", "a,b"),
            Row::new().with("n", 4usize).with("y", f64::NAN).with("ok", true),
        ];
        RunReport {
            scenario: "demo".into(),
            version: "0".into(),
            seed: 1,
            spec: Value::Null,
            rows,
            assertions: vec![Assertion::z_check("z", 3.0, "")],
            all_pass: true,
            wall_clock_seconds: 0.5,
        }
    }

    #[test]
    fn csv_cells_match_json_numbers() {
        let r = sample();
        let json: Value = serde_json::from_str(&r.to_json()).unwrap();
        let text = r.to_csv();
        let mut rd = csv::Reader::from_reader(text.as_bytes());
        let header = rd.headers().unwrap().clone();
        assert_eq!(header.iter().collect::<Vec<_>>(), ["scenario", "n", "x", "label", "y", "ok"]);
        let recs: Vec<_> = rd.records().map(|r| r.unwrap()).collect();
        assert_eq!(&recs[0][2], json["rows"][0]["x"].to_string());
        assert_eq!(&recs[0][3], "a,b");
        assert_eq!(&recs[1][4], "null");
        assert_eq!(&recs[1][2], "");
        assert_eq!(recs[0][2].parse::<f64>().unwrap(), 0.1 + 0.2);
    }

    #[test]
    fn warnings_do_not_fail() {
        assert_eq!(Assertion::z_check("a", 1.0, "").status, Status::Pass);
        let w = Assertion::z_check("a", 3.9, "");
        assert!(w.pass && w.status == Status::Warn);
        assert!(!Assertion::z_check("a", 4.0, "").pass);
        assert!(!Assertion::z_check("a", f64::NAN, "").pass);
        let r = sample();
        assert!(r.numeric_json().get("wall_clock_seconds").is_none());
    }
}
