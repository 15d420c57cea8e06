use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{ParamVector, N_PARAMS, PARAM_NAMES};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    #[serde(rename = "LHS")]
    Lhs,
    #[serde(rename = "BO")]
    Bo,
    #[serde(rename = "ABC")]
    Abc,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::Lhs => "LHS",
            Provenance::Bo => "BO",
            Provenance::Abc => "ABC",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "LHS" => Some(Provenance::Lhs),
            "BO" => Some(Provenance::Bo),
            "ABC" => Some(Provenance::Abc),
            _ => None,
        }
    }
}

/// Outcome of one forward evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub y: f64,
    pub shift: f64,
    /// Loss against every beat.
    pub errors: Vec<f64>,
}

impl Evaluation {
    pub fn failed() -> Self {
        Evaluation { y: f64::INFINITY, shift: 0.0, errors: Vec::new() }
    }

    pub fn is_failed(&self) -> bool {
        !self.y.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationRecord {
    pub theta: ParamVector,
    pub eval: Evaluation,
    pub provenance: Provenance,
}

pub fn records_header() -> String {
    let mut h = PARAM_NAMES.join(",");
    h.push_str(",y,shift,provenance,failed,errors");
    h
}

impl EvaluationRecord {
    pub fn to_csv_row(&self) -> String {
        let mut out = String::new();
        for v in self.theta.0 {
            let _ = write!(out, "{v},");
        }
        let errors: Vec<String> = self.eval.errors.iter().map(|e| e.to_string()).collect();
        let _ = write!(
            out,
            "{},{},{},{},{}",
            self.eval.y,
            self.eval.shift,
            self.provenance.as_str(),
            self.eval.is_failed() as u8,
            errors.join(";")
        );
        out
    }

    fn from_csv_row(rec: &csv::StringRecord, row: usize) -> Result<Self> {
        let bad = |msg: String| Error::Parse { context: format!("records.csv row {row}"), msg };
        let num = |i: usize| -> Result<f64> {
            rec.get(i).and_then(|s| s.parse::<f64>().ok()).ok_or_else(|| bad(format!("column {}", i + 1)))
        };
        let mut theta = [0.0; N_PARAMS];
        for (i, t) in theta.iter_mut().enumerate() {
            *t = num(i)?;
        }
        let y = num(N_PARAMS)?;
        let shift = num(N_PARAMS + 1)?;
        let provenance = rec
            .get(N_PARAMS + 2)
            .and_then(Provenance::parse)
            .ok_or_else(|| bad("unknown provenance".into()))?;
        let errors = match rec.get(N_PARAMS + 4) {
            None | Some("") => Vec::new(),
            Some(s) => s
                .split(';')
                .map(|e| e.parse::<f64>().map_err(|_| bad(format!("bad error value {e}"))))
                .collect::<Result<Vec<_>>>()?,
        };
        Ok(EvaluationRecord { theta: ParamVector(theta), eval: Evaluation { y, shift, errors }, provenance })
    }
}

pub fn records_to_csv(records: &[EvaluationRecord]) -> String {
    let mut out = records_header();
    out.push('\n');
    for r in records {
        out.push_str(&r.to_csv_row());
        out.push('\n');
    }
    out
}

pub fn read_records(path: &Path) -> Result<Vec<EvaluationRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_records(&text)
}

pub fn parse_records(text: &str) -> Result<Vec<EvaluationRecord>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>().join(",") != records_header() {
        return Err(Error::Parse { context: "records.csv".into(), msg: "unexpected header".into() });
    }
    let mut rows: Vec<_> = rdr.records().collect();
    if !text.ends_with('\n') && !rows.is_empty() {
        log::warn!("ignoring unterminated final record");
        rows.pop();
    }
    let n = rows.len();
    let mut out = Vec::with_capacity(n);
    for (i, rec) in rows.into_iter().enumerate() {
        let parsed = rec.map_err(Error::from).and_then(|r| EvaluationRecord::from_csv_row(&r, i + 2));
        match parsed {
            Ok(r) => out.push(r),
            // a partially written last line from an interrupted run
            Err(e) if i + 1 == n => log::warn!("ignoring truncated final record: {e}"),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Append-only writer that flushes each record so an interrupted run leaves
/// a readable prefix.
pub struct RecordWriter {
    file: std::fs::File,
    path: std::path::PathBuf,
}

impl RecordWriter {
    pub fn create(path: &Path, existing: &[EvaluationRecord]) -> Result<Self> {
        std::fs::write(path, records_to_csv(existing)).map_err(|e| Error::io(path, e))?;
        let file = std::fs::OpenOptions::new().append(true).open(path).map_err(|e| Error::io(path, e))?;
        Ok(RecordWriter { file, path: path.to_path_buf() })
    }

    pub fn append(&mut self, r: &EvaluationRecord) -> Result<()> {
        writeln!(self.file, "{}", r.to_csv_row()).map_err(|e| Error::io(&self.path, e))?;
        self.file.flush().map_err(|e| Error::io(&self.path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_exact() {
        let recs = vec![
            EvaluationRecord {
                theta: super::super::params::synthetic_reference(),
                eval: Evaluation { y: 0.1 + 0.2, shift: -3.0, errors: vec![1.0 / 3.0, 2.5e-9] },
                provenance: Provenance::Bo,
            },
            EvaluationRecord {
                theta: ParamVector([1.0; N_PARAMS]),
                eval: Evaluation::failed(),
                provenance: Provenance::Lhs,
            },
        ];
        let back = parse_records(&records_to_csv(&recs)).unwrap();
        assert_eq!(back, recs);
    }
}
