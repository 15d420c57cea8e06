//! Lead-field ECG from activation times, QRS alignment and the fitting loss.

mod align;
mod beats;
mod forward;
mod leads;
mod template;

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use align::{align_and_loss, beat_errors, MAX_SHIFT_MS};
pub use beats::{detrend, ingest_beats, load_beats, r_peak, BeatSet};
pub use forward::{compute_ecg, EcgOperator};
pub use leads::{build_lead_fields, combine_electrodes, electrode_potential, Electrodes, LeadFieldSet};
pub use template::ActionPotentialTemplate;

pub const LEAD_NAMES: [&str; 12] = ["I", "II", "III", "aVR", "aVL", "aVF", "V1", "V2", "V3", "V4", "V5", "V6"];
pub const ELECTRODE_NAMES: [&str; 9] = ["RA", "LA", "LL", "V1", "V2", "V3", "V4", "V5", "V6"];

/// Twelve uniformly sampled leads. Sample `k` sits at `t0 + k dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcgTrace {
    pub dt: f64,
    pub t0: f64,
    pub leads: Vec<Vec<f64>>,
    pub qrs_onset: f64,
    pub qrs_duration: f64,
    /// Set when the sampled horizon ends before the QRS does.
    #[serde(default)]
    pub truncated: bool,
}

impl EcgTrace {
    /// Trace whose QRS window spans all samples.
    pub fn new(dt: f64, t0: f64, leads: Vec<Vec<f64>>) -> Result<Self> {
        if leads.len() != 12 {
            return Err(Error::Parse { context: "ecg".into(), msg: format!("expected 12 leads, got {}", leads.len()) });
        }
        let n = leads[0].len();
        if leads.iter().any(|l| l.len() != n) {
            return Err(Error::Parse { context: "ecg".into(), msg: "leads differ in length".into() });
        }
        if !(dt > 0.0) {
            return Err(Error::Parse { context: "ecg".into(), msg: format!("invalid dt {dt}") });
        }
        let qrs_duration = n.saturating_sub(1) as f64 * dt;
        Ok(EcgTrace { dt, t0, leads, qrs_onset: t0, qrs_duration, truncated: false })
    }

    pub fn len(&self) -> usize {
        self.leads[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn with_qrs(mut self, onset: f64, duration: f64) -> Self {
        self.qrs_onset = onset;
        self.qrs_duration = duration;
        self
    }

    /// Sample indices `[first, last]` covering the QRS window.
    pub fn qrs_range(&self) -> Option<(usize, usize)> {
        let first = ((self.qrs_onset - self.t0) / self.dt - 1e-9).ceil().max(0.0) as usize;
        let last = ((self.qrs_onset + self.qrs_duration - self.t0) / self.dt + 1e-9).floor();
        if last < 0.0 {
            return None;
        }
        let last = (last as usize).min(self.len().saturating_sub(1));
        (first < last).then_some((first, last))
    }

    /// Largest absolute sample inside the QRS window.
    pub fn qrs_peak(&self) -> f64 {
        let Some((a, b)) = self.qrs_range() else { return 0.0 };
        self.leads.iter().flat_map(|l| &l[a..=b]).fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Mean over leads and time of V^2 inside the QRS window (trapezoid).
    pub fn qrs_power(&self) -> f64 {
        let Some((a, b)) = self.qrs_range() else { return 0.0 };
        let mut acc = 0.0;
        for l in &self.leads {
            let w = &l[a..=b];
            let inner: f64 = w.iter().map(|v| v * v).sum();
            acc += inner - 0.5 * (w[0] * w[0] + w[w.len() - 1] * w[w.len() - 1]);
        }
        acc / ((b - a) as f64 * 12.0)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for l in &mut out.leads {
            l.iter_mut().for_each(|v| *v *= factor);
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t_ms");
        for name in LEAD_NAMES {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for k in 0..self.len() {
            let _ = write!(out, "{}", self.time(k));
            for l in &self.leads {
                let _ = write!(out, ",{}", l[k]);
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn from_csv(text: &str, context: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let headers = rdr.headers()?.clone();
        let perr = |msg: String| Error::Parse { context: context.to_string(), msg };
        if headers.get(0) != Some("t_ms") {
            return Err(perr("first column must be t_ms".into()));
        }
        let mut cols = [0usize; 12];
        for (i, name) in LEAD_NAMES.iter().enumerate() {
            cols[i] = headers
                .iter()
                .position(|h| h == *name)
                .ok_or_else(|| perr(format!("missing lead {name}")))?;
        }
        let mut times = Vec::new();
        let mut leads = vec![Vec::new(); 12];
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let num = |c: usize| -> Result<f64> {
                rec.get(c)
                    .and_then(|s| s.parse::<f64>().ok())
                    .ok_or_else(|| perr(format!("row {}: bad value in column {}", row + 2, c + 1)))
            };
            times.push(num(0)?);
            for (i, &c) in cols.iter().enumerate() {
                leads[i].push(num(c)?);
            }
        }
        if times.len() < 2 {
            return Err(perr("need at least two samples".into()));
        }
        let dt = times[1] - times[0];
        for w in times.windows(2) {
            if ((w[1] - w[0]) - dt).abs() > 1e-6 * dt.abs().max(1.0) {
                return Err(perr("non-uniform sampling".into()));
            }
        }
        EcgTrace::new(dt, times[0], leads).map_err(|e| match e {
            Error::Parse { msg, .. } => perr(msg),
            other => other,
        })
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text, &path.display().to_string())
    }

    /// Largest violation of the limb-lead identities.
    pub fn lead_identity_error(&self) -> f64 {
        let l = &self.leads;
        let mut m: f64 = 0.0;
        for k in 0..self.len() {
            let (i, ii) = (l[0][k], l[1][k]);
            m = m
                .max((l[2][k] - (ii - i)).abs())
                .max((l[3][k] + (i + ii) / 2.0).abs())
                .max((l[4][k] - (i - ii / 2.0)).abs())
                .max((l[5][k] - (ii - i / 2.0)).abs());
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp() -> EcgTrace {
        let leads = (0..12).map(|l| (0..20).map(|k| (l * k) as f64 * 0.5).collect()).collect();
        EcgTrace::new(1.0, 3.0, leads).unwrap()
    }

    #[test]
    fn csv_roundtrip() {
        let t = ramp();
        let back = EcgTrace::from_csv(&t.to_csv(), "x").unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn missing_lead_is_an_error() {
        let csv = "t_ms,I,II\n0,1,2\n1,1,2\n";
        assert!(EcgTrace::from_csv(csv, "x").is_err());
    }

    #[test]
    fn qrs_range_clamps_to_samples() {
        let t = ramp().with_qrs(5.0, 100.0);
        assert_eq!(t.qrs_range(), Some((2, 19)));
        assert_eq!(ramp().with_qrs(50.0, 10.0).qrs_range(), None);
    }
}
