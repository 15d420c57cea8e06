use std::path::{Path, PathBuf};

use super::EcgTrace;
use crate::error::{Error, Result};

/// Number of samples averaged at each end of a beat for detrending.
const DETREND_SAMPLES: usize = 10;

/// Index of the largest |lead II| sample.
pub fn r_peak(trace: &EcgTrace) -> usize {
    let ii = &trace.leads[1];
    let mut best = 0;
    for (k, v) in ii.iter().enumerate() {
        if v.abs() > ii[best].abs() {
            best = k;
        }
    }
    best
}

/// Subtracts the line through the means of the first and last ten samples.
pub fn detrend(series: &mut [f64]) {
    let n = series.len();
    let m = DETREND_SAMPLES.min(n / 2);
    if m == 0 || n < 2 {
        return;
    }
    let head = series[..m].iter().sum::<f64>() / m as f64;
    let tail = series[n - m..].iter().sum::<f64>() / m as f64;
    let x0 = (m - 1) as f64 / 2.0;
    let x1 = (n - m) as f64 + (m - 1) as f64 / 2.0;
    let slope = (tail - head) / (x1 - x0);
    for (k, v) in series.iter_mut().enumerate() {
        *v -= head + slope * (k as f64 - x0);
    }
}

/// Beats aligned on their R peak and detrended, with per-lead mean and
/// min/max envelope.
#[derive(Debug, Clone)]
pub struct BeatSet {
    pub beats: Vec<EcgTrace>,
    pub mean: EcgTrace,
    pub lower: Vec<Vec<f64>>,
    pub upper: Vec<Vec<f64>>,
}

/// Aligns beats to the first beat's R peak, crops to the common support and
/// detrends every lead. All beats keep the first beat's time axis.
pub fn ingest_beats(raw: Vec<EcgTrace>) -> Result<BeatSet> {
    if raw.is_empty() {
        return Err(Error::Config("no beats to ingest".into()));
    }
    let dt = raw[0].dt;
    if let Some(b) = raw.iter().position(|b| (b.dt - dt).abs() > 1e-9 * dt) {
        return Err(Error::Config(format!("beat {b} sampled at {} ms, expected {dt} ms", raw[b].dt)));
    }
    let peaks: Vec<usize> = raw.iter().map(r_peak).collect();
    let before = *peaks.iter().min().unwrap();
    let after = raw.iter().zip(&peaks).map(|(b, &p)| b.len() - p).min().unwrap();
    let len = before + after;
    if len < 2 * DETREND_SAMPLES {
        return Err(Error::Config("beats overlap on too few samples after alignment".into()));
    }
    let t0 = raw[0].time(peaks[0] - before);
    let mut beats = Vec::with_capacity(raw.len());
    for (b, &p) in raw.iter().zip(&peaks) {
        let start = p - before;
        let leads = b
            .leads
            .iter()
            .map(|l| {
                let mut s = l[start..start + len].to_vec();
                detrend(&mut s);
                s
            })
            .collect();
        beats.push(EcgTrace::new(dt, t0, leads)?);
    }
    let nb = beats.len() as f64;
    let mut mean = vec![vec![0.0; len]; 12];
    let mut lower = vec![vec![f64::INFINITY; len]; 12];
    let mut upper = vec![vec![f64::NEG_INFINITY; len]; 12];
    for b in &beats {
        for l in 0..12 {
            for k in 0..len {
                let v = b.leads[l][k];
                mean[l][k] += v / nb;
                lower[l][k] = lower[l][k].min(v);
                upper[l][k] = upper[l][k].max(v);
            }
        }
    }
    let mean = EcgTrace::new(dt, t0, mean)?;
    Ok(BeatSet { beats, mean, lower, upper })
}

/// Reads every `*.csv` in `dir` (sorted by file name).
pub fn load_beats(dir: &Path) -> Result<Vec<EcgTrace>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Config(format!("no beat CSV files in {}", dir.display())));
    }
    paths.iter().map(|p| EcgTrace::read_csv(p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detrend_removes_lines() {
        let mut s: Vec<f64> = (0..50).map(|k| 3.0 - 0.2 * k as f64).collect();
        detrend(&mut s);
        assert!(s.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn identical_beats_have_zero_width_envelope() {
        let leads: Vec<Vec<f64>> = (0..12).map(|l| (0..60).map(|k| ((k + l) as f64 * 0.3).sin()).collect()).collect();
        let b = EcgTrace::new(1.0, 0.0, leads).unwrap();
        let set = ingest_beats(vec![b.clone(), b.clone(), b]).unwrap();
        for l in 0..12 {
            for k in 0..set.mean.len() {
                assert_eq!(set.lower[l][k], set.upper[l][k]);
            }
        }
    }
}
