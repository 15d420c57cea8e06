//! Gaussian kernel density estimates and the total-variation distance
//! between two error samples.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Kernel contributions beyond this many bandwidths are dropped.
const CUTOFF: f64 = 8.0;
const MIN_GRID: usize = 2048;
const MAX_GRID: usize = 1 << 20;

#[derive(Debug, Clone)]
pub struct Kde {
    sorted: Vec<f64>,
    pub bandwidth: f64,
}

fn sorted(samples: &[f64]) -> Vec<f64> {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let f = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - f) + sorted[i + 1] * f
    } else {
        sorted[i]
    }
}

/// Silverman's rule `0.9 min(sd, IQR/1.34) n^-1/5`, falling back to the
/// larger spread measure and finally to 1e-6 of the data scale.
pub fn silverman_bandwidth(samples: &[f64]) -> f64 {
    let s = sorted(samples);
    let n = s.len() as f64;
    let mean = s.iter().sum::<f64>() / n;
    let sd = if s.len() > 1 { (s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
    let iqr = (quantile(&s, 0.75) - quantile(&s, 0.25)) / 1.34;
    let spread = match (sd > 0.0, iqr > 0.0) {
        (true, true) => sd.min(iqr),
        (true, false) => sd,
        (false, true) => iqr,
        (false, false) => 0.0,
    };
    (0.9 * spread * n.powf(-0.2)).max(bandwidth_floor(&s))
}

fn bandwidth_floor(samples: &[f64]) -> f64 {
    let scale = samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    1e-6 * if scale > 0.0 { scale } else { 1.0 }
}

/// Log of `sum_j exp(-(x - s_j)^2 / 2h^2)` over sorted `s`, restricted to the
/// cutoff window; falls back to the nearest sample when the window is empty.
fn log_kernel_sum(s: &[f64], x: f64, h: f64) -> f64 {
    let lo = s.partition_point(|&v| v < x - CUTOFF * h);
    let hi = s.partition_point(|&v| v <= x + CUTOFF * h);
    let zs: Vec<f64> = if lo < hi {
        s[lo..hi].iter().map(|v| -0.5 * ((x - v) / h).powi(2)).collect()
    } else {
        let i = s.partition_point(|&v| v < x);
        let mut best = f64::NEG_INFINITY;
        for j in [i.wrapping_sub(1), i] {
            if let Some(v) = s.get(j) {
                best = best.max(-0.5 * ((x - v) / h).powi(2));
            }
        }
        vec![best]
    };
    let m = zs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + zs.iter().map(|z| (z - m).exp()).sum::<f64>().ln()
}

/// Held-out log likelihood of `bandwidth` under k-fold splitting by index.
fn cv_score(samples: &[f64], h: f64, folds: usize) -> f64 {
    let mut total = 0.0;
    for f in 0..folds {
        let train = sorted(&samples.iter().enumerate().filter(|(i, _)| i % folds != f).map(|(_, v)| *v).collect::<Vec<_>>());
        let nt = train.len() as f64;
        let norm = (nt * h * (2.0 * PI).sqrt()).ln();
        for (_, &x) in samples.iter().enumerate().filter(|(i, _)| i % folds == f) {
            total += log_kernel_sum(&train, x, h) - norm;
        }
    }
    total
}

impl Kde {
    /// Bandwidth by 5-fold cross-validation (leave-one-out below five
    /// samples) over 20 log-spaced multiples of Silverman's value in
    /// [0.01, 10].
    pub fn fit(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() || samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("KDE needs a non-empty finite sample".into()));
        }
        let h0 = silverman_bandwidth(samples);
        let floor = bandwidth_floor(samples);
        let bandwidth = if samples.len() < 2 {
            h0
        } else {
            let folds = samples.len().min(5);
            let grid: Vec<f64> =
                (0..20).map(|i| (h0 * 10f64.powf(-2.0 + 3.0 * i as f64 / 19.0)).max(floor)).collect();
            let scores: Vec<f64> = grid.par_iter().map(|&h| cv_score(samples, h, folds)).collect();
            let mut best = 0;
            for i in 1..grid.len() {
                if scores[i] > scores[best] {
                    best = i;
                }
            }
            grid[best]
        };
        Ok(Kde { sorted: sorted(samples), bandwidth })
    }

    pub fn density(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        let lo = self.sorted.partition_point(|&v| v < x - CUTOFF * h);
        let hi = self.sorted.partition_point(|&v| v <= x + CUTOFF * h);
        let sum: f64 = self.sorted[lo..hi].iter().map(|v| (-0.5 * ((x - v) / h).powi(2)).exp()).sum();
        sum / (self.sorted.len() as f64 * h * (2.0 * PI).sqrt())
    }

    pub fn min(&self) -> f64 {
        self.sorted[0]
    }

    pub fn max(&self) -> f64 {
        self.sorted[self.sorted.len() - 1]
    }
}

/// `0.5 * integral |q_a - q_b|` of the two KDEs by the trapezoid rule on
/// `[0, 1.5 max]`. The grid extends below zero when samples are negative and
/// above when a kernel reaches past `1.5 max`; spacing is at most a quarter
/// of the smaller bandwidth.
pub fn tv_distance(qa: &[f64], qb: &[f64]) -> Result<f64> {
    let a = Kde::fit(qa)?;
    let b = Kde::fit(qb)?;
    Ok(tv_between(&a, &b))
}

pub fn tv_between(a: &Kde, b: &Kde) -> f64 {
    let hmax = a.bandwidth.max(b.bandwidth);
    let hmin = a.bandwidth.min(b.bandwidth);
    let smin = a.min().min(b.min());
    let smax = a.max().max(b.max());
    let lower = if smin < 0.0 { smin - 5.0 * hmax } else { 0.0 };
    let upper = (1.5 * smax).max(smax + 5.0 * hmax);
    let span = upper - lower;
    let n = ((span / (0.25 * hmin)).ceil() as usize + 1).clamp(MIN_GRID, MAX_GRID);
    let dx = span / (n - 1) as f64;
    let vals: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let x = lower + i as f64 * dx;
            (a.density(x) - b.density(x)).abs()
        })
        .collect();
    let inner: f64 = vals.iter().sum();
    let integral = (inner - 0.5 * (vals[0] + vals[n - 1])) * dx;
    (0.5 * integral).clamp(0.0, 1.0)
}
