//! Gaussian-process regression with an ARD exponential kernel.
//!
//! Inputs are mapped to the unit box given by `bounds` and targets are
//! standardised; hyperparameters live in those normalised units.

mod lbfgs;

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

pub use lbfgs::{minimize, LbfgsOptions};

/// Diagonal jitter added to every kernel matrix.
pub const JITTER: f64 = 1e-8;
/// Lower bound of the learned noise variance.
pub const NOISE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpHyper {
    pub eta: f64,
    pub lengthscales: Vec<f64>,
    /// Noise variance in standardised target units.
    pub noise: f64,
}

/// `eta^2 exp(-sqrt(sum (a_i - b_i)^2 / r_i^2))`.
pub fn kernel(a: &[f64], b: &[f64], eta: f64, lengthscales: &[f64]) -> f64 {
    let r2: f64 = a.iter().zip(b).zip(lengthscales).map(|((x, y), r)| ((x - y) / r).powi(2)).sum();
    eta * eta * (-r2.sqrt()).exp()
}

#[derive(Debug, Clone)]
pub struct GpFitOptions {
    pub restarts: usize,
    pub seed: u64,
    pub lbfgs: LbfgsOptions,
    /// Extra starting point, typically the previous fit's hyperparameters.
    pub warm_start: Option<GpHyper>,
}

impl Default for GpFitOptions {
    fn default() -> Self {
        GpFitOptions { restarts: 8, seed: 0, lbfgs: LbfgsOptions::default(), warm_start: None }
    }
}

#[derive(Serialize, Deserialize)]
struct GpCheckpoint {
    bounds: Vec<[f64; 2]>,
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    y_mean: f64,
    y_std: f64,
    hyper: GpHyper,
    log_marginal_likelihood: f64,
}

#[derive(Debug, Clone)]
pub struct GpModel {
    pub bounds: Vec<[f64; 2]>,
    /// Normalised training inputs.
    pub x: Vec<Vec<f64>>,
    /// Standardised targets.
    pub y: Vec<f64>,
    pub y_mean: f64,
    pub y_std: f64,
    pub hyper: GpHyper,
    pub log_marginal_likelihood: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

fn normalize(x: &[f64], bounds: &[[f64; 2]]) -> Vec<f64> {
    x.iter().zip(bounds).map(|(v, [lo, hi])| (v - lo) / (hi - lo)).collect()
}

fn gram(x: &[Vec<f64>], hyper: &GpHyper) -> DMatrix<f64> {
    let n = x.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = hyper.eta * hyper.eta + hyper.noise + JITTER;
        for j in 0..i {
            let v = kernel(&x[i], &x[j], hyper.eta, &hyper.lengthscales);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Log marginal likelihood in standardised units, or `None` when the kernel
/// matrix is not numerically SPD.
pub fn log_marginal_likelihood(x: &[Vec<f64>], y: &[f64], hyper: &GpHyper) -> Option<f64> {
    let chol = gram(x, hyper).cholesky()?;
    let yv = DVector::from_column_slice(y);
    let alpha = chol.solve(&yv);
    let logdet: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
    Some(-0.5 * yv.dot(&alpha) - logdet - 0.5 * y.len() as f64 * (2.0 * PI).ln())
}

/// Negative log marginal likelihood and its gradient with respect to
/// `p = [ln eta, ln r_1 .. ln r_d, ln(noise - floor)]`. Pairs at zero
/// distance (self-pairs and duplicates) carry no length-scale gradient.
fn objective(x: &[Vec<f64>], y: &[f64], p: &[f64]) -> Option<(f64, Vec<f64>)> {
    let d = x[0].len();
    let hyper = hyper_from(p, d);
    let n = x.len();
    let chol = gram(x, &hyper).cholesky()?;
    let yv = DVector::from_column_slice(y);
    let alpha = chol.solve(&yv);
    let logdet: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
    let lml = -0.5 * yv.dot(&alpha) - logdet - 0.5 * n as f64 * (2.0 * PI).ln();
    if !lml.is_finite() {
        return None;
    }
    // W = alpha alpha^T - K^-1; dLML/dp = 0.5 tr(W dK/dp)
    let w = &alpha * alpha.transpose() - chol.inverse();
    let mut grad = vec![0.0; d + 2];
    let eta2 = hyper.eta * hyper.eta;
    for i in 0..n {
        grad[0] += 0.5 * w[(i, i)] * 2.0 * eta2;
        grad[d + 1] += 0.5 * w[(i, i)] * (hyper.noise - NOISE_FLOOR);
        for j in 0..i {
            let mut r2 = 0.0;
            let mut parts = vec![0.0; d];
            for k in 0..d {
                let q = ((x[i][k] - x[j][k]) / hyper.lengthscales[k]).powi(2);
                parts[k] = q;
                r2 += q;
            }
            let kij = eta2 * (-r2.sqrt()).exp();
            // off-diagonal entries appear twice in the trace
            grad[0] += w[(i, j)] * 2.0 * kij;
            if r2 > 0.0 {
                let r = r2.sqrt();
                for k in 0..d {
                    grad[1 + k] += w[(i, j)] * kij * parts[k] / r;
                }
            }
        }
    }
    Some((-lml, grad.into_iter().map(|g| -g).collect()))
}

fn hyper_from(p: &[f64], d: usize) -> GpHyper {
    GpHyper {
        eta: p[0].exp(),
        lengthscales: p[1..=d].iter().map(|v| v.exp()).collect(),
        noise: NOISE_FLOOR + p[d + 1].exp(),
    }
}

impl GpModel {
    /// Model with fixed hyperparameters (no training).
    pub fn with_hyper(x_raw: &[Vec<f64>], y_raw: &[f64], bounds: &[[f64; 2]], hyper: GpHyper) -> Result<Self> {
        let (x, y, y_mean, y_std) = prepare(x_raw, y_raw, bounds)?;
        if hyper.lengthscales.len() != bounds.len() || !(hyper.eta > 0.0) || hyper.lengthscales.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::Config("invalid GP hyperparameters".into()));
        }
        Self::assemble(bounds.to_vec(), x, y, y_mean, y_std, hyper)
    }

    fn assemble(
        bounds: Vec<[f64; 2]>,
        x: Vec<Vec<f64>>,
        y: Vec<f64>,
        y_mean: f64,
        y_std: f64,
        hyper: GpHyper,
    ) -> Result<Self> {
        let chol = gram(&x, &hyper)
            .cholesky()
            .ok_or_else(|| Error::Numeric("GP kernel matrix is not positive definite".into()))?;
        let alpha = chol.solve(&DVector::from_column_slice(&y));
        let log_marginal_likelihood = log_marginal_likelihood(&x, &y, &hyper).unwrap_or(f64::NEG_INFINITY);
        Ok(GpModel { bounds, x, y, y_mean, y_std, hyper, log_marginal_likelihood, chol, alpha })
    }

    /// Maximises the log marginal likelihood from `restarts` random starts
    /// (length scales log-uniform on [1e-2, 1e1]) and keeps the best.
    pub fn fit(x_raw: &[Vec<f64>], y_raw: &[f64], bounds: &[[f64; 2]], opts: &GpFitOptions) -> Result<Self> {
        let (x, y, y_mean, y_std) = prepare(x_raw, y_raw, bounds)?;
        let d = bounds.len();
        let lo: Vec<f64> = std::iter::once(1e-3f64.ln())
            .chain(std::iter::repeat(1e-3f64.ln()).take(d))
            .chain(std::iter::once(1e-12f64.ln()))
            .collect();
        let hi: Vec<f64> = std::iter::once(1e2f64.ln())
            .chain(std::iter::repeat(1e3f64.ln()).take(d))
            .chain(std::iter::once(1e1f64.ln()))
            .collect();
        let mut starts: Vec<Vec<f64>> = (0..opts.restarts.max(1))
            .map(|i| {
                let mut rng = stream_rng(opts.seed, Stream::GpRestarts, i as u64);
                let mut p = vec![0.0; d + 2];
                p[0] = rng.gen_range(0.5f64.ln()..2.0f64.ln());
                for v in p[1..=d].iter_mut() {
                    *v = rng.gen_range(1e-2f64.ln()..1e1f64.ln());
                }
                p[d + 1] = rng.gen_range(1e-6f64.ln()..1e-1f64.ln());
                p
            })
            .collect();
        if let Some(h) = opts.warm_start.as_ref().filter(|h| h.lengthscales.len() == d) {
            let mut p: Vec<f64> = std::iter::once(h.eta.ln())
                .chain(h.lengthscales.iter().map(|r| r.ln()))
                .chain(std::iter::once((h.noise - NOISE_FLOOR).max(1e-12).ln()))
                .collect();
            for i in 0..p.len() {
                p[i] = p[i].clamp(lo[i], hi[i]);
            }
            starts.push(p);
        }
        let runs: Vec<Option<(Vec<f64>, f64)>> = starts
            .par_iter()
            .map(|p0| minimize(|p| objective(&x, &y, p), p0, &lo, &hi, &opts.lbfgs))
            .collect();
        let mut best: Option<(Vec<f64>, f64)> = None;
        for r in runs.into_iter().flatten() {
            if r.1.is_finite() && best.as_ref().map_or(true, |b| r.1 < b.1) {
                best = Some(r);
            }
        }
        let (p, _) = best.ok_or_else(|| {
            Error::Numeric(format!("GP fit failed: no restart of {} gave an SPD kernel (n = {})", opts.restarts, x.len()))
        })?;
        Self::assemble(bounds.to_vec(), x, y, y_mean, y_std, hyper_from(&p, d))
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Posterior mean and latent variance at a raw (unnormalised) input, in
    /// target units.
    pub fn predict(&self, theta: &[f64]) -> (f64, f64) {
        let z = normalize(theta, &self.bounds);
        let ks = DVector::from_iterator(
            self.x.len(),
            self.x.iter().map(|xi| kernel(xi, &z, self.hyper.eta, &self.hyper.lengthscales)),
        );
        let mean = ks.dot(&self.alpha);
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&ks)
            .expect("Cholesky factor has a positive diagonal");
        let mut var = self.hyper.eta * self.hyper.eta - v.norm_squared();
        if var < 0.0 {
            var = 0.0;
        }
        (self.y_mean + self.y_std * mean, var * self.y_std * self.y_std)
    }

    /// Prior variance of the latent function in target units.
    pub fn signal_variance(&self) -> f64 {
        (self.hyper.eta * self.y_std).powi(2)
    }

    pub fn noise_variance(&self) -> f64 {
        self.hyper.noise * self.y_std * self.y_std
    }

    pub fn to_json(&self) -> Result<String> {
        let c = GpCheckpoint {
            bounds: self.bounds.clone(),
            x: self.x.clone(),
            y: self.y.clone(),
            y_mean: self.y_mean,
            y_std: self.y_std,
            hyper: self.hyper.clone(),
            log_marginal_likelihood: self.log_marginal_likelihood,
        };
        Ok(serde_json::to_string_pretty(&c)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: GpCheckpoint = serde_json::from_str(text)?;
        Self::assemble(c.bounds, c.x, c.y, c.y_mean, c.y_std, c.hyper)
    }
}

fn prepare(x_raw: &[Vec<f64>], y_raw: &[f64], bounds: &[[f64; 2]]) -> Result<(Vec<Vec<f64>>, Vec<f64>, f64, f64)> {
    if x_raw.len() != y_raw.len() || x_raw.len() < 2 {
        return Err(Error::Config(format!("GP needs at least 2 matching points, got {}/{}", x_raw.len(), y_raw.len())));
    }
    if bounds.iter().any(|[lo, hi]| !(hi > lo)) {
        return Err(Error::Config("GP bounds must be non-empty intervals".into()));
    }
    if x_raw.iter().any(|x| x.len() != bounds.len()) || y_raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("GP inputs must match the bounds and targets must be finite".into()));
    }
    let n = y_raw.len() as f64;
    let mean = y_raw.iter().sum::<f64>() / n;
    let var = y_raw.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = if var > 0.0 { var.sqrt() } else { 1.0 };
    let x = x_raw.iter().map(|x| normalize(x, bounds)).collect();
    let y = y_raw.iter().map(|v| (v - mean) / std).collect();
    Ok((x, y, mean, std))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_basics() {
        assert_eq!(kernel(&[0.3, 0.1], &[0.3, 0.1], 2.0, &[0.5, 0.7]), 4.0);
        let k = kernel(&[0.0, 0.1], &[0.5, 0.1], 2.0, &[0.5, 0.7]);
        assert!((k - 4.0 * (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let x: Vec<Vec<f64>> = (0..9).map(|i| vec![(i as f64 * 0.37).fract(), (i as f64 * 0.61).fract()]).collect();
        let y: Vec<f64> = x.iter().map(|p| (3.0 * p[0]).sin() + p[1]).collect();
        let p = vec![0.2, -0.7, 0.1, -5.0];
        let (_, g) = objective(&x, &y, &p).unwrap();
        for k in 0..p.len() {
            let h = 1e-6;
            let mut pp = p.clone();
            pp[k] += h;
            let mut pm = p.clone();
            pm[k] -= h;
            let fd = (objective(&x, &y, &pp).unwrap().0 - objective(&x, &y, &pm).unwrap().0) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-5 * (1.0 + fd.abs()), "param {k}: {fd} vs {}", g[k]);
        }
    }

    #[test]
    fn checkpoint_roundtrip_predicts_identically() {
        let x: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = x.iter().map(|p| p[0] * p[0]).collect();
        let m = GpModel::fit(&x, &y, &[[0.0, 5.0]], &GpFitOptions::default()).unwrap();
        let back = GpModel::from_json(&m.to_json().unwrap()).unwrap();
        for t in [0.3, 2.5, 4.9] {
            assert_eq!(m.predict(&[t]), back.predict(&[t]));
        }
    }
}
