use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;

use super::sampling::uniform_in_box;
use crate::error::{Error, Result};
use crate::gp::GpModel;
use crate::rng::{stream_rng, Stream};

/// `N(mu; y_min, var + var_min)`.
pub fn prior_density(mu: f64, var: f64, y_min: f64, var_min: f64) -> f64 {
    let s2 = var + var_min;
    (-(mu - y_min).powi(2) / (2.0 * s2)).exp() / (2.0 * PI * s2).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorSample {
    pub theta: Vec<f64>,
    pub p: f64,
}

#[derive(Debug, Clone)]
pub struct PriorDraw {
    /// Accepted samples, descending `p`.
    pub accepted: Vec<PriorSample>,
    pub p_max: f64,
    pub drawn: usize,
}

/// Rejection sampling: `n` uniform draws, each kept when `p > r` with
/// `r ~ U(0, p_max)`; `p_max` is the density at `mu = y_min` with the
/// smallest predicted variance among the draws.
pub fn rejection_sample_prior(
    model: &GpModel,
    bounds: &[[f64; 2]],
    y_min: f64,
    var_min: f64,
    n: usize,
    seed: u64,
    round: u64,
) -> Result<PriorDraw> {
    let mut rng = stream_rng(seed, Stream::PriorSampling, 2 * round);
    let thetas: Vec<Vec<f64>> = (0..n).map(|_| uniform_in_box(&mut rng, bounds)).collect();
    let preds: Vec<(f64, f64)> = thetas.par_iter().map(|t| model.predict(t)).collect();
    let min_var = preds.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let p_max = prior_density(y_min, min_var, y_min, var_min);
    if !(p_max.is_finite() && p_max > 0.0) {
        return Err(Error::Numeric(format!(
            "prior maximum is {p_max} (min variance {min_var:e}, reference variance {var_min:e})"
        )));
    }
    let mut rng = stream_rng(seed, Stream::PriorSampling, 2 * round + 1);
    let mut accepted = Vec::new();
    let mut hist = [0usize; 10];
    for (t, (mu, var)) in thetas.into_iter().zip(&preds) {
        let p = prior_density(*mu, *var, y_min, var_min);
        let r = rng.gen::<f64>() * p_max;
        hist[((p / p_max * 10.0) as usize).min(9)] += 1;
        if p > r {
            accepted.push(PriorSample { theta: t, p });
        }
    }
    if accepted.is_empty() {
        return Err(Error::Numeric(format!(
            "prior rejection sampling accepted none of {n} draws; p_max = {p_max:e}, p/p_max deciles = {hist:?}"
        )));
    }
    // stable: equal densities keep draw order
    accepted.sort_by(|a, b| b.p.total_cmp(&a.p));
    log::info!("prior round {round}: accepted {} of {n} (p_max {p_max:.4e})", accepted.len());
    Ok(PriorDraw { accepted, p_max, drawn: n })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plug_in_value() {
        let v = 0.3;
        let p = prior_density(1.0, v, 1.0, v);
        assert!((p - 1.0 / (2.0 * PI * 2.0 * v).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn decreases_away_from_minimum() {
        let mut prev = f64::INFINITY;
        for k in 0..20 {
            let p = prior_density(1.0 + k as f64 * 0.1, 0.2, 1.0, 0.1);
            assert!(p < prev);
            prev = p;
        }
    }
}
