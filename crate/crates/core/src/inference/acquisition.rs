use rayon::prelude::*;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use super::sampling::uniform_in_box;
use crate::gp::GpModel;
use crate::rng::{stream_rng, Stream};

/// Expected improvement below `y_best` for a Gaussian prediction.
pub fn expected_improvement(mu: f64, var: f64, y_best: f64) -> f64 {
    let gain = y_best - mu;
    let sigma = var.max(0.0).sqrt();
    if sigma == 0.0 {
        return gain.max(0.0);
    }
    let z = gain / sigma;
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    (gain * n.cdf(z) + sigma * n.pdf(z)).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct AcquisitionOptions {
    pub candidates: usize,
    pub polish: usize,
}

impl Default for AcquisitionOptions {
    fn default() -> Self {
        AcquisitionOptions { candidates: 10_000, polish: 10 }
    }
}

fn ei_at(model: &GpModel, theta: &[f64], y_best: f64) -> f64 {
    let (mu, var) = model.predict(theta);
    expected_improvement(mu, var, y_best)
}

/// Coordinate search inside the box, step halving from 5% of each range.
fn polish(model: &GpModel, bounds: &[[f64; 2]], start: &[f64], y_best: f64) -> (Vec<f64>, f64) {
    let mut x = start.to_vec();
    let mut best = ei_at(model, &x, y_best);
    let mut frac = 0.05;
    while frac > 1e-4 {
        let mut improved = false;
        for k in 0..x.len() {
            let [lo, hi] = bounds[k];
            for sign in [1.0, -1.0] {
                let mut y = x.clone();
                y[k] = (x[k] + sign * frac * (hi - lo)).clamp(lo, hi);
                if y[k] == x[k] {
                    continue;
                }
                let v = ei_at(model, &y, y_best);
                if v > best {
                    best = v;
                    x = y;
                    improved = true;
                }
            }
        }
        if !improved {
            frac *= 0.5;
        }
    }
    (x, best)
}

/// Maximises EI: uniform candidates, then coordinate polish of the best few.
/// Deterministic for a given `(seed, step)`.
pub fn maximize_ei(
    model: &GpModel,
    bounds: &[[f64; 2]],
    y_best: f64,
    seed: u64,
    step: u64,
    opts: &AcquisitionOptions,
) -> (Vec<f64>, f64) {
    let mut rng = stream_rng(seed, Stream::BoCandidates, step);
    let cands: Vec<Vec<f64>> = (0..opts.candidates.max(1)).map(|_| uniform_in_box(&mut rng, bounds)).collect();
    let scores: Vec<f64> = cands.par_iter().map(|c| ei_at(model, c, y_best)).collect();
    let mut order: Vec<usize> = (0..cands.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let polished: Vec<(Vec<f64>, f64)> = order
        .iter()
        .take(opts.polish)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&&i| polish(model, bounds, &cands[i], y_best))
        .collect();
    let mut best = (cands[order[0]].clone(), scores[order[0]]);
    for p in polished {
        if p.1 > best.1 {
            best = p;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        assert_eq!(expected_improvement(1.0, 0.0, 1.0), 0.0);
        assert_eq!(expected_improvement(0.5, 0.0, 1.0), 0.5);
        let v = expected_improvement(2.0, 1.0, 2.0);
        assert!((v - 1.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn monotone_in_mean() {
        let a = expected_improvement(0.0, 0.3, 1.0);
        let b = expected_improvement(0.5, 0.3, 1.0);
        assert!(a > b);
    }
}
