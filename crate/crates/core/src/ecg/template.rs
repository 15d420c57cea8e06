use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Analytic action potential: a logistic upstroke from rest to plateau and
/// a logistic repolarisation `apd` ms later.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ActionPotentialTemplate {
    pub resting: f64,
    pub plateau: f64,
    pub upstroke_width: f64,
    pub apd: f64,
    pub repol_width: f64,
}

impl Default for ActionPotentialTemplate {
    fn default() -> Self {
        ActionPotentialTemplate { resting: -85.0, plateau: 15.0, upstroke_width: 1.0, apd: 280.0, repol_width: 10.0 }
    }
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn logistic_slope(x: f64) -> f64 {
    let s = logistic(x);
    s * (1.0 - s)
}

impl ActionPotentialTemplate {
    pub fn validate(&self) -> Result<()> {
        if !(self.plateau > self.resting) {
            return Err(Error::Config("plateau must exceed resting potential".into()));
        }
        if !(self.upstroke_width > 0.0 && self.repol_width > 0.0 && self.apd > 0.0) {
            return Err(Error::Config("template widths and APD must be positive".into()));
        }
        Ok(())
    }

    /// Transmembrane potential `xi` ms after activation.
    pub fn value(&self, xi: f64) -> f64 {
        let up = logistic(xi / self.upstroke_width);
        let down = logistic((xi - self.apd) / self.repol_width);
        self.resting + (self.plateau - self.resting) * up * (1.0 - down)
    }

    pub fn derivative(&self, xi: f64) -> f64 {
        let u = xi / self.upstroke_width;
        let r = (xi - self.apd) / self.repol_width;
        let amp = self.plateau - self.resting;
        amp * (logistic_slope(u) / self.upstroke_width * (1.0 - logistic(r))
            - logistic(u) * logistic_slope(r) / self.repol_width)
    }

    /// Start of the support used when sampling `derivative`, relative to
    /// activation. Earlier contributions are below 1e-17 of the peak.
    pub fn lead_in(&self) -> f64 {
        40.0 * self.upstroke_width
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn limits_and_plateau() {
        let ap = ActionPotentialTemplate::default();
        assert!((ap.value(-1e3) - ap.resting).abs() < 1e-12);
        assert!((ap.value(100.0) - ap.plateau).abs() < 1e-3);
        assert!((ap.value(1e4) - ap.resting).abs() < 1e-9);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let ap = ActionPotentialTemplate::default();
        for xi in [-3.0, -0.5, 0.0, 0.7, 4.0, 275.0, 290.0] {
            let h = 1e-5;
            let fd = (ap.value(xi + h) - ap.value(xi - h)) / (2.0 * h);
            assert!((fd - ap.derivative(xi)).abs() < 1e-5 * (1.0 + fd.abs()), "xi={xi}");
        }
    }

    #[test]
    fn upstroke_is_monotone() {
        let ap = ActionPotentialTemplate::default();
        let mut prev = ap.value(-20.0);
        for k in 1..400 {
            let v = ap.value(-20.0 + k as f64 * 0.1);
            assert!(v >= prev);
            prev = v;
        }
    }
}
