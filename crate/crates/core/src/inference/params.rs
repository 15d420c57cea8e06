use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree::VentricleParams;

pub const N_PARAMS: usize = 12;

pub const PARAM_NAMES: [&str; N_PARAMS] = [
    "l_i_L", "l_i_R", "l_F1_L", "l_F2_L", "l_F1_R", "l_F2_R", "alpha_F1_L", "alpha_F2_L", "alpha_F1_R", "alpha_F2_R",
    "RT", "CV",
];

pub const RT_INDEX: usize = 10;
pub const CV_INDEX: usize = 11;

/// `(l_i^L, l_i^R, l_F1^L, l_F2^L, l_F1^R, l_F2^R, a_F1^L, a_F2^L, a_F1^R,
/// a_F2^R, RT, CV)` in mm, rad, ms and m/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamVector(pub [f64; N_PARAMS]);

impl ParamVector {
    pub fn from_slice(v: &[f64]) -> Result<Self> {
        let arr: [f64; N_PARAMS] = v
            .try_into()
            .map_err(|_| Error::Config(format!("parameter vector needs {N_PARAMS} values, got {}", v.len())))?;
        Ok(ParamVector(arr))
    }

    /// Left ventricle first.
    pub fn ventricles(&self) -> [VentricleParams; 2] {
        let t = &self.0;
        [
            VentricleParams { initial_length: t[0], fascicle_lengths: [t[2], t[3]], fascicle_angles: [t[6], t[7]] },
            VentricleParams { initial_length: t[1], fascicle_lengths: [t[4], t[5]], fascicle_angles: [t[8], t[9]] },
        ]
    }

    pub fn root_time(&self) -> f64 {
        self.0[RT_INDEX]
    }

    pub fn cv(&self) -> f64 {
        self.0[CV_INDEX]
    }

    pub fn with_root_time(mut self, rt: f64) -> Self {
        self.0[RT_INDEX] = rt;
        self
    }

    /// Bit pattern used as a cache key.
    pub fn key(&self) -> [u64; N_PARAMS] {
        self.0.map(f64::to_bits)
    }
}

/// Search box for the twelve parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds(pub Vec<[f64; 2]>);

impl Default for Bounds {
    fn default() -> Self {
        let length = [30.0, 100.0];
        let fascicle = [2.0, 50.0];
        let angle = [-PI / 4.0, 3.0 * PI / 4.0];
        Bounds(vec![
            length, length, fascicle, fascicle, fascicle, fascicle, angle, angle, angle, angle, [-75.0, 50.0],
            [2.0, 4.0],
        ])
    }
}

impl Bounds {
    pub fn validate(&self) -> Result<()> {
        if self.0.len() != N_PARAMS {
            return Err(Error::Config(format!("bounds need {N_PARAMS} intervals, got {}", self.0.len())));
        }
        for (name, [lo, hi]) in PARAM_NAMES.iter().zip(&self.0) {
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return Err(Error::Config(format!("bounds for {name} are not a non-empty interval: [{lo}, {hi}]")));
            }
        }
        if self.0[CV_INDEX][0] <= 0.0 {
            return Err(Error::Config("conduction velocity bounds must be positive".into()));
        }
        for k in [0, 1, 2, 3, 4, 5] {
            if self.0[k][0] <= 0.0 {
                return Err(Error::Config(format!("length bounds for {} must be positive", PARAM_NAMES[k])));
            }
        }
        Ok(())
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.iter().zip(&self.0).all(|(v, [lo, hi])| v >= lo && v <= hi)
    }

    pub fn width(&self, k: usize) -> f64 {
        self.0[k][1] - self.0[k][0]
    }
}

/// Reference network of the synthetic study: LV bundle delayed by 75 ms,
/// Purkinje velocity 2 m/s.
pub fn synthetic_reference() -> ParamVector {
    ParamVector([35.93, 79.86, 9.42, 18.25, 43.41, 11.59, 1.44, 2.36, 2.36, 2.36, -75.0, 2.0])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_sits_in_the_box_up_to_rounded_angles() {
        let b = Bounds::default();
        b.validate().unwrap();
        let r = synthetic_reference();
        for k in 0..N_PARAMS {
            let [lo, hi] = b.0[k];
            // 2.36 rad is 3 pi / 4 rounded up
            assert!(r.0[k] >= lo && r.0[k] <= hi + 4e-3, "{}", PARAM_NAMES[k]);
        }
    }

    #[test]
    fn ventricle_split() {
        let v = synthetic_reference().ventricles();
        assert_eq!(v[0].initial_length, 35.93);
        assert_eq!(v[1].fascicle_lengths, [43.41, 11.59]);
        assert_eq!(v[0].fascicle_angles, [1.44, 2.36]);
    }

    #[test]
    fn empty_interval_is_rejected() {
        let mut b = Bounds::default();
        b.0[3] = [5.0, 5.0];
        assert!(b.validate().is_err());
    }
}
