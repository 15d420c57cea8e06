use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::Point3;

/// Intra-/extracellular conductivities (mS/cm) and the dimensionless scaling
/// constant of the eikonal tensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConductivityModel {
    pub sigma_il: f64,
    pub sigma_el: f64,
    pub sigma_it: f64,
    pub sigma_et: f64,
    pub alpha: f64,
}

impl Default for ConductivityModel {
    fn default() -> Self {
        ConductivityModel { sigma_il: 3.0, sigma_el: 3.0, sigma_it: 0.3, sigma_et: 1.2, alpha: 0.075 }
    }
}

impl ConductivityModel {
    pub fn validate(&self) -> Result<()> {
        let s = [self.sigma_il, self.sigma_el, self.sigma_it, self.sigma_et];
        if s.iter().any(|&x| !(x > 0.0)) {
            return Err(Error::Config("conductivities must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!("alpha {} outside (0, 1]", self.alpha)));
        }
        Ok(())
    }

    /// Intracellular tensor `G_i = s_t I + (s_l - s_t) f f^T`.
    pub fn intracellular(&self, fiber: &Point3) -> Matrix3<f64> {
        axial_tensor(self.sigma_il, self.sigma_it, fiber)
    }

    pub fn extracellular(&self, fiber: &Point3) -> Matrix3<f64> {
        axial_tensor(self.sigma_el, self.sigma_et, fiber)
    }
}

fn axial_tensor(longitudinal: f64, transverse: f64, fiber: &Point3) -> Matrix3<f64> {
    Matrix3::identity() * transverse + fiber * fiber.transpose() * (longitudinal - transverse)
}

/// `alpha^2 G_i (G_i + G_e)^-1 G_e` in conductivity units (mS/cm).
pub fn monodomain_tensor(cm: &ConductivityModel, fiber: &Point3) -> Result<Matrix3<f64>> {
    if (fiber.norm() - 1.0).abs() > 1e-9 {
        return Err(Error::Numeric(format!("fiber has norm {}", fiber.norm())));
    }
    let gi = cm.intracellular(fiber);
    let ge = cm.extracellular(fiber);
    let sum_inv = (gi + ge)
        .try_inverse()
        .ok_or_else(|| Error::Numeric("singular conductivity sum".into()))?;
    let d = gi * sum_inv * ge * (cm.alpha * cm.alpha);
    // symmetric in exact arithmetic; remove rounding asymmetry
    Ok((d + d.transpose()) * 0.5)
}

/// Eikonal tensor in (mm/ms)^2: with conductivities in mS/cm the square root
/// of an eigenvalue of the monodomain tensor is a speed in cm/ms, so the
/// tensor is multiplied by 100.
pub fn tensor_from_fibers(cm: &ConductivityModel, fiber: &Point3) -> Result<Matrix3<f64>> {
    Ok(monodomain_tensor(cm, fiber)? * 100.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_conductivities_along_x() {
        let cm = ConductivityModel { alpha: 0.1, ..ConductivityModel::default() };
        let d = monodomain_tensor(&cm, &Point3::x()).unwrap();
        assert!((d[(0, 0)] - 0.01 * 1.5).abs() < 1e-15);
        assert!((d[(1, 1)] - 0.01 * 0.24).abs() < 1e-15);
        assert!((d[(2, 2)] - 0.01 * 0.24).abs() < 1e-15);
        assert!(d[(0, 1)].abs() < 1e-16 && d[(1, 2)].abs() < 1e-16);
        let v = tensor_from_fibers(&cm, &Point3::x()).unwrap();
        assert!((v[(0, 0)].sqrt() - 1.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn isotropic_conductivities_give_scaled_identity() {
        let cm = ConductivityModel { sigma_il: 2.0, sigma_it: 2.0, sigma_el: 0.5, sigma_et: 0.5, alpha: 0.3 };
        let f = Point3::new(0.3, -0.4, 0.2).normalize();
        let d = monodomain_tensor(&cm, &f).unwrap();
        let c = 0.09 * 2.0 * 0.5 / 2.5;
        assert!((d - Matrix3::identity() * c).amax() < 1e-15);
    }

    #[test]
    fn non_unit_fiber_is_rejected() {
        assert!(monodomain_tensor(&ConductivityModel::default(), &Point3::new(1.0, 1.0, 0.0)).is_err());
    }
}
