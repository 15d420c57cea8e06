use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{Point3, TetLocator, VolumeMesh};

/// Electrode positions in mesh coordinates (mm).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub struct Electrodes {
    pub ra: [f64; 3],
    pub la: [f64; 3],
    pub ll: [f64; 3],
    pub v1: [f64; 3],
    pub v2: [f64; 3],
    pub v3: [f64; 3],
    pub v4: [f64; 3],
    pub v5: [f64; 3],
    pub v6: [f64; 3],
}

impl Electrodes {
    /// Order: RA, LA, LL, V1..V6.
    pub fn positions(&self) -> [Point3; 9] {
        [self.ra, self.la, self.ll, self.v1, self.v2, self.v3, self.v4, self.v5, self.v6].map(Point3::from)
    }

    pub fn from_positions(p: &[Point3; 9]) -> Self {
        let a = p.map(|q| [q.x, q.y, q.z]);
        Electrodes { ra: a[0], la: a[1], ll: a[2], v1: a[3], v2: a[4], v3: a[5], v4: a[6], v5: a[7], v6: a[8] }
    }
}

/// Twelve clinical leads from nine electrode signals (RA, LA, LL, V1..V6).
/// Precordial leads are referenced to the Wilson central terminal.
pub fn combine_electrodes<T: AsRef<[f64]>>(e: &[T]) -> Vec<Vec<f64>> {
    assert_eq!(e.len(), 9, "nine electrode signals expected");
    let (ra, la, ll) = (e[0].as_ref(), e[1].as_ref(), e[2].as_ref());
    let n = ra.len();
    let mut out = vec![vec![0.0; n]; 12];
    for k in 0..n {
        let (r, l, f) = (ra[k], la[k], ll[k]);
        let i = l - r;
        let ii = f - r;
        out[0][k] = i;
        out[1][k] = ii;
        out[2][k] = ii - i;
        out[3][k] = -(i + ii) / 2.0;
        out[4][k] = i - ii / 2.0;
        out[5][k] = ii - i / 2.0;
        let wct = (r + l + f) / 3.0;
        for v in 0..6 {
            out[6 + v][k] = e[3 + v].as_ref()[k] - wct;
        }
    }
    out
}

/// Point-electrode potentials in an infinite homogeneous medium, one field
/// per electrode over the mesh vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct LeadFieldSet {
    pub electrodes: [Point3; 9],
    pub phi: Vec<Vec<f64>>,
}

impl LeadFieldSet {
    pub fn scaled(&self, c: f64) -> Self {
        let phi = self.phi.iter().map(|f| f.iter().map(|v| v * c).collect()).collect();
        LeadFieldSet { electrodes: self.electrodes, phi }
    }

    /// Lead field `Z` of lead `lead` (index into the twelve-lead order).
    pub fn lead_field(&self, lead: usize) -> Vec<f64> {
        combine_electrodes(&self.phi).swap_remove(lead)
    }
}

pub fn electrode_potential(electrode: &Point3, x: &Point3) -> f64 {
    1.0 / (4.0 * PI * (x - electrode).norm())
}

/// Errors when an electrode lies inside the myocardium or on a vertex.
pub fn build_lead_fields(vm: &VolumeMesh, electrodes: &Electrodes) -> Result<LeadFieldSet> {
    let pos = electrodes.positions();
    let locator = TetLocator::new(vm);
    for (name, p) in super::ELECTRODE_NAMES.iter().zip(&pos) {
        if locator.locate(vm, p, 0.0, 0.0).is_some() {
            return Err(Error::Config(format!("electrode {name} lies inside the myocardial mesh")));
        }
        if vm.vertices.iter().any(|v| (v - p).norm() < 1e-9) {
            return Err(Error::Config(format!("electrode {name} coincides with a mesh vertex")));
        }
    }
    let phi = pos.iter().map(|e| vm.vertices.iter().map(|x| electrode_potential(e, x)).collect()).collect();
    Ok(LeadFieldSet { electrodes: pos, phi })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn augmented_leads_follow_electrodes() {
        let e: Vec<Vec<f64>> = (0..9).map(|i| vec![i as f64 * 0.7 - 1.3, (i * i) as f64]).collect();
        let l = combine_electrodes(&e);
        for k in 0..2 {
            let (r, a, f) = (e[0][k], e[1][k], e[2][k]);
            assert!((l[3][k] - (r - (a + f) / 2.0)).abs() < 1e-12);
            assert!((l[4][k] - (a - (r + f) / 2.0)).abs() < 1e-12);
            assert!((l[5][k] - (f - (r + a) / 2.0)).abs() < 1e-12);
            assert!((l[2][k] - (f - a)).abs() < 1e-12);
        }
    }
}
