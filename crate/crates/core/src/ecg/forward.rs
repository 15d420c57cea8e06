use nalgebra::Vector3;

use super::leads::{combine_electrodes, LeadFieldSet};
use super::template::ActionPotentialTemplate;
use super::EcgTrace;
use crate::activation::{ActivationField, ConductivityModel};
use crate::error::{Error, Result};
use crate::mesh::VolumeMesh;

/// Mesh-dependent part of the lead-field integral, reusable across
/// activation maps: per tet, `vol * G_i grad(phi_e)` for every electrode.
#[derive(Debug, Clone)]
pub struct EcgOperator {
    tets: Vec<[usize; 4]>,
    gradients: Vec<[Vector3<f64>; 4]>,
    weights: Vec<[Vector3<f64>; 9]>,
}

impl EcgOperator {
    pub fn new(vm: &VolumeMesh, cm: &ConductivityModel, lf: &LeadFieldSet) -> Result<Self> {
        cm.validate()?;
        if lf.phi.len() != 9 || lf.phi.iter().any(|f| f.len() != vm.vertices.len()) {
            return Err(Error::Config("lead fields do not match the mesh".into()));
        }
        let mut gradients = Vec::with_capacity(vm.tets.len());
        let mut weights = Vec::with_capacity(vm.tets.len());
        for (t, ids) in vm.tets.iter().enumerate() {
            let g = vm.shape_gradients(t);
            let gi = cm.intracellular(&vm.fibers[t]);
            let vol = vm.tet_volume(t);
            let mut w = [Vector3::zeros(); 9];
            for (e, phi) in lf.phi.iter().enumerate() {
                let grad_phi: Vector3<f64> = (0..4).map(|k| g[k] * phi[ids[k]]).sum();
                w[e] = gi * grad_phi * vol;
            }
            gradients.push(g);
            weights.push(w);
        }
        Ok(EcgOperator { tets: vm.tets.clone(), gradients, weights })
    }

    /// Samples `V(t) = -sum_tets vol U'(t - tau_c) (G_i grad tau) . grad Z` on
    /// `t = 0, dt, ..` up to `horizon`, with `tau_c` the tet-centroid time.
    pub fn apply(&self, tau: &[f64], ap: &ActionPotentialTemplate, dt: f64, horizon: f64) -> Result<EcgTrace> {
        ap.validate()?;
        if !(dt > 0.0) || !(horizon >= 0.0) {
            return Err(Error::Config(format!("invalid sampling dt={dt} horizon={horizon}")));
        }
        if let Some(v) = tau.iter().position(|t| !t.is_finite()) {
            return Err(Error::Numeric(format!("activation time at vertex {v} is not finite")));
        }
        let n = (horizon / dt + 1e-9).floor() as usize + 1;
        let mut electrodes = vec![vec![0.0; n]; 9];
        let mut du = vec![0.0; n];
        let lead_in = ap.lead_in();
        for (t, ids) in self.tets.iter().enumerate() {
            let g = &self.gradients[t];
            let grad_tau: Vector3<f64> = (0..4).map(|k| g[k] * tau[ids[k]]).sum();
            if grad_tau == Vector3::zeros() {
                continue;
            }
            let tc = ids.iter().map(|&v| tau[v]).sum::<f64>() / 4.0;
            let first = (((tc - lead_in) / dt).ceil().max(0.0) as usize).min(n);
            for k in first..n {
                du[k] = ap.derivative(k as f64 * dt - tc);
            }
            for (e, out) in electrodes.iter_mut().enumerate() {
                let a = grad_tau.dot(&self.weights[t][e]);
                for k in first..n {
                    out[k] -= a * du[k];
                }
            }
        }
        let leads = combine_electrodes(&electrodes);
        let tmin = tau.iter().copied().fold(f64::INFINITY, f64::min);
        let tmax = tau.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let end = tmax + 10.0 * ap.upstroke_width;
        let mut trace = EcgTrace::new(dt, 0.0, leads)?.with_qrs(tmin, end - tmin);
        trace.truncated = horizon < end;
        Ok(trace)
    }
}

/// One-shot ECG for an activation field. Repeated evaluations on the same
/// mesh should build an [`EcgOperator`] once.
pub fn compute_ecg(
    af: &ActivationField,
    vm: &VolumeMesh,
    cm: &ConductivityModel,
    lf: &LeadFieldSet,
    ap: &ActionPotentialTemplate,
    dt: f64,
    horizon: f64,
) -> Result<EcgTrace> {
    EcgOperator::new(vm, cm, lf)?.apply(&af.tau_myo, ap, dt, horizon)
}
