//! Activation times: Dijkstra on the Purkinje trees, an anisotropic eikonal
//! solve in the myocardium, and their coupling through the PMJs.

mod myocardium;
mod tensor;
mod tree_solver;

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::VolumeMesh;
use crate::tree::PurkinjeTree;

pub use myocardium::{simplex_update, MyoSource, MyocardiumSolver};
pub use tensor::{monodomain_tensor, tensor_from_fibers, ConductivityModel};
pub use tree_solver::solve_tree;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CouplingConfig {
    /// Purkinje conduction velocity, m/s.
    pub cv: f64,
    pub max_outer_iters: usize,
    /// Convergence threshold on the max change of any activation time, ms.
    pub tol: f64,
}

impl Default for CouplingConfig {
    fn default() -> Self {
        CouplingConfig { cv: 2.0, max_outer_iters: 20, tol: 1e-3 }
    }
}

/// Root activation times (left, right) for a root delay `rt` in ms: a
/// positive delay activates the right root later.
pub fn root_times_from_delay(rt: f64) -> [f64; 2] {
    [(-rt).max(0.0), rt.max(0.0)]
}

/// Where a PMJ couples into the myocardium.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PmjSite {
    Inside { tet: usize, weights: [f64; 4] },
    /// Snapped to the nearest vertex (PMJ just outside the mesh).
    Vertex(usize),
}

/// Snap tolerance for PMJs that fall just outside the volume, mm.
pub const PMJ_SNAP_RADIUS: f64 = 2.0;

#[derive(Debug, Clone)]
pub struct CoupledTree {
    pub tree: PurkinjeTree,
    pub root_time: f64,
    adjacency: Vec<Vec<(usize, f64)>>,
    sites: Vec<(usize, PmjSite)>,
}

impl CoupledTree {
    pub fn sites(&self) -> &[(usize, PmjSite)] {
        &self.sites
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationField {
    /// Per tree (left first), per node.
    pub tau_tree: Vec<Vec<f64>>,
    /// Per mesh vertex.
    pub tau_myo: Vec<f64>,
}

impl ActivationField {
    pub fn min_time(&self) -> f64 {
        self.tau_myo.iter().copied().filter(|t| t.is_finite()).fold(f64::INFINITY, f64::min)
    }

    pub fn max_time(&self) -> f64 {
        self.tau_myo.iter().copied().filter(|t| t.is_finite()).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("vertex_id,tau_ms\n");
        for (i, t) in self.tau_myo.iter().enumerate() {
            let _ = writeln!(out, "{i},{t}");
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// Legacy ASCII VTK unstructured grid with a point-data scalar.
    pub fn to_vtk(&self, mesh: &VolumeMesh) -> String {
        let mut out = String::from("# vtk DataFile Version 3.0\nactivation\nASCII\nDATASET UNSTRUCTURED_GRID\n");
        let _ = writeln!(out, "POINTS {} double", mesh.vertices.len());
        for p in &mesh.vertices {
            let _ = writeln!(out, "{} {} {}", p.x, p.y, p.z);
        }
        let _ = writeln!(out, "CELLS {} {}", mesh.tets.len(), mesh.tets.len() * 5);
        for t in &mesh.tets {
            let _ = writeln!(out, "4 {} {} {} {}", t[0], t[1], t[2], t[3]);
        }
        let _ = writeln!(out, "CELL_TYPES {}", mesh.tets.len());
        for _ in &mesh.tets {
            out.push_str("10\n");
        }
        let _ = writeln!(out, "POINT_DATA {}\nSCALARS tau_ms double 1\nLOOKUP_TABLE default", mesh.vertices.len());
        for t in &self.tau_myo {
            let _ = writeln!(out, "{}", if t.is_finite() { *t } else { -1.0 });
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct CoupledOutcome {
    pub field: ActivationField,
    pub sweeps: usize,
    pub converged: bool,
    /// Max change per sweep.
    pub changes: Vec<f64>,
}

/// Coupled tree/myocardium problem for fixed trees.
#[derive(Debug, Clone)]
pub struct CoupledSolver<'a> {
    pub myo: &'a MyocardiumSolver,
    pub trees: Vec<CoupledTree>,
    pub config: CouplingConfig,
}

impl<'a> CoupledSolver<'a> {
    /// Locates every PMJ of every tree; errors when a PMJ is farther than
    /// [`PMJ_SNAP_RADIUS`] from the mesh.
    pub fn new(myo: &'a MyocardiumSolver, trees: Vec<(PurkinjeTree, f64)>, config: CouplingConfig) -> Result<Self> {
        if !(config.cv > 0.0) {
            return Err(Error::Config(format!("Purkinje velocity {} must be positive", config.cv)));
        }
        let mesh = myo.mesh();
        let mut out = Vec::with_capacity(trees.len());
        for (ti, (tree, root_time)) in trees.into_iter().enumerate() {
            let mut sites = Vec::with_capacity(tree.pmjs.len());
            for &p in &tree.pmjs {
                let x = tree.node(p);
                let site = match myo.locate(&x) {
                    Some((tet, weights)) => PmjSite::Inside { tet, weights },
                    None => match myo.locator().nearest_vertex(mesh, &x, PMJ_SNAP_RADIUS) {
                        Some(v) => PmjSite::Vertex(v),
                        None => {
                            return Err(Error::Locate(format!(
                                "PMJ {p} of tree {ti} at ({:.3}, {:.3}, {:.3}) is outside the mesh",
                                x.x, x.y, x.z
                            )))
                        }
                    },
                };
                sites.push((p, site));
            }
            let adjacency = tree.adjacency();
            out.push(CoupledTree { tree, root_time, adjacency, sites });
        }
        Ok(CoupledSolver { myo, trees: out, config })
    }

    fn myo_at(&self, tau_myo: &[f64], point: &crate::mesh::Point3, site: &PmjSite) -> f64 {
        match *site {
            PmjSite::Inside { tet, .. } => self.myo.arrival_at(tau_myo, tet, point),
            PmjSite::Vertex(v) => tau_myo[v],
        }
    }

    /// Field with every time at infinity, the start of the iteration.
    pub fn unactivated(&self) -> ActivationField {
        ActivationField {
            tau_tree: self.trees.iter().map(|ct| vec![f64::INFINITY; ct.tree.node_count()]).collect(),
            tau_myo: vec![f64::INFINITY; self.myo.mesh().vertices.len()],
        }
    }

    /// One outer sweep: trees from roots plus retrograde PMJ times, then the
    /// myocardium from the updated PMJ times. The result is clamped to `prev`
    /// so round-off can never move a time later.
    pub fn sweep(&self, prev: &ActivationField) -> Result<ActivationField> {
        let tau_myo = &prev.tau_myo;
        let mut tau_tree = Vec::with_capacity(self.trees.len());
        let mut sources = Vec::new();
        for ct in &self.trees {
            let mut tree_sources = vec![(ct.tree.root, ct.root_time)];
            for (p, site) in &ct.sites {
                let t = self.myo_at(tau_myo, &ct.tree.node(*p), site);
                if t.is_finite() {
                    tree_sources.push((*p, t));
                }
            }
            let tau = tree_solver::solve_graph(&ct.adjacency, self.config.cv, &tree_sources);
            for (p, site) in &ct.sites {
                let time = tau[*p];
                if !time.is_finite() {
                    continue;
                }
                sources.push(match *site {
                    PmjSite::Inside { tet, .. } => MyoSource::Point { point: ct.tree.node(*p), tet, time },
                    PmjSite::Vertex(vertex) => MyoSource::Vertex { vertex, time },
                });
            }
            tau_tree.push(tau);
        }
        let mut tau_myo = self.myo.solve(&sources)?;
        clamp(&mut tau_myo, &prev.tau_myo);
        for (t, p) in tau_tree.iter_mut().zip(&prev.tau_tree) {
            clamp(t, p);
        }
        Ok(ActivationField { tau_tree, tau_myo })
    }

    pub fn solve(&self) -> Result<CoupledOutcome> {
        let mut prev: Option<ActivationField> = None;
        let mut changes = Vec::new();
        let initial = self.unactivated();
        for it in 1..=self.config.max_outer_iters.max(1) {
            let next = self.sweep(prev.as_ref().unwrap_or(&initial))?;
            let change = prev.as_ref().map_or(f64::INFINITY, |p| max_change(p, &next));
            changes.push(change);
            prev = Some(next);
            if change < self.config.tol {
                return Ok(CoupledOutcome { field: prev.unwrap(), sweeps: it, converged: true, changes });
            }
        }
        let sweeps = changes.len();
        log::warn!("coupled activation did not converge in {sweeps} sweeps");
        Ok(CoupledOutcome { field: prev.unwrap(), sweeps, converged: false, changes })
    }
}

fn clamp(next: &mut [f64], prev: &[f64]) {
    if next.len() == prev.len() {
        for (n, p) in next.iter_mut().zip(prev) {
            *n = n.min(*p);
        }
    }
}

fn max_change(a: &ActivationField, b: &ActivationField) -> f64 {
    let pairs = a
        .tau_myo
        .iter()
        .zip(&b.tau_myo)
        .chain(a.tau_tree.iter().zip(&b.tau_tree).flat_map(|(x, y)| x.iter().zip(y)));
    let mut m: f64 = 0.0;
    for (x, y) in pairs {
        let d = if x.is_finite() && y.is_finite() {
            (x - y).abs()
        } else if x.is_infinite() && y.is_infinite() {
            0.0
        } else {
            f64::INFINITY
        };
        m = m.max(d);
    }
    m
}

/// Convenience wrapper for a full coupled solve.
pub fn solve_coupled(
    myo: &MyocardiumSolver,
    trees: &[(&PurkinjeTree, f64)],
    config: &CouplingConfig,
) -> Result<CoupledOutcome> {
    let owned = trees.iter().map(|(t, r)| ((*t).clone(), *r)).collect();
    CoupledSolver::new(myo, owned, *config)?.solve()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn root_delay_mapping() {
        assert_eq!(root_times_from_delay(-75.0), [75.0, 0.0]);
        assert_eq!(root_times_from_delay(10.0), [0.0, 10.0]);
        assert_eq!(root_times_from_delay(0.0), [0.0, 0.0]);
    }
}
