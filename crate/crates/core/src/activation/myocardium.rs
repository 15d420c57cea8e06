//! Fast-iterative eikonal solver on tetrahedra with element-constant
//! anisotropic tensors.

use std::collections::VecDeque;

use nalgebra::{Matrix2, Matrix3, Vector2};

use super::tensor::{tensor_from_fibers, ConductivityModel};
use crate::error::{Error, Result};
use crate::mesh::barycentric_3d;
use crate::mesh::{Point3, TetLocator, VolumeMesh};

/// Boundary data for the myocardial solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MyoSource {
    /// Activation time imposed at a mesh vertex.
    Vertex { vertex: usize, time: f64 },
    /// Off-node source: the vertices of `tet` are seeded with the exact
    /// travel time from `point` under that element's tensor.
    Point { point: Point3, tet: usize, time: f64 },
}

/// Precomputed per-element metrics for repeated solves on one mesh.
#[derive(Debug, Clone)]
pub struct MyocardiumSolver {
    mesh: VolumeMesh,
    /// Eikonal tensor per tet, (mm/ms)^2.
    tensors: Vec<Matrix3<f64>>,
    /// Inverse tensors: the travel-time metric.
    metrics: Vec<Matrix3<f64>>,
    vertex_tets: Vec<Vec<usize>>,
    neighbors: Vec<Vec<usize>>,
    locator: TetLocator,
}

impl MyocardiumSolver {
    pub fn new(mesh: VolumeMesh, cm: &ConductivityModel) -> Result<Self> {
        cm.validate()?;
        let tensors = mesh.fibers.iter().map(|f| tensor_from_fibers(cm, f)).collect::<Result<Vec<_>>>()?;
        Self::with_tensors(mesh, tensors)
    }

    /// Solver with explicit per-tet tensors (must be SPD).
    pub fn with_tensors(mesh: VolumeMesh, tensors: Vec<Matrix3<f64>>) -> Result<Self> {
        if tensors.len() != mesh.tets.len() {
            return Err(Error::Mesh("one tensor per tet required".into()));
        }
        let metrics = tensors
            .iter()
            .enumerate()
            .map(|(t, d)| {
                d.cholesky()
                    .map(|c| c.inverse())
                    .ok_or_else(|| Error::Numeric(format!("tensor of tet {t} is not positive definite")))
            })
            .collect::<Result<Vec<_>>>()?;
        let vertex_tets = mesh.vertex_tets();
        let neighbors = mesh.vertex_neighbors();
        let locator = TetLocator::new(&mesh);
        Ok(MyocardiumSolver { mesh, tensors, metrics, vertex_tets, neighbors, locator })
    }

    pub fn mesh(&self) -> &VolumeMesh {
        &self.mesh
    }

    pub fn tensor(&self, tet: usize) -> &Matrix3<f64> {
        &self.tensors[tet]
    }

    pub fn locator(&self) -> &TetLocator {
        &self.locator
    }

    /// Travel time from `from` to `to` under the metric of `tet`.
    pub fn element_distance(&self, tet: usize, from: &Point3, to: &Point3) -> f64 {
        let e = to - from;
        e.dot(&(self.metrics[tet] * e)).max(0.0).sqrt()
    }

    /// Linear interpolation of a nodal field at barycentric weights of `tet`.
    pub fn interpolate(&self, field: &[f64], tet: usize, weights: &[f64; 4]) -> f64 {
        let ids = self.mesh.tets[tet];
        let mut acc = 0.0;
        for k in 0..4 {
            let v = field[ids[k]];
            if v.is_infinite() {
                return f64::INFINITY;
            }
            acc += weights[k] * v;
        }
        acc
    }

    /// Earliest arrival at a point inside `tet` from the element's vertices,
    /// each travelling straight under the element metric. Never undercuts a
    /// time seeded from the same point.
    pub fn arrival_at(&self, field: &[f64], tet: usize, p: &Point3) -> f64 {
        self.mesh.tets[tet]
            .iter()
            .map(|&v| field[v] + self.element_distance(tet, &self.mesh.vertices[v], p))
            .fold(f64::INFINITY, f64::min)
    }

    /// Containing tet of `p` within a 2 mm search box.
    pub fn locate(&self, p: &Point3) -> Option<(usize, [f64; 4])> {
        self.locator.locate(&self.mesh, p, 2.0, 1e-8)
    }

    pub fn barycentric(&self, tet: usize, p: &Point3) -> [f64; 4] {
        barycentric_3d(&self.mesh.tet_points(tet), p)
    }

    /// Nodal times at every source-adjacent vertex before propagation.
    fn seed(&self, sources: &[MyoSource]) -> Result<Vec<f64>> {
        let n = self.mesh.vertices.len();
        let mut tau = vec![f64::INFINITY; n];
        for s in sources {
            match *s {
                MyoSource::Vertex { vertex, time } => {
                    if vertex >= n {
                        return Err(Error::Locate(format!("source vertex {vertex} outside mesh")));
                    }
                    tau[vertex] = tau[vertex].min(time);
                }
                MyoSource::Point { point, tet, time } => {
                    if tet >= self.mesh.tets.len() {
                        return Err(Error::Locate(format!("source tet {tet} outside mesh")));
                    }
                    for &v in &self.mesh.tets[tet] {
                        let t = time + self.element_distance(tet, &point, &self.mesh.vertices[v]);
                        tau[v] = tau[v].min(t);
                    }
                }
            }
        }
        Ok(tau)
    }

    /// Solves `sqrt(D grad(tau) . grad(tau)) = 1` with the given sources.
    pub fn solve(&self, sources: &[MyoSource]) -> Result<Vec<f64>> {
        if sources.is_empty() {
            return Err(Error::Config("myocardial solve needs at least one source".into()));
        }
        let mut tau = self.seed(sources)?;
        let n = tau.len();
        let mut queued = vec![false; n];
        let mut active: VecDeque<usize> = VecDeque::new();
        for v in 0..n {
            if tau[v].is_finite() {
                queued[v] = true;
                active.push_back(v);
            }
        }
        while let Some(v) = active.pop_front() {
            queued[v] = false;
            for &u in &self.neighbors[v] {
                let cand = self.local_update(u, Some(v), &tau);
                let improves = if tau[u].is_finite() { cand < tau[u] - 1e-12 * tau[u].abs().max(1.0) } else { cand.is_finite() };
                if improves {
                    tau[u] = cand;
                    if !queued[u] {
                        queued[u] = true;
                        active.push_back(u);
                    }
                }
            }
        }
        Ok(tau)
    }

    /// Smallest arrival time at vertex `v` over its incident tets, or only
    /// over those that also contain `via`: the others have not changed since
    /// `v` last saw them.
    fn local_update(&self, v: usize, via: Option<usize>, tau: &[f64]) -> f64 {
        let target = self.mesh.vertices[v];
        let mut best = f64::INFINITY;
        for &t in &self.vertex_tets[v] {
            if via.is_some_and(|w| !self.mesh.tets[t].contains(&w)) {
                continue;
            }
            let mut pts = [Point3::zeros(); 3];
            let mut vals = [0.0; 3];
            let mut k = 0;
            for &w in &self.mesh.tets[t] {
                if w != v && tau[w].is_finite() {
                    pts[k] = self.mesh.vertices[w];
                    vals[k] = tau[w];
                    k += 1;
                }
            }
            if k > 0 {
                best = best.min(simplex_update(&target, &pts[..k], &vals[..k], &self.metrics[t]));
            }
        }
        best
    }
}

/// Minimum over the simplex spanned by `pts` of `tau(y) + |x - y|_M`, with
/// `tau` linear on the simplex. Checks the interior stationary point of
/// every sub-simplex.
pub fn simplex_update(x: &Point3, pts: &[Point3], vals: &[f64], metric: &Matrix3<f64>) -> f64 {
    let mut best = f64::INFINITY;
    let k = pts.len();
    for (i, p) in pts.iter().enumerate() {
        let e = x - p;
        best = best.min(vals[i] + e.dot(&(metric * e)).max(0.0).sqrt());
    }
    for i in 0..k {
        for j in i + 1..k {
            if let Some(t) = edge_update(x, [&pts[i], &pts[j]], [vals[i], vals[j]], metric) {
                best = best.min(t);
            }
        }
    }
    if k == 3 {
        if let Some(t) = face_update(x, pts, vals, metric) {
            best = best.min(t);
        }
    }
    best
}

/// Interior minimiser on segment p1 + s (p0 - p1), s in [0, 1].
fn edge_update(x: &Point3, p: [&Point3; 2], v: [f64; 2], m: &Matrix3<f64>) -> Option<f64> {
    let e = x - p[1];
    let d = p[0] - p[1];
    let dt = v[0] - v[1];
    let a = d.dot(&(m * d));
    if !(a > 0.0) {
        return None;
    }
    let b = d.dot(&(m * e));
    let c = e.dot(&(m * e));
    let denom = 1.0 - dt * dt / a;
    let num = c - b * b / a;
    if !(denom > 0.0) || num < 0.0 {
        return None;
    }
    let g = (num / denom).sqrt();
    let s = (b - g * dt) / a;
    if (0.0..=1.0).contains(&s) {
        Some(v[1] + s * dt + g)
    } else {
        None
    }
}

/// Interior minimiser on the triangle p2 + E lambda, lambda >= 0, sum <= 1.
/// Stationarity gives `g^2 (1 - dt^T A^-1 dt) = c - b^T A^-1 b` with
/// A = E^T M E, b = E^T M e, c = e^T M e.
fn face_update(x: &Point3, p: &[Point3], v: &[f64], m: &Matrix3<f64>) -> Option<f64> {
    let e = x - p[2];
    let e0 = p[0] - p[2];
    let e1 = p[1] - p[2];
    let me0 = m * e0;
    let me1 = m * e1;
    let a = Matrix2::new(e0.dot(&me0), e0.dot(&me1), e1.dot(&me0), e1.dot(&me1));
    let a_inv = a.try_inverse()?;
    let b = Vector2::new(me0.dot(&e), me1.dot(&e));
    let c = e.dot(&(m * e));
    let dt = Vector2::new(v[0] - v[2], v[1] - v[2]);
    let denom = 1.0 - dt.dot(&(a_inv * dt));
    let num = c - b.dot(&(a_inv * b));
    if !(denom > 0.0) || num < 0.0 {
        return None;
    }
    let g = (num / denom).sqrt();
    let lam = a_inv * (b - dt * g);
    if lam.x >= 0.0 && lam.y >= 0.0 && lam.x + lam.y <= 1.0 {
        Some(v[2] + lam.dot(&dt) + g)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute-force minimum over a fine barycentric grid.
    fn brute(x: &Point3, p: &[Point3], v: &[f64], m: &Matrix3<f64>) -> f64 {
        let n = 600;
        let mut best = f64::INFINITY;
        for i in 0..=n {
            for j in 0..=n - i {
                let (l0, l1) = (i as f64 / n as f64, j as f64 / n as f64);
                let l2 = 1.0 - l0 - l1;
                let y = p[0] * l0 + p[1] * l1 + p[2] * l2;
                let t = v[0] * l0 + v[1] * l1 + v[2] * l2;
                let e = x - y;
                best = best.min(t + e.dot(&(m * e)).sqrt());
            }
        }
        best
    }

    #[test]
    fn face_update_matches_brute_force() {
        let p = [Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 0.1, 0.0), Point3::new(0.2, 1.0, 0.1)];
        let x = Point3::new(0.4, 0.3, 1.0);
        let m_iso = Matrix3::identity();
        let f = Point3::new(1.0, 1.0, 0.5).normalize();
        let d = Matrix3::identity() * 0.1 + f * f.transpose() * 0.9;
        let m_aniso = d.try_inverse().unwrap();
        for m in [m_iso, m_aniso] {
            for v in [[0.0, 0.2, 0.1], [0.5, 0.0, 0.9], [0.3, 0.3, 0.3]] {
                let got = simplex_update(&x, &p, &v, &m);
                let want = brute(&x, &p, &v, &m);
                assert!(got <= want + 1e-12, "{got} > {want}");
                assert!(want - got < 2e-5, "{got} vs {want}");
            }
        }
    }

    #[test]
    fn planar_front_is_exact() {
        // tau = k . y with |k|_D = 1 is reproduced exactly.
        let p = [Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0), Point3::new(0.0, 1.0, 0.0)];
        let x = Point3::new(0.4, 0.4, 0.8);
        let dir = Point3::new(0.2, 0.3, 1.0).normalize();
        let v: Vec<f64> = p.iter().map(|q| dir.dot(q)).collect();
        let got = simplex_update(&x, &p, &v, &Matrix3::identity());
        assert!((got - dir.dot(&x)).abs() < 1e-12);
    }
}
