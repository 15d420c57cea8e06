//! Harmonic map of a disk-topology surface onto the unit disk.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use nalgebra_sparse::{factorization::CscCholesky, CooMatrix, CscMatrix};
use serde::{Deserialize, Serialize};

use super::locate::TriangleLocator;
use super::{signed_area_2d, Point2, Point3, SurfaceMesh};
use crate::error::{Error, Result};

/// Planar chart of a surface: one uv point per vertex and a piecewise
/// constant length scale (mm per uv unit) per triangle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "FlatMapFile", into = "FlatMapFile")]
pub struct FlatMap {
    pub uv: Vec<Point2>,
    pub scale: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct FlatMapFile {
    uv: Vec<[f64; 2]>,
    scale: Vec<f64>,
}

impl From<FlatMapFile> for FlatMap {
    fn from(f: FlatMapFile) -> Self {
        FlatMap { uv: f.uv.into_iter().map(|[u, v]| Point2::new(u, v)).collect(), scale: f.scale }
    }
}

impl From<FlatMap> for FlatMapFile {
    fn from(f: FlatMap) -> Self {
        FlatMapFile { uv: f.uv.iter().map(|p| [p.x, p.y]).collect(), scale: f.scale }
    }
}

impl FlatMap {
    pub fn triangle_area_2d(&self, mesh: &SurfaceMesh, t: usize) -> f64 {
        let [a, b, c] = mesh.triangles[t];
        signed_area_2d(&self.uv[a], &self.uv[b], &self.uv[c])
    }
}

fn cotangent_weights(mesh: &SurfaceMesh) -> BTreeMap<(usize, usize), f64> {
    let mut w: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for tri in &mesh.triangles {
        for k in 0..3 {
            let (i, j, o) = (tri[k], tri[(k + 1) % 3], tri[(k + 2) % 3]);
            let e1 = mesh.vertices[i] - mesh.vertices[o];
            let e2 = mesh.vertices[j] - mesh.vertices[o];
            let cross = e1.cross(&e2).norm();
            let cot = if cross > 0.0 { e1.dot(&e2) / cross } else { 0.0 };
            *w.entry((i.min(j), i.max(j))).or_default() += 0.5 * cot;
        }
    }
    for v in w.values_mut() {
        *v = v.max(0.0);
    }
    w
}

/// Boundary loop placed on the unit circle by cumulative arc length, the
/// first loop vertex at angle zero.
fn boundary_positions(mesh: &SurfaceMesh) -> Vec<(usize, Point2)> {
    let lp = &mesh.boundary_loop;
    let n = lp.len();
    let mut cum = Vec::with_capacity(n + 1);
    cum.push(0.0);
    for k in 0..n {
        let d = (mesh.vertices[lp[(k + 1) % n]] - mesh.vertices[lp[k]]).norm();
        cum.push(cum[k] + d);
    }
    let total = cum[n];
    lp.iter()
        .enumerate()
        .map(|(k, &v)| {
            let theta = std::f64::consts::TAU * cum[k] / total;
            (v, Point2::new(theta.cos(), theta.sin()))
        })
        .collect()
}

/// Solves the discrete Laplace equation (cotangent weights, negative
/// weights clamped to zero) once per uv coordinate with the boundary loop
/// pinned to the unit circle.
pub fn harmonic_flatten(mesh: &SurfaceMesh) -> Result<FlatMap> {
    let n = mesh.vertices.len();
    let weights = cotangent_weights(mesh);
    let on_boundary = mesh.is_boundary();

    let mut uv = vec![Point2::zeros(); n];
    for (v, p) in boundary_positions(mesh) {
        uv[v] = p;
    }

    let mut interior_index = vec![usize::MAX; n];
    let mut interior = Vec::new();
    let mut used = vec![false; n];
    for tri in &mesh.triangles {
        for &v in tri {
            used[v] = true;
        }
    }
    for v in 0..n {
        if used[v] && !on_boundary[v] {
            interior_index[v] = interior.len();
            interior.push(v);
        }
    }
    let m = interior.len();

    let mut coo = CooMatrix::new(m, m);
    let mut diag = vec![0.0; m];
    let mut rhs = DMatrix::<f64>::zeros(m, 2);
    for (&(i, j), &w) in &weights {
        if w == 0.0 {
            continue;
        }
        for (a, b) in [(i, j), (j, i)] {
            let ia = interior_index[a];
            if ia == usize::MAX {
                continue;
            }
            diag[ia] += w;
            let ib = interior_index[b];
            if ib == usize::MAX {
                rhs[(ia, 0)] += w * uv[b].x;
                rhs[(ia, 1)] += w * uv[b].y;
            } else {
                coo.push(ia, ib, -w);
            }
        }
    }
    for (i, &d) in diag.iter().enumerate() {
        if d <= 0.0 {
            return Err(Error::Numeric(format!("interior vertex {} has no positive Laplacian weight", interior[i])));
        }
        coo.push(i, i, d);
    }
    let csc = CscMatrix::from(&coo);
    let chol = CscCholesky::factor(&csc)
        .map_err(|e| Error::Numeric(format!("singular Laplacian (disconnected interior?): {e:?}")))?;
    let sol = chol.solve(&rhs);

    let residual = &csc * &sol - &rhs;
    let scale = rhs.amax().max(1.0);
    if residual.amax() > 1e-10 * scale {
        return Err(Error::Numeric(format!("Laplace solve residual {:e} too large", residual.amax())));
    }
    for (k, &v) in interior.iter().enumerate() {
        uv[v] = Point2::new(sol[(k, 0)], sol[(k, 1)]);
    }

    let mut scales = Vec::with_capacity(mesh.triangles.len());
    let mean_area_2d = std::f64::consts::PI / mesh.triangles.len() as f64;
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let a2 = signed_area_2d(&uv[tri[0]], &uv[tri[1]], &uv[tri[2]]);
        if !(a2 > 1e-12 * mean_area_2d) {
            return Err(Error::Numeric(format!("triangle {t} is degenerate or flipped after mapping (area {a2:e})")));
        }
        scales.push((mesh.triangle_area(t) / a2).sqrt());
    }
    Ok(FlatMap { uv, scale: scales })
}

/// A surface together with its flat map and a point locator on the chart.
#[derive(Debug, Clone)]
pub struct SurfaceChart {
    pub mesh: SurfaceMesh,
    pub flat: FlatMap,
    locator: TriangleLocator,
}

impl SurfaceChart {
    pub fn new(mesh: SurfaceMesh, flat: FlatMap) -> Result<Self> {
        if flat.uv.len() != mesh.vertices.len() || flat.scale.len() != mesh.triangles.len() {
            return Err(Error::Mesh("flat map does not match surface".into()));
        }
        let locator = TriangleLocator::new(&flat.uv, &mesh.triangles);
        Ok(SurfaceChart { mesh, flat, locator })
    }

    pub fn flatten(mesh: SurfaceMesh) -> Result<Self> {
        let flat = harmonic_flatten(&mesh)?;
        Self::new(mesh, flat)
    }

    pub fn locate(&self, u: &Point2) -> Option<(usize, [f64; 3])> {
        self.locator.locate(&self.flat.uv, &self.mesh.triangles, u, 1e-12)
    }

    /// 3D point and triangle id under chart point `u`.
    pub fn to_surface(&self, u: &Point2) -> Option<(Point3, usize)> {
        let (t, w) = self.locate(u)?;
        let [a, b, c] = self.mesh.triangles[t];
        let v = &self.mesh.vertices;
        Some((v[a] * w[0] + v[b] * w[1] + v[c] * w[2], t))
    }

    pub fn scale_at(&self, u: &Point2) -> Option<f64> {
        self.locate(u).map(|(t, _)| self.flat.scale[t])
    }
}

/// Maps a chart point back onto the surface by barycentric interpolation in
/// the containing triangle.
pub fn map_to_surface(fm: &FlatMap, mesh: &SurfaceMesh, u: &Point2) -> Result<(Point3, usize)> {
    let chart = SurfaceChart::new(mesh.clone(), fm.clone())?;
    chart
        .to_surface(u)
        .ok_or_else(|| Error::Locate(format!("chart point ({}, {}) lies outside the mapped surface", u.x, u.y)))
}
