//! Triangulated endocardial surfaces, tetrahedral myocardium, and the
//! harmonic flattening used to grow trees in a planar chart.

mod flatten;
mod io;
mod locate;

use std::collections::{BTreeMap, HashMap};

use nalgebra::{Matrix3, Vector2, Vector3};

use crate::error::{Error, Result};

pub use flatten::{harmonic_flatten, map_to_surface, FlatMap, SurfaceChart};
pub use io::{load_surface, load_volume, parse_obj, parse_off, parse_volume, write_obj, write_volume, SurfaceFormat};
pub use locate::{barycentric_2d, barycentric_3d, TetLocator, TriangleLocator};

pub type Point3 = Vector3<f64>;
pub type Point2 = Vector2<f64>;

pub fn triangle_area(a: &Point3, b: &Point3, c: &Point3) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

/// Signed area of a planar triangle, positive when counter-clockwise.
pub fn signed_area_2d(a: &Point2, b: &Point2, c: &Point2) -> f64 {
    0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y))
}

/// Signed volume, positive for a right-handed ordering.
pub fn tet_volume(a: &Point3, b: &Point3, c: &Point3, d: &Point3) -> f64 {
    (b - a).cross(&(c - a)).dot(&(d - a)) / 6.0
}

/// Endocardial surface with disk topology: one closed boundary loop (the
/// basal ring) and at least one interior vertex.
#[derive(Debug, Clone)]
pub struct SurfaceMesh {
    pub vertices: Vec<Point3>,
    pub triangles: Vec<[usize; 3]>,
    /// Boundary vertices in the winding order of their triangles, starting at
    /// the lowest-index boundary vertex.
    pub boundary_loop: Vec<usize>,
}

impl SurfaceMesh {
    pub fn new(vertices: Vec<Point3>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let n = vertices.len();
        if triangles.is_empty() {
            return Err(Error::Mesh("surface has no triangles".into()));
        }
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= n) {
                return Err(Error::Mesh(format!("triangle {t} references a missing vertex")));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::Mesh(format!("triangle {t} repeats a vertex")));
            }
        }

        // Directed edge -> owning triangle count.
        let mut directed: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for tri in &triangles {
            for k in 0..3 {
                let e = (tri[k], tri[(k + 1) % 3]);
                *directed.entry(e).or_default() += 1;
            }
        }
        for (&(a, b), &count) in &directed {
            if count > 1 {
                return Err(Error::Mesh(format!(
                    "edge ({a}, {b}) used twice with the same orientation (non-manifold or inconsistent winding)"
                )));
            }
        }

        let mut next: BTreeMap<usize, usize> = BTreeMap::new();
        for &(a, b) in directed.keys() {
            if !directed.contains_key(&(b, a)) && next.insert(a, b).is_some() {
                return Err(Error::Mesh(format!("vertex {a} is a non-manifold boundary vertex")));
            }
        }
        if next.is_empty() {
            return Err(Error::Mesh("no boundary loop (closed surface)".into()));
        }

        let start = *next.keys().min().expect("non-empty");
        let mut boundary_loop = vec![start];
        let mut cur = next[&start];
        while cur != start {
            if boundary_loop.len() > next.len() {
                return Err(Error::Mesh("boundary loop does not close".into()));
            }
            boundary_loop.push(cur);
            cur = *next
                .get(&cur)
                .ok_or_else(|| Error::Mesh(format!("boundary breaks at vertex {cur}")))?;
        }
        if boundary_loop.len() != next.len() {
            return Err(Error::Mesh(format!(
                "multiple boundary loops ({} boundary edges, first loop has {})",
                next.len(),
                boundary_loop.len()
            )));
        }

        let used: std::collections::HashSet<usize> = triangles.iter().flatten().copied().collect();
        if used.len() <= boundary_loop.len() {
            return Err(Error::Mesh("surface has no interior vertex".into()));
        }

        let mesh = SurfaceMesh { vertices, triangles, boundary_loop };
        if mesh.component_count() != 1 {
            return Err(Error::Mesh("surface is not connected".into()));
        }
        Ok(mesh)
    }

    fn component_count(&self) -> usize {
        let n = self.vertices.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        let mut used = vec![false; n];
        for tri in &self.triangles {
            for &v in tri {
                used[v] = true;
            }
            let r0 = find(&mut parent, tri[0]);
            for &v in &tri[1..] {
                let r = find(&mut parent, v);
                parent[r] = r0;
            }
        }
        let mut roots: Vec<usize> = (0..n).filter(|&v| used[v]).map(|v| find(&mut parent, v)).collect();
        roots.sort_unstable();
        roots.dedup();
        roots.len()
    }

    pub fn is_boundary(&self) -> Vec<bool> {
        let mut flag = vec![false; self.vertices.len()];
        for &v in &self.boundary_loop {
            flag[v] = true;
        }
        flag
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        triangle_area(&self.vertices[a], &self.vertices[b], &self.vertices[c])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Copy with every vertex multiplied by `c`.
    pub fn scaled(&self, c: f64) -> SurfaceMesh {
        SurfaceMesh {
            vertices: self.vertices.iter().map(|v| v * c).collect(),
            triangles: self.triangles.clone(),
            boundary_loop: self.boundary_loop.clone(),
        }
    }
}

/// Volume vertex ids of the left and right endocardial surface vertices.
#[derive(Debug, Clone, Default)]
pub struct EndocardialIds {
    pub left: Vec<usize>,
    pub right: Vec<usize>,
}

/// Tetrahedral myocardium with one unit fiber direction per element.
#[derive(Debug, Clone)]
pub struct VolumeMesh {
    pub vertices: Vec<Point3>,
    pub tets: Vec<[usize; 4]>,
    pub fibers: Vec<Point3>,
    pub endocardial_ids: EndocardialIds,
}

impl VolumeMesh {
    pub fn new(vertices: Vec<Point3>, tets: Vec<[usize; 4]>, fibers: Vec<Point3>) -> Result<Self> {
        if tets.len() != fibers.len() {
            return Err(Error::Mesh(format!("{} tets but {} fibers", tets.len(), fibers.len())));
        }
        let n = vertices.len();
        for (t, tet) in tets.iter().enumerate() {
            if tet.iter().any(|&v| v >= n) {
                return Err(Error::Mesh(format!("tet {t} references a missing vertex")));
            }
            let vol = tet_volume(&vertices[tet[0]], &vertices[tet[1]], &vertices[tet[2]], &vertices[tet[3]]);
            if !(vol > 0.0) {
                return Err(Error::Mesh(format!("tet {t} is not positively oriented (volume {vol:e})")));
            }
        }
        let mut unit = Vec::with_capacity(fibers.len());
        for (t, f) in fibers.iter().enumerate() {
            let norm = f.norm();
            if (norm - 1.0).abs() > 1e-6 {
                return Err(Error::Mesh(format!("fiber of tet {t} has norm {norm}")));
            }
            unit.push(f / norm);
        }
        Ok(VolumeMesh { vertices, tets, fibers: unit, endocardial_ids: EndocardialIds::default() })
    }

    pub fn tet_points(&self, t: usize) -> [Point3; 4] {
        let tet = self.tets[t];
        [self.vertices[tet[0]], self.vertices[tet[1]], self.vertices[tet[2]], self.vertices[tet[3]]]
    }

    pub fn tet_volume(&self, t: usize) -> f64 {
        let [a, b, c, d] = self.tet_points(t);
        tet_volume(&a, &b, &c, &d)
    }

    /// Gradients of the four linear shape functions of tet `t` (constant
    /// over the element).
    pub fn shape_gradients(&self, t: usize) -> [Point3; 4] {
        let [a, b, c, d] = self.tet_points(t);
        let jac = Matrix3::from_columns(&[b - a, c - a, d - a]);
        let inv_t = jac.try_inverse().expect("positive volume tet").transpose();
        let g1 = inv_t.column(0).into_owned();
        let g2 = inv_t.column(1).into_owned();
        let g3 = inv_t.column(2).into_owned();
        [-(g1 + g2 + g3), g1, g2, g3]
    }

    pub fn vertex_neighbors(&self) -> Vec<Vec<usize>> {
        let mut nb: Vec<Vec<usize>> = vec![Vec::new(); self.vertices.len()];
        for tet in &self.tets {
            for &a in tet {
                for &b in tet {
                    if a != b {
                        nb[a].push(b);
                    }
                }
            }
        }
        for list in &mut nb {
            list.sort_unstable();
            list.dedup();
        }
        nb
    }

    pub fn vertex_tets(&self) -> Vec<Vec<usize>> {
        let mut vt: Vec<Vec<usize>> = vec![Vec::new(); self.vertices.len()];
        for (t, tet) in self.tets.iter().enumerate() {
            for &v in tet {
                vt[v].push(t);
            }
        }
        vt
    }

    /// Volume vertex matching each surface vertex, by position within `tol`.
    pub fn link_surface(&self, surface: &SurfaceMesh, tol: f64) -> Result<Vec<usize>> {
        let cell = tol.max(1e-9) * 4.0;
        let key = |p: &Point3| ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64, (p.z / cell).floor() as i64);
        let mut bins: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in self.vertices.iter().enumerate() {
            bins.entry(key(p)).or_default().push(i);
        }
        surface
            .vertices
            .iter()
            .enumerate()
            .map(|(s, p)| {
                let (kx, ky, kz) = key(p);
                let mut best: Option<(f64, usize)> = None;
                for dx in -1..=1 {
                    for dy in -1..=1 {
                        for dz in -1..=1 {
                            if let Some(list) = bins.get(&(kx + dx, ky + dy, kz + dz)) {
                                for &i in list {
                                    let d = (self.vertices[i] - p).norm();
                                    if d <= tol && best.map_or(true, |(bd, _)| d < bd) {
                                        best = Some((d, i));
                                    }
                                }
                            }
                        }
                    }
                }
                best.map(|(_, i)| i)
                    .ok_or_else(|| Error::Mesh(format!("surface vertex {s} has no volume vertex within {tol} mm")))
            })
            .collect()
    }

    pub fn bounding_box(&self) -> (Point3, Point3) {
        let mut lo = Point3::repeat(f64::INFINITY);
        let mut hi = Point3::repeat(f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        (lo, hi)
    }
}
