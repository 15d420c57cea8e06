//! Uniform-grid point location for planar triangles and tetrahedra.

use nalgebra::Matrix3;

use super::{signed_area_2d, Point2, Point3, VolumeMesh};

/// Bins triangles of a planar triangulation by bounding box.
#[derive(Debug, Clone)]
pub struct TriangleLocator {
    lo: Point2,
    cell: f64,
    nx: usize,
    ny: usize,
    bins: Vec<Vec<u32>>,
}

impl TriangleLocator {
    pub fn new(points: &[Point2], triangles: &[[usize; 3]]) -> Self {
        let mut lo = Point2::repeat(f64::INFINITY);
        let mut hi = Point2::repeat(f64::NEG_INFINITY);
        for p in points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let extent = (hi - lo).max().max(1e-12);
        let n = ((triangles.len() as f64).sqrt().ceil() as usize).clamp(1, 1024);
        let cell = extent / n as f64;
        let nx = ((hi.x - lo.x) / cell).floor() as usize + 1;
        let ny = ((hi.y - lo.y) / cell).floor() as usize + 1;
        let mut bins = vec![Vec::new(); nx * ny];
        for (t, tri) in triangles.iter().enumerate() {
            let (mut tlo, mut thi) = (points[tri[0]], points[tri[0]]);
            for &v in &tri[1..] {
                tlo = tlo.inf(&points[v]);
                thi = thi.sup(&points[v]);
            }
            let (i0, j0) = Self::cell_of(lo, cell, nx, ny, &tlo);
            let (i1, j1) = Self::cell_of(lo, cell, nx, ny, &thi);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    bins[j * nx + i].push(t as u32);
                }
            }
        }
        TriangleLocator { lo, cell, nx, ny, bins }
    }

    fn cell_of(lo: Point2, cell: f64, nx: usize, ny: usize, p: &Point2) -> (usize, usize) {
        let i = ((p.x - lo.x) / cell).floor().clamp(0.0, (nx - 1) as f64) as usize;
        let j = ((p.y - lo.y) / cell).floor().clamp(0.0, (ny - 1) as f64) as usize;
        (i, j)
    }

    /// Containing triangle and barycentric weights, with `slack` tolerance on
    /// the weights.
    pub fn locate(&self, points: &[Point2], triangles: &[[usize; 3]], p: &Point2, slack: f64) -> Option<(usize, [f64; 3])> {
        let hi_x = self.lo.x + self.cell * self.nx as f64;
        let hi_y = self.lo.y + self.cell * self.ny as f64;
        if p.x < self.lo.x - slack || p.y < self.lo.y - slack || p.x > hi_x + slack || p.y > hi_y + slack {
            return None;
        }
        let (i, j) = Self::cell_of(self.lo, self.cell, self.nx, self.ny, p);
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for &t in &self.bins[j * self.nx + i] {
            let t = t as usize;
            let [a, b, c] = triangles[t];
            let w = barycentric_2d(&points[a], &points[b], &points[c], p);
            let worst = w[0].min(w[1]).min(w[2]);
            if worst >= -slack {
                if worst >= 0.0 {
                    return Some((t, w));
                }
                if best.map_or(true, |(_, _, bw)| worst > bw) {
                    best = Some((t, w, worst));
                }
            }
        }
        best.map(|(t, w, _)| (t, w))
    }
}

/// Barycentric weights of `p`, each computed from its own sub-triangle so a
/// point equal to a vertex yields exactly (1, 0, 0).
pub fn barycentric_2d(a: &Point2, b: &Point2, c: &Point2, p: &Point2) -> [f64; 3] {
    let area = signed_area_2d(a, b, c);
    [signed_area_2d(p, b, c) / area, signed_area_2d(a, p, c) / area, signed_area_2d(a, b, p) / area]
}

/// Bins tetrahedra by bounding box for containment queries.
#[derive(Debug, Clone)]
pub struct TetLocator {
    lo: Point3,
    cell: f64,
    dims: [usize; 3],
    bins: Vec<Vec<u32>>,
}

impl TetLocator {
    pub fn new(mesh: &VolumeMesh) -> Self {
        let (lo, hi) = mesh.bounding_box();
        let extent = hi - lo;
        let target = (mesh.tets.len() as f64).cbrt().max(1.0);
        let cell = (extent.max() / target).max(1e-9);
        let dims = [
            (extent.x / cell).floor() as usize + 1,
            (extent.y / cell).floor() as usize + 1,
            (extent.z / cell).floor() as usize + 1,
        ];
        let mut bins = vec![Vec::new(); dims[0] * dims[1] * dims[2]];
        let loc = TetLocator { lo, cell, dims, bins: Vec::new() };
        for t in 0..mesh.tets.len() {
            let pts = mesh.tet_points(t);
            let (mut tlo, mut thi) = (pts[0], pts[0]);
            for p in &pts[1..] {
                tlo = tlo.inf(p);
                thi = thi.sup(p);
            }
            let a = loc.cell_of(&tlo);
            let b = loc.cell_of(&thi);
            for k in a[2]..=b[2] {
                for j in a[1]..=b[1] {
                    for i in a[0]..=b[0] {
                        bins[(k * dims[1] + j) * dims[0] + i].push(t as u32);
                    }
                }
            }
        }
        TetLocator { bins, ..loc }
    }

    fn cell_of(&self, p: &Point3) -> [usize; 3] {
        let mut out = [0usize; 3];
        for d in 0..3 {
            let f = ((p[d] - self.lo[d]) / self.cell).floor();
            out[d] = f.clamp(0.0, (self.dims[d] - 1) as f64) as usize;
        }
        out
    }

    /// Tet containing `p` (barycentric slack `slack`), searching every bin
    /// overlapping the box of half-width `radius` around `p`. Returns the tet
    /// with the least negative barycentric weight.
    pub fn locate(&self, mesh: &VolumeMesh, p: &Point3, radius: f64, slack: f64) -> Option<(usize, [f64; 4])> {
        let a = self.cell_of(&(p - Point3::repeat(radius)));
        let b = self.cell_of(&(p + Point3::repeat(radius)));
        let mut best: Option<(usize, [f64; 4], f64)> = None;
        for k in a[2]..=b[2] {
            for j in a[1]..=b[1] {
                for i in a[0]..=b[0] {
                    for &t in &self.bins[(k * self.dims[1] + j) * self.dims[0] + i] {
                        let t = t as usize;
                        let w = barycentric_3d(&mesh.tet_points(t), p);
                        let worst = w.iter().copied().fold(f64::INFINITY, f64::min);
                        if worst >= -slack && best.as_ref().map_or(true, |(bt, _, bw)| worst > *bw || (worst == *bw && t < *bt)) {
                            best = Some((t, w, worst));
                        }
                    }
                }
            }
        }
        best.map(|(t, w, _)| (t, w))
    }

    /// Nearest mesh vertex to `p` within the bins overlapping `radius`.
    pub fn nearest_vertex(&self, mesh: &VolumeMesh, p: &Point3, radius: f64) -> Option<usize> {
        let a = self.cell_of(&(p - Point3::repeat(radius)));
        let b = self.cell_of(&(p + Point3::repeat(radius)));
        let mut best: Option<(f64, usize)> = None;
        for k in a[2]..=b[2] {
            for j in a[1]..=b[1] {
                for i in a[0]..=b[0] {
                    for &t in &self.bins[(k * self.dims[1] + j) * self.dims[0] + i] {
                        for &v in &mesh.tets[t as usize] {
                            let d = (mesh.vertices[v] - p).norm();
                            if d <= radius && best.map_or(true, |(bd, bv)| d < bd || (d == bd && v < bv)) {
                                best = Some((d, v));
                            }
                        }
                    }
                }
            }
        }
        best.map(|(_, v)| v)
    }
}

pub fn barycentric_3d(pts: &[Point3; 4], p: &Point3) -> [f64; 4] {
    let m = Matrix3::from_columns(&[pts[1] - pts[0], pts[2] - pts[0], pts[3] - pts[0]]);
    match m.lu().solve(&(p - pts[0])) {
        Some(x) => [1.0 - x.x - x.y - x.z, x.x, x.y, x.z],
        None => [f64::NAN; 4],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vertex_query_gives_unit_weight() {
        let pts = vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(0.3, 0.9)];
        let w = barycentric_2d(&pts[0], &pts[1], &pts[2], &pts[2]);
        assert_eq!(w, [0.0, 0.0, 1.0]);
    }

    #[test]
    fn locator_agrees_with_scan() {
        let mut pts = Vec::new();
        let n = 6;
        for j in 0..=n {
            for i in 0..=n {
                pts.push(Point2::new(i as f64 / n as f64, j as f64 / n as f64 + 0.05 * (i as f64).sin()));
            }
        }
        let mut tris = Vec::new();
        for j in 0..n {
            for i in 0..n {
                let a = j * (n + 1) + i;
                tris.push([a, a + 1, a + n + 2]);
                tris.push([a, a + n + 2, a + n + 1]);
            }
        }
        let loc = TriangleLocator::new(&pts, &tris);
        for k in 0..200 {
            let p = Point2::new(((k * 37) % 100) as f64 / 100.0 + 0.003, ((k * 61) % 97) as f64 / 100.0 + 0.004);
            let scan = tris.iter().position(|t| {
                let w = barycentric_2d(&pts[t[0]], &pts[t[1]], &pts[t[2]], &p);
                w.iter().all(|&x| x >= 0.0)
            });
            let got = loc.locate(&pts, &tris, &p, 0.0).map(|(t, _)| t);
            match (scan, got) {
                (Some(_), Some(t)) => {
                    let w = barycentric_2d(&pts[tris[t][0]], &pts[tris[t][1]], &pts[tris[t][2]], &p);
                    assert!(w.iter().all(|&x| x >= 0.0));
                }
                (None, None) => {}
                other => panic!("mismatch at {p:?}: {other:?}"),
            }
        }
    }
}
