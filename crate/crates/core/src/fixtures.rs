//! Synthetic anatomies: flat disk, hemisphere, cube, and a thick-walled
//! half-ellipsoid ventricle with two endocardial charts.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::ecg::Electrodes;
use crate::error::{Error, Result};
use crate::forward::{Anatomy, RootPlacement};
use crate::mesh::{tet_volume, Point2, Point3, SurfaceChart, SurfaceMesh, VolumeMesh};

/// Unit disk in the `z = 0` plane: a centre vertex and `rings` concentric
/// rings with `6k` vertices on ring `k`. The first boundary vertex sits at
/// angle 0.
pub fn disk_mesh(rings: usize) -> SurfaceMesh {
    let (pts, tris) = disk_layout(rings);
    let vertices = pts.iter().map(|p| Point3::new(p.x, p.y, 0.0)).collect();
    SurfaceMesh::new(vertices, tris).expect("disk layout is a valid surface")
}

fn disk_layout(rings: usize) -> (Vec<Point2>, Vec<[usize; 3]>) {
    assert!(rings >= 1);
    let mut pts = vec![Point2::zeros()];
    let mut starts = vec![0usize];
    for k in 1..=rings {
        starts.push(pts.len());
        let n = 6 * k;
        let r = k as f64 / rings as f64;
        for j in 0..n {
            let a = 2.0 * PI * j as f64 / n as f64;
            pts.push(Point2::new(r * a.cos(), r * a.sin()));
        }
    }
    let mut tris = Vec::new();
    for k in 1..=rings {
        let (n0, n1) = (if k == 1 { 1 } else { 6 * (k - 1) }, 6 * k);
        let inner = |i: usize| starts[k - 1] + i % n0;
        let outer = |i: usize| starts[k] + i % n1;
        let (mut i0, mut i1) = (0, 0);
        while i0 < n0 || i1 < n1 {
            let a0 = (i0 + 1) as f64 / n0 as f64;
            let a1 = (i1 + 1) as f64 / n1 as f64;
            if i1 < n1 && (i0 == n0 || a1 <= a0) {
                tris.push([inner(i0), outer(i1), outer(i1 + 1)]);
                i1 += 1;
            } else {
                if n0 > 1 {
                    tris.push([inner(i0), outer(i1), inner(i0 + 1)]);
                }
                i0 += 1;
            }
        }
    }
    make_delaunay(&pts, &mut tris);
    (pts, tris)
}

fn angle_at(o: &Point2, a: &Point2, b: &Point2) -> f64 {
    let (u, v) = (a - o, b - o);
    (u.x * v.y - u.y * v.x).abs().atan2(u.dot(&v))
}

/// Lawson flips until every interior edge has opposite angles summing to at
/// most pi, so no cotangent weight is negative.
fn make_delaunay(pts: &[Point2], tris: &mut [[usize; 3]]) {
    loop {
        let mut owner: BTreeMap<(usize, usize), (usize, usize)> = BTreeMap::new();
        for (t, tri) in tris.iter().enumerate() {
            for k in 0..3 {
                owner.insert((tri[k], tri[(k + 1) % 3]), (t, tri[(k + 2) % 3]));
            }
        }
        let flip = owner.iter().find_map(|(&(a, b), &(t1, c))| {
            let &(t2, d) = owner.get(&(b, a))?;
            let sum = angle_at(&pts[c], &pts[a], &pts[b]) + angle_at(&pts[d], &pts[b], &pts[a]);
            (sum > PI + 1e-12).then_some((a, b, c, d, t1, t2))
        });
        let Some((a, b, c, d, t1, t2)) = flip else { return };
        tris[t1] = [a, d, c];
        tris[t2] = [d, b, c];
    }
}

/// Open hemisphere of radius `radius` (rim on `z = 0`, pole at `+z`), built
/// by wrapping [`disk_mesh`] so that disk radius maps linearly to polar angle.
/// `6 rings^2` triangles.
pub fn hemisphere_mesh(rings: usize, radius: f64) -> SurfaceMesh {
    let (pts, tris) = disk_layout(rings);
    let vertices = pts
        .iter()
        .map(|p| {
            let r = p.norm();
            let phi = r * PI / 2.0;
            let theta = p.y.atan2(p.x);
            Point3::new(radius * phi.sin() * theta.cos(), radius * phi.sin() * theta.sin(), radius * phi.cos())
        })
        .collect();
    SurfaceMesh::new(vertices, tris).expect("hemisphere layout is a valid surface")
}

fn oriented(v: &[Point3], mut t: [usize; 4]) -> [usize; 4] {
    if tet_volume(&v[t[0]], &v[t[1]], &v[t[2]], &v[t[3]]) < 0.0 {
        t.swap(2, 3);
    }
    t
}

/// Cube `[0, side]^3` with `n` cells per edge, each split into six tets
/// around its main diagonal. Fibers along `x`.
pub fn cube_mesh(n: usize, side: f64) -> VolumeMesh {
    assert!(n >= 1);
    let m = n + 1;
    let id = |i: usize, j: usize, k: usize| (k * m + j) * m + i;
    let h = side / n as f64;
    let mut vertices = Vec::with_capacity(m * m * m);
    for k in 0..m {
        for j in 0..m {
            for i in 0..m {
                vertices.push(Point3::new(i as f64 * h, j as f64 * h, k as f64 * h));
            }
        }
    }
    const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut tets = Vec::with_capacity(6 * n * n * n);
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                for perm in PERMS {
                    let mut c = [i, j, k];
                    let mut t = [id(c[0], c[1], c[2]), 0, 0, 0];
                    for (s, &axis) in perm.iter().enumerate() {
                        c[axis] += 1;
                        t[s + 1] = id(c[0], c[1], c[2]);
                    }
                    tets.push(oriented(&vertices, t));
                }
            }
        }
    }
    let fibers = vec![Point3::x(); tets.len()];
    VolumeMesh::new(vertices, tets, fibers).expect("cube layout is valid")
}

/// Resolution and shape of the ventricle fixture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VentricleShape {
    /// Vertices per ring.
    pub azimuthal: usize,
    /// Rings from base to just above the apex.
    pub meridional: usize,
    /// Element layers through the wall.
    pub layers: usize,
    /// Endocardial semi-axes (equatorial, apical), mm.
    pub endo: [f64; 2],
    pub epi: [f64; 2],
    /// Fiber helix angle at endo- and epicardium, rad.
    pub helix: [f64; 2],
}

impl Default for VentricleShape {
    fn default() -> Self {
        VentricleShape {
            azimuthal: 28,
            meridional: 12,
            layers: 3,
            endo: [25.0, 65.0],
            epi: [35.0, 72.0],
            helix: [PI / 3.0, -PI / 3.0],
        }
    }
}

/// Septal azimuth, rad. The right chart is centred here on the epicardium.
const SEPTUM: f64 = 0.75 * PI;

/// Half-ellipsoid shell, base on `z = 0`, apex towards `-z`. The left chart
/// is the inner surface; the right chart is a septal band of the outer
/// surface standing in for the right-ventricular endocardium.
pub fn ventricles(shape: &VentricleShape) -> Result<Anatomy> {
    let (ni, nj, nk) = (shape.azimuthal, shape.meridional, shape.layers);
    if ni < 8 || nj < 4 || nk < 1 {
        return Err(Error::Config("ventricle fixture resolution too coarse".into()));
    }
    let per_layer = ni * nj + 1;
    let pole = ni * nj;
    let local = |j: usize, i: usize| j * ni + i % ni;
    let psi = |j: usize| 0.5 * PI * j as f64 / nj as f64;
    let phi = |i: usize| 2.0 * PI * i as f64 / ni as f64;
    let axes = |k: usize| {
        let s = k as f64 / nk as f64;
        [shape.endo[0] + s * (shape.epi[0] - shape.endo[0]), shape.endo[1] + s * (shape.epi[1] - shape.endo[1])]
    };

    let mut vertices = Vec::with_capacity(per_layer * (nk + 1));
    for k in 0..=nk {
        let [a, c] = axes(k);
        for j in 0..nj {
            for i in 0..ni {
                let (p, f) = (psi(j), phi(i));
                vertices.push(Point3::new(a * p.cos() * f.cos(), a * p.cos() * f.sin(), -c * p.sin()));
            }
        }
        vertices.push(Point3::new(0.0, 0.0, -c));
    }

    let mut tris = Vec::new();
    for j in 0..nj - 1 {
        for i in 0..ni {
            let (v00, v01, v10, v11) = (local(j, i), local(j, i + 1), local(j + 1, i), local(j + 1, i + 1));
            tris.push([v00, v10, v11]);
            tris.push([v00, v11, v01]);
        }
    }
    for i in 0..ni {
        tris.push([pole, local(nj - 1, i + 1), local(nj - 1, i)]);
    }

    let mut tets = Vec::with_capacity(tris.len() * 3 * nk);
    let mut fibers = Vec::with_capacity(tets.capacity());
    for k in 0..nk {
        let s = (k as f64 + 0.5) / nk as f64;
        let helix = shape.helix[0] + s * (shape.helix[1] - shape.helix[0]);
        let [a, c] = [0.5 * (axes(k)[0] + axes(k + 1)[0]), 0.5 * (axes(k)[1] + axes(k + 1)[1])];
        for tri in &tris {
            let mut l = *tri;
            l.sort_unstable();
            let lo = |v: usize| k * per_layer + v;
            let hi = |v: usize| (k + 1) * per_layer + v;
            let [p, q, r] = l;
            let prism = [[lo(p), lo(q), lo(r), hi(r)], [lo(p), lo(q), hi(q), hi(r)], [lo(p), hi(p), hi(q), hi(r)]];
            let centroid: Point3 = tri.iter().map(|&v| vertices[lo(v)] + vertices[hi(v)]).sum::<Point3>() / 6.0;
            let mean_psi = tri.iter().map(|&v| if v == pole { 0.5 * PI } else { psi(v / ni) }).sum::<f64>() / 3.0;
            let az = centroid.y.atan2(centroid.x);
            let circ = Point3::new(-az.sin(), az.cos(), 0.0);
            let long = Point3::new(-a * mean_psi.sin() * az.cos(), -a * mean_psi.sin() * az.sin(), -c * mean_psi.cos())
                .normalize();
            let fiber = (circ * helix.cos() + long * helix.sin()).normalize();
            for t in prism {
                tets.push(oriented(&vertices, t));
                fibers.push(fiber);
            }
        }
    }
    let mut volume = VolumeMesh::new(vertices, tets, fibers)?;

    let left = SurfaceMesh::new(volume.vertices[..per_layer].to_vec(), tris.clone())?;
    let left_ids: Vec<usize> = (0..per_layer).collect();

    // septal band of the outer surface: quarter-to-half of the circumference,
    // base to one ring short of the pole
    let half = (ni * 5 / 28).max(2);
    let centre = (SEPTUM / (2.0 * PI) * ni as f64).round() as usize;
    let cols: Vec<usize> = (centre - half..=centre + half).map(|i| i % ni).collect();
    let rows = nj - 1;
    let mut right_ids = Vec::with_capacity(rows * cols.len());
    for j in 0..rows {
        for &i in &cols {
            right_ids.push(nk * per_layer + local(j, i));
        }
    }
    let w = cols.len();
    let mut right_tris = Vec::new();
    for j in 0..rows - 1 {
        for c in 0..w - 1 {
            let (v00, v01, v10, v11) = (j * w + c, j * w + c + 1, (j + 1) * w + c, (j + 1) * w + c + 1);
            right_tris.push([v00, v11, v10]);
            right_tris.push([v00, v01, v11]);
        }
    }
    let right = SurfaceMesh::new(right_ids.iter().map(|&v| volume.vertices[v]).collect(), right_tris)?;
    volume.endocardial_ids.left = left_ids;
    volume.endocardial_ids.right = right_ids;

    let left_chart = SurfaceChart::flatten(left.clone())?;
    let right_chart = SurfaceChart::flatten(right.clone())?;
    let lv_root = local(1, centre);
    let lv_roots = root_towards(&left_chart, lv_root, pole);
    let rv_root = w / 2 + w;
    let rv_roots = root_towards(&right_chart, rv_root, (rows - 1) * w + w / 2);

    Ok(Anatomy { volume, left, right, roots: [lv_roots, rv_roots], electrodes: default_electrodes() })
}

fn root_towards(chart: &SurfaceChart, from: usize, to: usize) -> RootPlacement {
    let a = chart.flat.uv[from];
    let b = chart.flat.uv[to];
    let d = (b - a).normalize();
    RootPlacement { uv: [a.x, a.y], direction: [d.x, d.y] }
}

/// Limb electrodes well away from the heart and a precordial arc in front of
/// it, `+y` anterior, `+x` towards the patient's left.
pub fn default_electrodes() -> Electrodes {
    let chest = |deg: f64| {
        let a = deg.to_radians();
        [130.0 * a.cos(), 130.0 * a.sin(), -30.0]
    };
    Electrodes {
        ra: [-200.0, 0.0, 150.0],
        la: [200.0, 0.0, 150.0],
        ll: [60.0, 0.0, -350.0],
        v1: chest(110.0),
        v2: chest(85.0),
        v3: chest(65.0),
        v4: chest(45.0),
        v5: chest(25.0),
        v6: chest(0.0),
    }
}
