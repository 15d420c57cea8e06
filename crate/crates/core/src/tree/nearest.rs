use crate::mesh::Point2;

/// Identifies a tree point by the branch that produced it and its position
/// along that branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PointTag {
    pub branch: u32,
    pub index: u32,
}

/// Uniform bucket grid over the chart for nearest-point queries.
#[derive(Debug, Clone)]
pub struct PointGrid {
    lo: Point2,
    cell: f64,
    n: usize,
    buckets: Vec<Vec<u32>>,
    points: Vec<Point2>,
    tags: Vec<PointTag>,
}

impl PointGrid {
    /// Grid over the square `[-extent, extent]^2` with the given cell size.
    pub fn new(extent: f64, cell: f64) -> Self {
        let n = ((2.0 * extent / cell).ceil() as usize).clamp(1, 4096);
        let cell = 2.0 * extent / n as f64;
        PointGrid {
            lo: Point2::new(-extent, -extent),
            cell,
            n,
            buckets: vec![Vec::new(); n * n],
            points: Vec::new(),
            tags: Vec::new(),
        }
    }

    fn cell_of(&self, p: &Point2) -> (i64, i64) {
        let i = ((p.x - self.lo.x) / self.cell).floor() as i64;
        let j = ((p.y - self.lo.y) / self.cell).floor() as i64;
        let max = self.n as i64 - 1;
        (i.clamp(0, max), j.clamp(0, max))
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn insert(&mut self, p: Point2, tag: PointTag) {
        let (i, j) = self.cell_of(&p);
        let id = self.points.len() as u32;
        self.points.push(p);
        self.tags.push(tag);
        self.buckets[j as usize * self.n + i as usize].push(id);
    }

    pub fn point(&self, id: usize) -> Point2 {
        self.points[id]
    }

    /// Nearest stored point to `x` for which `skip` is false, as
    /// (point id, distance).
    pub fn nearest(&self, x: &Point2, skip: impl Fn(PointTag) -> bool) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let (ci, cj) = self.cell_of(x);
        let n = self.n as i64;
        let mut best: Option<(usize, f64)> = None;
        for r in 0..=n {
            let (i0, i1, j0, j1) = (ci - r, ci + r, cj - r, cj + r);
            for j in j0.max(0)..=j1.min(n - 1) {
                let on_edge_row = j == j0 || j == j1;
                let mut i = i0.max(0);
                while i <= i1.min(n - 1) {
                    if on_edge_row || i == i0 || i == i1 {
                        for &id in &self.buckets[j as usize * self.n + i as usize] {
                            let id = id as usize;
                            if skip(self.tags[id]) {
                                continue;
                            }
                            let d = (self.points[id] - x).norm();
                            if best.map_or(true, |(bid, bd)| d < bd || (d == bd && id < bid)) {
                                best = Some((id, d));
                            }
                        }
                        i += 1;
                    } else {
                        // interior of the ring was covered by earlier rings
                        i = i1;
                    }
                }
            }
            if let Some((_, bd)) = best {
                // Every unvisited cell is at least r cells away from x.
                if bd <= r as f64 * self.cell {
                    break;
                }
            }
            if i0 <= 0 && j0 <= 0 && i1 >= n - 1 && j1 >= n - 1 {
                break;
            }
        }
        best
    }

    /// True if some stored point lies strictly closer than `radius` to `x`.
    pub fn any_within(&self, x: &Point2, radius: f64) -> bool {
        let lo = self.cell_of(&(x - Point2::repeat(radius)));
        let hi = self.cell_of(&(x + Point2::repeat(radius)));
        for j in lo.1..=hi.1 {
            for i in lo.0..=hi.0 {
                for &id in &self.buckets[j as usize * self.n + i as usize] {
                    if (self.points[id as usize] - x).norm() < radius {
                        return true;
                    }
                }
            }
        }
        false
    }
}

/// Gradient of the distance to the closest accumulated point, i.e. the unit
/// vector pointing away from it. Zero when no eligible point exists or when
/// `x` coincides with it (closer than 1e-12).
pub fn closest_point_gradient(grid: &PointGrid, x: &Point2, skip: impl Fn(PointTag) -> bool) -> Point2 {
    match grid.nearest(x, skip) {
        Some((id, d)) if d >= 1e-12 => (x - grid.point(id)) / d,
        _ => Point2::zeros(),
    }
}
