use super::nearest::{closest_point_gradient, PointGrid, PointTag};
use super::{PurkinjeTree, TreeGrowthConfig, VentricleParams};
use crate::error::{Error, Result};
use crate::mesh::{Point2, Point3, SurfaceChart};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Continue,
    LeftDomain,
}

/// Stops a branch whose next point leaves the unit disk or falls in no
/// mapped triangle.
pub fn clip_to_domain(chart: &SurfaceChart, next: &Point2) -> Termination {
    if next.norm() > 1.0 || chart.locate(next).is_none() {
        Termination::LeftDomain
    } else {
        Termination::Continue
    }
}

fn rotate(v: &Point2, angle: f64) -> Point2 {
    let (s, c) = angle.sin_cos();
    Point2::new(c * v.x - s * v.y, s * v.x + c * v.y)
}

#[derive(Debug)]
struct Branch {
    id: u32,
    /// Node ids; element 0 is the start node (the parent's tip).
    nodes: Vec<usize>,
    /// Direction of the last segment, or of the first one before growth starts.
    dir: Point2,
    segments: usize,
    segment_length: f64,
    done: usize,
    alive: bool,
}

impl Branch {
    fn tip(&self) -> usize {
        *self.nodes.last().expect("branch has a start node")
    }

    fn completed(&self) -> bool {
        self.alive && self.done == self.segments
    }
}

struct Grower<'a> {
    chart: &'a SurfaceChart,
    cfg: &'a TreeGrowthConfig,
    grid: PointGrid,
    nodes: Vec<Point3>,
    uv: Vec<Point2>,
    edges: Vec<[usize; 2]>,
    next_id: u32,
}

impl<'a> Grower<'a> {
    fn new(chart: &'a SurfaceChart, cfg: &'a TreeGrowthConfig) -> Self {
        let mut scales = chart.flat.scale.clone();
        scales.sort_by(f64::total_cmp);
        let median = scales[scales.len() / 2];
        let cell = (cfg.segment_length() / median).clamp(1e-4, 0.5);
        Grower {
            chart,
            cfg,
            grid: PointGrid::new(1.0, cell),
            nodes: Vec::new(),
            uv: Vec::new(),
            edges: Vec::new(),
            next_id: 0,
        }
    }

    fn add_node(&mut self, uv: Point2, p: Point3, tag: PointTag) -> usize {
        self.nodes.push(p);
        self.uv.push(uv);
        self.grid.insert(uv, tag);
        self.nodes.len() - 1
    }

    fn branch(&mut self, start: usize, dir: Point2, length: f64, segments: usize) -> Branch {
        let id = self.next_id;
        self.next_id += 1;
        Branch { id, nodes: vec![start], dir, segments, segment_length: length / segments as f64, done: 0, alive: true }
    }

    /// Advances all branches one segment at a time in lockstep.
    fn advance(&mut self, branches: &mut [Branch]) {
        let steps = branches.iter().map(|b| b.segments).max().unwrap_or(0);
        let window = self.cfg.segments_per_branch as u32;
        for _ in 0..steps {
            for b in branches.iter_mut() {
                if !b.alive || b.done >= b.segments {
                    continue;
                }
                let tip = b.tip();
                let x = self.uv[tip];
                let d = if b.done == 0 {
                    b.dir
                } else {
                    let len = b.nodes.len() as u32;
                    let id = b.id;
                    let grad = closest_point_gradient(&self.grid, &x, |t| t.branch == id && t.index + window >= len);
                    let v = b.dir + grad * self.cfg.repulsion;
                    let n = v.norm();
                    if n > 0.0 { v / n } else { b.dir }
                };
                let Some(scale) = self.chart.scale_at(&x) else {
                    b.alive = false;
                    continue;
                };
                let step = b.segment_length / scale;
                let next = x + d * step;
                if clip_to_domain(self.chart, &next) == Termination::LeftDomain {
                    b.alive = false;
                    continue;
                }
                if self.grid.any_within(&next, 0.1 * step) {
                    b.alive = false;
                    continue;
                }
                let Some((p, _)) = self.chart.to_surface(&next) else {
                    b.alive = false;
                    continue;
                };
                let tag = PointTag { branch: b.id, index: b.nodes.len() as u32 };
                let node = self.add_node(next, p, tag);
                self.edges.push([tip, node]);
                b.nodes.push(node);
                b.dir = d;
                b.done += 1;
            }
        }
    }
}

fn segments_for(length: f64, segment: f64) -> usize {
    ((length / segment).round() as usize).max(1)
}

/// Grows a tree in the flat chart: bundle from the root, two fascicles from
/// its end, then `generations` levels of binary branching from each
/// fascicle tip. Every step length is divided by the local chart scale so
/// that 3D segment lengths match their targets.
pub fn grow_tree(chart: &SurfaceChart, cfg: &TreeGrowthConfig, vp: &VentricleParams) -> Result<PurkinjeTree> {
    cfg.validate()?;
    if !(vp.initial_length > 0.0) || vp.fascicle_lengths.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::Config("tree lengths must be positive".into()));
    }
    let root_uv = Point2::from(cfg.root_uv);
    let (root_p, _) = chart
        .to_surface(&root_uv)
        .ok_or_else(|| Error::Growth(format!("root ({}, {}) does not map onto the surface", root_uv.x, root_uv.y)))?;
    let dir0 = Point2::from(cfg.initial_direction_uv).normalize();
    let seg = cfg.segment_length();

    let mut g = Grower::new(chart, cfg);
    let mut bundle = g.branch(usize::MAX, dir0, vp.initial_length, segments_for(vp.initial_length, seg));
    let root = g.add_node(root_uv, root_p, PointTag { branch: bundle.id, index: 0 });
    bundle.nodes[0] = root;
    g.advance(std::slice::from_mut(&mut bundle));

    let mut fascicles: Vec<Branch> = (0..2)
        .map(|k| {
            let len = vp.fascicle_lengths[k];
            g.branch(bundle.tip(), rotate(&bundle.dir, vp.fascicle_angles[k]), len, segments_for(len, seg))
        })
        .collect();
    g.advance(&mut fascicles);

    let before_fractal = g.nodes.len();
    let mut parents = fascicles;
    for generation in 1..=cfg.generations {
        let mut children = Vec::with_capacity(parents.len() * 2);
        for p in &parents {
            // fascicles always seed growth; later branches only when complete
            if generation > 1 && !p.completed() {
                continue;
            }
            for sign in [1.0, -1.0] {
                let dir = rotate(&p.dir, sign * cfg.branch_angle);
                let child = g.branch(p.tip(), dir, cfg.branch_length, cfg.segments_per_branch);
                children.push(child);
            }
        }
        if children.is_empty() {
            break;
        }
        g.advance(&mut children);
        parents = children;
    }
    if cfg.generations > 0 && g.nodes.len() == before_fractal {
        return Err(Error::Growth("all growth blocked beyond the fascicles".into()));
    }

    let tree = PurkinjeTree::from_parts(g.nodes, g.uv, g.edges);
    tree.validate()?;
    Ok(tree)
}
