//! Fractal Purkinje trees grown in the flat chart of an endocardial surface.

mod grow;
mod nearest;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{Point2, Point3};

pub use grow::{clip_to_domain, grow_tree, Termination};
pub use nearest::{closest_point_gradient, PointGrid, PointTag};

/// Constants shared by every branch of the fractal part of a tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeGrowthConfig {
    /// Branch length in mm.
    pub branch_length: f64,
    pub segments_per_branch: usize,
    pub repulsion: f64,
    /// Branching angle in rad.
    pub branch_angle: f64,
    pub generations: usize,
    pub root_uv: [f64; 2],
    pub initial_direction_uv: [f64; 2],
}

impl Default for TreeGrowthConfig {
    fn default() -> Self {
        TreeGrowthConfig {
            branch_length: 8.0,
            segments_per_branch: 8,
            repulsion: 0.1,
            branch_angle: 0.15,
            generations: 20,
            root_uv: [0.0, 0.0],
            initial_direction_uv: [1.0, 0.0],
        }
    }
}

impl TreeGrowthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.branch_length > 0.0) {
            return Err(Error::Config("branch length must be positive".into()));
        }
        if self.segments_per_branch == 0 {
            return Err(Error::Config("segments per branch must be at least 1".into()));
        }
        if !(self.repulsion >= 0.0) {
            return Err(Error::Config("repulsion must be non-negative".into()));
        }
        let r = Point2::from(self.root_uv);
        if !(r.norm() < 1.0) {
            return Err(Error::Growth(format!("root ({}, {}) lies outside the unit disk", r.x, r.y)));
        }
        if !(Point2::from(self.initial_direction_uv).norm() > 0.0) {
            return Err(Error::Config("initial direction must be non-zero".into()));
        }
        Ok(())
    }

    pub fn segment_length(&self) -> f64 {
        self.branch_length / self.segments_per_branch as f64
    }
}

/// Per-ventricle geometric parameters: initial (bundle) length, and length
/// and angle of the two fascicles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VentricleParams {
    pub initial_length: f64,
    pub fascicle_lengths: [f64; 2],
    /// Signed angles relative to the bundle's last direction, counter-clockwise
    /// positive in the chart.
    pub fascicle_angles: [f64; 2],
}

/// Polyline tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PurkinjeTree {
    pub nodes: Vec<[f64; 3]>,
    pub uv: Vec<[f64; 2]>,
    pub edges: Vec<[usize; 2]>,
    /// 3D length of each edge, mm.
    #[serde(default)]
    pub lengths: Vec<f64>,
    pub root: usize,
    pub pmjs: Vec<usize>,
    #[serde(default)]
    pub branch_points: Vec<usize>,
}

impl PurkinjeTree {
    pub(crate) fn from_parts(nodes: Vec<Point3>, uv: Vec<Point2>, edges: Vec<[usize; 2]>) -> Self {
        let lengths = edges.iter().map(|&[a, b]| (nodes[a] - nodes[b]).norm()).collect();
        let mut degree = vec![0usize; nodes.len()];
        for &[a, b] in &edges {
            degree[a] += 1;
            degree[b] += 1;
        }
        let pmjs = (1..nodes.len()).filter(|&i| degree[i] == 1).collect();
        let branch_points = (0..nodes.len()).filter(|&i| degree[i] == 3).collect();
        PurkinjeTree {
            nodes: nodes.iter().map(|p| [p.x, p.y, p.z]).collect(),
            uv: uv.iter().map(|p| [p.x, p.y]).collect(),
            edges,
            lengths,
            root: 0,
            pmjs,
            branch_points,
        }
    }

    pub fn node(&self, i: usize) -> Point3 {
        Point3::from(self.nodes[i])
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn total_length(&self) -> f64 {
        self.lengths.iter().sum()
    }

    pub fn adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for (&[a, b], &l) in self.edges.iter().zip(&self.lengths) {
            adj[a].push((b, l));
            adj[b].push((a, l));
        }
        adj
    }

    /// Checks the tree invariants: |E| = |V| - 1, connected, PMJs are leaves,
    /// branch points have degree 3, positive edge lengths.
    pub fn validate(&self) -> Result<()> {
        let n = self.nodes.len();
        if n == 0 || self.root >= n {
            return Err(Error::Growth("empty tree or invalid root".into()));
        }
        if self.edges.len() + 1 != n || self.lengths.len() != self.edges.len() || self.uv.len() != n {
            return Err(Error::Growth(format!("{} nodes but {} edges", n, self.edges.len())));
        }
        if let Some(i) = self.lengths.iter().position(|&l| !(l > 0.0)) {
            return Err(Error::Growth(format!("edge {i} has non-positive length")));
        }
        let adj = self.adjacency();
        let mut seen = vec![false; n];
        let mut stack = vec![self.root];
        seen[self.root] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &(w, _) in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    stack.push(w);
                }
            }
        }
        if count != n {
            return Err(Error::Growth("tree is not connected".into()));
        }
        for &p in &self.pmjs {
            if adj[p].len() != 1 {
                return Err(Error::Growth(format!("PMJ {p} has degree {}", adj[p].len())));
            }
        }
        for &b in &self.branch_points {
            if adj[b].len() != 3 {
                return Err(Error::Growth(format!("branch point {b} has degree {}", adj[b].len())));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut tree: PurkinjeTree = serde_json::from_str(text)?;
        if tree.lengths.is_empty() {
            tree.lengths = tree.edges.iter().map(|&[a, b]| (tree.node(a) - tree.node(b)).norm()).collect();
        }
        if tree.branch_points.is_empty() {
            let adj = tree.adjacency();
            tree.branch_points = (0..tree.nodes.len()).filter(|&i| adj[i].len() == 3).collect();
        }
        tree.validate()?;
        Ok(tree)
    }

    /// Polyline OBJ (`v` and `l` records) for viewers.
    pub fn to_obj(&self) -> String {
        let mut out = String::new();
        for p in &self.nodes {
            let _ = writeln!(out, "v {} {} {}", p[0], p[1], p[2]);
        }
        for e in &self.edges {
            let _ = writeln!(out, "l {} {}", e[0] + 1, e[1] + 1);
        }
        out
    }
}
