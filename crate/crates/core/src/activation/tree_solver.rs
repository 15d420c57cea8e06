use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::tree::PurkinjeTree;

#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on time, ties by node id
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Multi-source Dijkstra on the tree. `cv` is in m/s (= mm/ms), edge lengths
/// in mm; unreachable nodes stay at +inf.
pub fn solve_tree(tree: &PurkinjeTree, cv: f64, sources: &[(usize, f64)]) -> Vec<f64> {
    solve_graph(&tree.adjacency(), cv, sources)
}

pub(crate) fn solve_graph(adj: &[Vec<(usize, f64)>], cv: f64, sources: &[(usize, f64)]) -> Vec<f64> {
    let mut tau = vec![f64::INFINITY; adj.len()];
    let mut heap = BinaryHeap::new();
    for &(node, t) in sources {
        if t < tau[node] {
            tau[node] = t;
            heap.push(Entry(t, node));
        }
    }
    while let Some(Entry(t, v)) = heap.pop() {
        if t > tau[v] {
            continue;
        }
        for &(w, len) in &adj[v] {
            let cand = t + len / cv;
            if cand < tau[w] {
                tau[w] = cand;
                heap.push(Entry(cand, w));
            }
        }
    }
    tau
}
