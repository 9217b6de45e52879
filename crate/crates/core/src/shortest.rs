//! Weighted adjacency lists and Dijkstra.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[derive(Clone, Debug, Default)]
pub struct WeightedGraph {
    adj: Vec<Vec<(usize, f64)>>,
}

#[derive(Copy, Clone, PartialEq)]
struct State {
    dist: f64,
    node: usize,
}

impl Eq for State {}

impl Ord for State {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance, ties broken towards the lower index
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for State {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl WeightedGraph {
    pub fn new(n: usize) -> Self {
        Self {
            adj: vec![Vec::new(); n],
        }
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn add_node(&mut self) -> usize {
        self.adj.push(Vec::new());
        self.adj.len() - 1
    }

    pub fn add_edge(&mut self, a: usize, b: usize, w: f64) {
        debug_assert!(w >= 0.0 && !w.is_nan());
        self.adj[a].push((b, w));
        self.adj[b].push((a, w));
    }

    pub fn neighbors(&self, a: usize) -> &[(usize, f64)] {
        &self.adj[a]
    }

    /// Single-source distances; unreachable nodes get `+inf`.
    pub fn dijkstra(&self, source: usize) -> Vec<f64> {
        self.dijkstra_with_parents(source).0
    }

    /// Distances plus the predecessor of each reached node.
    pub fn dijkstra_with_parents(&self, source: usize) -> (Vec<f64>, Vec<Option<usize>>) {
        self.dijkstra_seeded(&[(source, 0.0)])
    }

    /// Multi-source search where each seed node starts at the given offset.
    /// Seeds have no predecessor.
    pub fn dijkstra_seeded(&self, seeds: &[(usize, f64)]) -> (Vec<f64>, Vec<Option<usize>>) {
        let n = self.adj.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut parent = vec![None; n];
        let mut heap = BinaryHeap::new();
        for &(node, d) in seeds {
            if d < dist[node] {
                dist[node] = d;
                heap.push(State { dist: d, node });
            }
        }
        while let Some(State { dist: d, node }) = heap.pop() {
            if d > dist[node] {
                continue;
            }
            for &(next, w) in &self.adj[node] {
                let nd = d + w;
                if nd < dist[next] {
                    dist[next] = nd;
                    parent[next] = Some(node);
                    heap.push(State {
                        dist: nd,
                        node: next,
                    });
                } else if nd == dist[next] && w > 0.0 && parent[next].is_some_and(|p| node < p) {
                    // equal lengths: prefer the lower-indexed predecessor
                    parent[next] = Some(node);
                }
            }
        }
        (dist, parent)
    }
}

/// Walks predecessors back from `target`; the result starts at the source.
pub fn trace_path(parent: &[Option<usize>], target: usize) -> Vec<usize> {
    let mut path = vec![target];
    let mut cur = target;
    while let Some(p) = parent[cur] {
        path.push(p);
        cur = p;
    }
    path.reverse();
    path
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_with_diagonal() {
        let mut g = WeightedGraph::new(4);
        g.add_edge(0, 1, 1.0);
        g.add_edge(1, 2, 1.0);
        g.add_edge(2, 3, 1.0);
        g.add_edge(3, 0, 1.0);
        g.add_edge(0, 2, 1.5);
        let (d, p) = g.dijkstra_with_parents(0);
        assert_eq!(d, vec![0.0, 1.0, 1.5, 1.0]);
        assert_eq!(trace_path(&p, 2), vec![0, 2]);
    }

    #[test]
    fn unreachable_is_infinite() {
        let g = WeightedGraph::new(2);
        assert!(g.dijkstra(0)[1].is_infinite());
    }
}
