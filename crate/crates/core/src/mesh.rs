//! Triangulated parameter discs carrying a piecewise-linear map into
//! Euclidean space.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::shortest::WeightedGraph;

#[derive(Debug, Error, PartialEq)]
pub enum MeshError {
    #[error("mesh has no triangles")]
    Empty,
    #[error("triangle {tri} references vertex {index} but there are {count} vertices")]
    IndexOutOfRange {
        tri: usize,
        index: usize,
        count: usize,
    },
    #[error("triangle {0} repeats a vertex")]
    DegenerateTriangle(usize),
    #[error("vertex {0} is not used by any triangle")]
    IsolatedVertex(usize),
    #[error("edge ({0},{1}) is shared by more than two triangles")]
    NonManifoldEdge(usize, usize),
    #[error("euler characteristic is {0}, expected 1")]
    EulerCharacteristic(i64),
    #[error("boundary edges do not form a single cycle")]
    BoundaryNotCycle,
    #[error("boundary_loop does not traverse the boundary edges")]
    BoundaryLoopMismatch,
    #[error("image {index} has dimension {found}, expected {expected}")]
    ImageDimension {
        index: usize,
        found: usize,
        expected: usize,
    },
    #[error("{images} images for {vertices} vertices")]
    ImageCount { images: usize, vertices: usize },
    #[error("refinement must be at least 1")]
    BadRefinement,
}

/// A simplicial disc in the parameter plane with one image point per vertex.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MappedDisc {
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub boundary_loop: Vec<usize>,
    pub images: Vec<Vec<f64>>,
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl MappedDisc {
    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn image_dim(&self) -> usize {
        self.images.first().map_or(0, Vec::len)
    }

    /// Undirected edges with the number of incident triangles.
    fn edge_multiplicity(&self) -> BTreeMap<(usize, usize), usize> {
        let mut edges = BTreeMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                *edges.entry(key(t[k], t[(k + 1) % 3])).or_insert(0) += 1;
            }
        }
        edges
    }

    /// Sorted unique undirected edges.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.edge_multiplicity().into_keys().collect()
    }

    pub fn is_boundary_vertex(&self) -> Vec<bool> {
        let mut b = vec![false; self.vertex_count()];
        for &v in &self.boundary_loop {
            b[v] = true;
        }
        b
    }

    pub fn validate(&self) -> Result<(), MeshError> {
        let n = self.vertex_count();
        if self.triangles.is_empty() {
            return Err(MeshError::Empty);
        }
        if self.images.len() != n {
            return Err(MeshError::ImageCount {
                images: self.images.len(),
                vertices: n,
            });
        }
        let dim = self.image_dim();
        for (index, p) in self.images.iter().enumerate() {
            if p.len() != dim {
                return Err(MeshError::ImageDimension {
                    index,
                    found: p.len(),
                    expected: dim,
                });
            }
        }
        let mut used = vec![false; n];
        for (tri, t) in self.triangles.iter().enumerate() {
            for &index in t {
                if index >= n {
                    return Err(MeshError::IndexOutOfRange {
                        tri,
                        index,
                        count: n,
                    });
                }
                used[index] = true;
            }
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(MeshError::DegenerateTriangle(tri));
            }
        }
        if let Some(v) = used.iter().position(|u| !u) {
            return Err(MeshError::IsolatedVertex(v));
        }
        let mult = self.edge_multiplicity();
        if let Some((&(a, b), _)) = mult.iter().find(|(_, &m)| m > 2) {
            return Err(MeshError::NonManifoldEdge(a, b));
        }
        let chi = n as i64 - mult.len() as i64 + self.triangles.len() as i64;
        if chi != 1 {
            return Err(MeshError::EulerCharacteristic(chi));
        }
        // boundary edges must form exactly one cycle, traversed by boundary_loop
        let boundary: Vec<(usize, usize)> = mult
            .iter()
            .filter(|(_, &m)| m == 1)
            .map(|(&e, _)| e)
            .collect();
        let mut deg = HashMap::new();
        for &(a, b) in &boundary {
            *deg.entry(a).or_insert(0) += 1;
            *deg.entry(b).or_insert(0) += 1;
        }
        if deg.values().any(|&d| d != 2) || deg.len() != boundary.len() {
            return Err(MeshError::BoundaryNotCycle);
        }
        let lp = &self.boundary_loop;
        if lp.len() != boundary.len() || lp.len() < 3 {
            return Err(MeshError::BoundaryLoopMismatch);
        }
        let mut seen = std::collections::BTreeSet::new();
        for k in 0..lp.len() {
            let e = key(lp[k], lp[(k + 1) % lp.len()]);
            if mult.get(&e) != Some(&1) || !seen.insert(e) {
                return Err(MeshError::BoundaryLoopMismatch);
            }
        }
        Ok(())
    }

    /// The 1-skeleton weighted by image length of each edge.
    pub fn image_graph(&self) -> WeightedGraph {
        let mut g = WeightedGraph::new(self.vertex_count());
        for (a, b) in self.edges() {
            g.add_edge(a, b, dist(&self.images[a], &self.images[b]));
        }
        g
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.vertex_count()];
        for (a, b) in self.edges() {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }

    /// Subdivides every triangle into `r * r` similar triangles, interpolating
    /// parameter positions and images linearly. Original vertices keep their
    /// indices; new vertices follow.
    pub fn refine(&self, r: usize) -> Result<MappedDisc, MeshError> {
        if r == 0 {
            return Err(MeshError::BadRefinement);
        }
        if r == 1 {
            return Ok(self.clone());
        }
        #[derive(Hash, PartialEq, Eq)]
        enum Node {
            Edge(usize, usize, usize),
            Face(usize, usize, usize),
        }
        let mut vertices = self.vertices.clone();
        let mut images = self.images.clone();
        let mut index: HashMap<Node, usize> = HashMap::new();
        let lerp = |ws: [(usize, f64); 3], src: &[Vec<f64>]| -> Vec<f64> {
            let dim = src[ws[0].0].len();
            (0..dim)
                .map(|c| ws.iter().map(|&(v, w)| w * src[v][c]).sum())
                .collect()
        };
        let mut node_id = |t: usize, tri: [usize; 3], i: usize, j: usize| -> usize {
            // barycentric (i, j, k) / r with weights on tri[0], tri[1], tri[2]
            let k = r - i - j;
            let bary = [i, j, k];
            let nonzero: Vec<usize> = (0..3).filter(|&c| bary[c] > 0).collect();
            match nonzero.len() {
                1 => tri[nonzero[0]],
                2 => {
                    let (c0, c1) = (nonzero[0], nonzero[1]);
                    let (a, b, steps) = if tri[c0] < tri[c1] {
                        (tri[c0], tri[c1], bary[c1])
                    } else {
                        (tri[c1], tri[c0], bary[c0])
                    };
                    *index.entry(Node::Edge(a, b, steps)).or_insert_with(|| {
                        let w = steps as f64 / r as f64;
                        let ws = [(a, 1.0 - w), (b, w), (a, 0.0)];
                        let p = lerp(ws, &self.vertices.iter().map(|v| v.to_vec()).collect::<Vec<_>>());
                        vertices.push([p[0], p[1]]);
                        images.push(lerp(ws, &self.images));
                        vertices.len() - 1
                    })
                }
                _ => *index.entry(Node::Face(t, i, j)).or_insert_with(|| {
                    let ws = [
                        (tri[0], i as f64 / r as f64),
                        (tri[1], j as f64 / r as f64),
                        (tri[2], k as f64 / r as f64),
                    ];
                    let p = lerp(ws, &self.vertices.iter().map(|v| v.to_vec()).collect::<Vec<_>>());
                    vertices.push([p[0], p[1]]);
                    images.push(lerp(ws, &self.images));
                    vertices.len() - 1
                }),
            }
        };
        let mut triangles = Vec::with_capacity(self.triangles.len() * r * r);
        for (t, &tri) in self.triangles.iter().enumerate() {
            // grid over i (weight on tri[0]) and j (weight on tri[1])
            for i in 0..r {
                for j in 0..(r - i) {
                    let a = node_id(t, tri, i + 1, j);
                    let b = node_id(t, tri, i, j + 1);
                    let c = node_id(t, tri, i, j);
                    triangles.push([a, b, c]);
                    if i + j + 2 <= r {
                        let d = node_id(t, tri, i + 1, j + 1);
                        triangles.push([a, d, b]);
                    }
                }
            }
        }
        // boundary loop: walk each boundary edge through its subdivision points
        let mut boundary_loop = Vec::with_capacity(self.boundary_loop.len() * r);
        let lp = &self.boundary_loop;
        for k in 0..lp.len() {
            let (u, v) = (lp[k], lp[(k + 1) % lp.len()]);
            boundary_loop.push(u);
            for s in 1..r {
                let (a, b, steps) = if u < v { (u, v, s) } else { (v, u, r - s) };
                boundary_loop.push(index[&Node::Edge(a, b, steps)]);
            }
        }
        Ok(MappedDisc {
            vertices,
            triangles,
            boundary_loop,
            images,
        })
    }

    /// Same combinatorics, new images.
    pub fn with_images(&self, images: Vec<Vec<f64>>) -> MappedDisc {
        MappedDisc {
            images,
            ..self.clone()
        }
    }
}

/// Builders for common parameter discs.
pub mod builders {
    use super::MappedDisc;
    use std::f64::consts::PI;

    /// `nx x ny` vertex grid on `[0,1]^2`, each cell split along one diagonal.
    /// Images default to the parameter point embedded at height zero.
    pub fn grid(nx: usize, ny: usize) -> MappedDisc {
        assert!(nx >= 2 && ny >= 2);
        let id = |i: usize, j: usize| j * nx + i;
        let mut vertices = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                vertices.push([i as f64 / (nx - 1) as f64, j as f64 / (ny - 1) as f64]);
            }
        }
        let mut triangles = Vec::new();
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                triangles.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                triangles.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        let mut boundary_loop = Vec::new();
        boundary_loop.extend((0..nx).map(|i| id(i, 0)));
        boundary_loop.extend((1..ny).map(|j| id(nx - 1, j)));
        boundary_loop.extend((0..nx - 1).rev().map(|i| id(i, ny - 1)));
        boundary_loop.extend((1..ny - 1).rev().map(|j| id(0, j)));
        let images = vertices.iter().map(|v| vec![v[0], v[1], 0.0]).collect();
        MappedDisc {
            vertices,
            triangles,
            boundary_loop,
            images,
        }
    }

    /// Hexagonal patch of the equilateral lattice with `k` rings around the
    /// centre (unit edge length), mapped isometrically into the plane.
    pub fn hex_patch(k: usize) -> MappedDisc {
        assert!(k >= 1);
        let k = k as i64;
        let mut index = std::collections::HashMap::new();
        let mut vertices = Vec::new();
        let pos = |a: i64, b: i64| [a as f64 + 0.5 * b as f64, b as f64 * 3f64.sqrt() / 2.0];
        for b in -k..=k {
            for a in -k..=k {
                if (a + b).abs() <= k {
                    index.insert((a, b), vertices.len());
                    vertices.push(pos(a, b));
                }
            }
        }
        let mut triangles = Vec::new();
        for (&(a, b), &i) in &index {
            if let (Some(&j), Some(&l)) = (index.get(&(a + 1, b)), index.get(&(a, b + 1))) {
                triangles.push([i, j, l]);
            }
            if let (Some(&j), Some(&l)) = (index.get(&(a + 1, b)), index.get(&(a + 1, b - 1))) {
                triangles.push([i, l, j]);
            }
        }
        triangles.sort();
        // boundary: walk the six sides counterclockwise from (k, 0)
        let dirs = [(-1, 1), (-1, 0), (0, -1), (1, -1), (1, 0), (0, 1)];
        let mut boundary_loop = Vec::new();
        let (mut a, mut b) = (k, 0);
        for d in dirs {
            for _ in 0..k {
                boundary_loop.push(index[&(a, b)]);
                a += d.0;
                b += d.1;
            }
        }
        let images = vertices.iter().map(|v| vec![v[0], v[1]]).collect();
        MappedDisc {
            vertices,
            triangles,
            boundary_loop,
            images,
        }
    }

    /// Concentric rings around a centre vertex: ring `r` (1-based) has
    /// `counts[r-1]` vertices on the circle of radius `r`. Consecutive rings are
    /// stitched by a greedy angular sweep. The outermost ring is the boundary.
    pub fn rings(counts: &[usize]) -> MappedDisc {
        assert!(!counts.is_empty() && counts.iter().all(|&c| c >= 3));
        let mut vertices = vec![[0.0, 0.0]];
        let mut ring_ids: Vec<Vec<usize>> = Vec::new();
        for (r, &c) in counts.iter().enumerate() {
            let radius = (r + 1) as f64;
            let offset = if r % 2 == 1 { PI / c as f64 } else { 0.0 };
            let ids = (0..c)
                .map(|i| {
                    let t = 2.0 * PI * i as f64 / c as f64 + offset;
                    vertices.push([radius * t.cos(), radius * t.sin()]);
                    vertices.len() - 1
                })
                .collect();
            ring_ids.push(ids);
        }
        let mut triangles = Vec::new();
        let first = &ring_ids[0];
        for i in 0..first.len() {
            triangles.push([0, first[i], first[(i + 1) % first.len()]]);
        }
        for w in ring_ids.windows(2) {
            stitch(&vertices, &w[0], &w[1], &mut triangles);
        }
        let boundary_loop = ring_ids.last().unwrap().clone();
        let images = vertices.iter().map(|v| vec![v[0], v[1], 0.0]).collect();
        MappedDisc {
            vertices,
            triangles,
            boundary_loop,
            images,
        }
    }

    fn angle(p: [f64; 2]) -> f64 {
        let a = p[1].atan2(p[0]);
        if a < 0.0 {
            a + 2.0 * PI
        } else {
            a
        }
    }

    /// Triangulates the annulus between two counterclockwise rings.
    pub(crate) fn stitch(
        vertices: &[[f64; 2]],
        inner: &[usize],
        outer: &[usize],
        triangles: &mut Vec<[usize; 3]>,
    ) {
        let (ni, no) = (inner.len(), outer.len());
        let (mut i, mut o) = (0usize, 0usize);
        // unwrap angles so that both sequences increase from a common start
        let unwrap = |ids: &[usize], k: usize| -> f64 {
            let base = angle(vertices[ids[0]]);
            let turns = (k / ids.len()) as f64;
            let mut a = angle(vertices[ids[k % ids.len()]]) - base;
            if a < 0.0 {
                a += 2.0 * PI;
            }
            a + turns * 2.0 * PI + base
        };
        while i < ni || o < no {
            let advance_inner = if i == ni {
                false
            } else if o == no {
                true
            } else {
                unwrap(inner, i + 1) < unwrap(outer, o + 1)
            };
            if advance_inner {
                triangles.push([inner[i % ni], inner[(i + 1) % ni], outer[o % no]]);
                i += 1;
            } else {
                triangles.push([inner[i % ni], outer[(o + 1) % no], outer[o % no]]);
                o += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::builders::*;
    use super::*;

    #[test]
    fn builders_produce_valid_discs() {
        grid(5, 5).validate().unwrap();
        grid(2, 3).validate().unwrap();
        hex_patch(1).validate().unwrap();
        hex_patch(3).validate().unwrap();
        rings(&[6, 12]).validate().unwrap();
        rings(&[5, 6, 11]).validate().unwrap();
    }

    #[test]
    fn hex_patch_counts() {
        let m = hex_patch(2);
        assert_eq!(m.vertex_count(), 19);
        assert_eq!(m.triangles.len(), 24);
        assert_eq!(m.boundary_loop.len(), 12);
    }

    #[test]
    fn refinement_keeps_a_disc() {
        for r in 1..4 {
            let m = grid(3, 3).refine(r).unwrap();
            m.validate().unwrap();
            assert_eq!(m.triangles.len(), 8 * r * r);
            assert_eq!(m.vertex_count(), (2 * r + 1) * (2 * r + 1));
        }
    }

    #[test]
    fn validation_errors() {
        let mut m = grid(3, 3);
        m.triangles[0][1] = 99;
        assert!(matches!(
            m.validate(),
            Err(MeshError::IndexOutOfRange { index: 99, .. })
        ));
        let mut m = grid(3, 3);
        m.triangles.pop();
        assert!(m.validate().is_err());
        let mut m = grid(3, 3);
        m.boundary_loop.reverse();
        m.boundary_loop.swap(0, 1);
        assert_eq!(m.validate(), Err(MeshError::BoundaryLoopMismatch));
        let mut m = grid(3, 3);
        m.images[2].push(1.0);
        assert!(matches!(m.validate(), Err(MeshError::ImageDimension { .. })));
        let mut m = grid(3, 3);
        m.vertices.push([2.0, 2.0]);
        m.images.push(vec![0.0; 3]);
        assert_eq!(m.validate(), Err(MeshError::IsolatedVertex(9)));
    }
}
