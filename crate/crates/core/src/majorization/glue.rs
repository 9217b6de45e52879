//! Gluing the bounded faces of a planar graph in Euclidean space into a
//! disc retract of comparison triangles.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{DiscEdge, MajorizationError, PolyhedralDisc, GLUE_TOL};
use crate::graphmin::{contract_short_edges, dart_tail, face_cycles, GraphInTarget, COINCIDE_TOL};
use crate::mesh::dist;
use crate::surface::SurfacePoint;

#[derive(Debug, Error, PartialEq)]
pub enum GlueError {
    #[error(transparent)]
    Graph(#[from] crate::graphmin::GraphError),
    #[error(transparent)]
    Triangle(#[from] MajorizationError),
    #[error("glued complex has Euler characteristic {0}, expected 1")]
    Euler(i64),
    #[error("edge {edge}: glued side {side} differs from its length {length}")]
    Length { edge: usize, side: f64, length: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GluedDisc {
    pub disc: PolyhedralDisc,
    /// Disc vertex of each graph vertex.
    pub vertex_of: Vec<usize>,
    /// Image of each disc vertex.
    pub points: Vec<Vec<f64>>,
    /// Graph edge behind each disc edge; `None` for fan diagonals.
    pub source_edge: Vec<Option<usize>>,
}

impl GluedDisc {
    /// The one-point disc sent to `image`.
    pub fn point(image: Vec<f64>) -> Self {
        GluedDisc {
            disc: PolyhedralDisc::point(),
            vertex_of: Vec::new(),
            points: vec![image],
            source_edge: Vec::new(),
        }
    }

    /// The map to the target: affine on every edge and triangle.
    pub fn image(&self, p: &SurfacePoint) -> Vec<f64> {
        match *p {
            SurfacePoint::Vertex(v) => self.points[v].clone(),
            SurfacePoint::OnEdge { edge, s } => {
                let [a, b] = self.disc.edges[edge].ends;
                lerp(&self.points[a], &self.points[b], s)
            }
            SurfacePoint::OnTriangle { tri, bary } => {
                let t = &self.disc.triangles[tri];
                let mut out = vec![0.0; self.points[0].len()];
                for (w, &v) in bary.iter().zip(&t.vertices) {
                    for (o, x) in out.iter_mut().zip(&self.points[v]) {
                        *o += w * x;
                    }
                }
                out
            }
        }
    }
}

fn lerp(a: &[f64], b: &[f64], s: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + s * (y - x)).collect()
}

/// Splits a closed vertex walk into simple cycles (as dart lists).
fn simple_cycles(walk: &[usize], tail: impl Fn(usize) -> usize) -> Vec<Vec<usize>> {
    let mut cycles = Vec::new();
    let mut stack: Vec<usize> = Vec::new();
    let mut at: BTreeMap<usize, usize> = BTreeMap::new();
    for &d in walk {
        let v = tail(d);
        if let Some(&i) = at.get(&v) {
            let cycle: Vec<usize> = stack.drain(i..).collect();
            for &c in &cycle {
                at.remove(&tail(c));
            }
            cycles.push(cycle);
        }
        at.insert(v, stack.len());
        stack.push(d);
    }
    if !stack.is_empty() {
        cycles.push(stack);
    }
    cycles
}

/// Builds the disc retract of a planar graph: zero-length edges are
/// contracted, repeated edges between the same vertices merged, every bounded
/// face split into simple cycles and each cycle fanned into comparison
/// triangles from its first vertex.
pub fn glue_disc(g: &GraphInTarget) -> Result<GluedDisc, GlueError> {
    g.validate()?;
    let c = contract_short_edges(g, COINCIDE_TOL);
    let pairs = c.edge_pairs();
    // darts of the outer face of the original graph, renamed
    let original_faces = g.faces();
    let outer_darts: Vec<usize> = g
        .outer_face(&original_faces)
        .map(|i| original_faces[i].clone())
        .unwrap_or_default();
    let mut new_id = vec![usize::MAX; g.edges.len()];
    for (k, &(orig, _)) in c.edges.iter().enumerate() {
        new_id[orig] = k;
    }
    // keep one edge per vertex pair, drop loops
    let mut keep = vec![true; pairs.len()];
    let mut seen: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (k, &[a, b]) in pairs.iter().enumerate() {
        if a == b || seen.insert((a.min(b), a.max(b)), k).is_some() {
            keep[k] = false;
        }
    }
    let kept: Vec<usize> = (0..pairs.len()).filter(|&k| keep[k]).collect();
    let mut renum = vec![usize::MAX; pairs.len()];
    for (i, &k) in kept.iter().enumerate() {
        renum[k] = i;
    }
    let edges: Vec<[usize; 2]> = kept.iter().map(|&k| pairs[k]).collect();
    let rotation: Vec<Vec<usize>> = c
        .rotation
        .iter()
        .map(|list| {
            list.iter()
                .filter(|&&d| keep[d / 2])
                .map(|&d| 2 * renum[d / 2] + d % 2)
                .collect()
        })
        .collect();
    let faces = face_cycles(&edges, &rotation);
    let outer_dart = outer_darts.iter().find_map(|&d| {
        let k = new_id[d / 2];
        (k != usize::MAX && keep[k]).then(|| 2 * renum[k] + d % 2)
    });
    let n = c.classes.len();
    let points: Vec<Vec<f64>> = c.classes.iter().map(|m| g.points[m[0]].clone()).collect();
    let mut disc_edges: Vec<DiscEdge> = edges
        .iter()
        .map(|&[a, b]| DiscEdge {
            ends: [a, b],
            length: dist(&points[a], &points[b]),
        })
        .collect();
    let mut source_edge: Vec<Option<usize>> = kept.iter().map(|&k| Some(c.edges[k].0)).collect();

    let (boundary, boundary_edges, outer_index) = match outer_dart {
        Some(d0) => {
            let i = faces.iter().position(|f| f.contains(&d0)).expect("dart on a face");
            let walk = &faces[i];
            (
                walk.iter().map(|&d| dart_tail(&edges, d)).collect(),
                walk.iter().map(|&d| d / 2).collect(),
                Some(i),
            )
        }
        // everything collapsed to a point
        None => (vec![0], Vec::new(), None),
    };
    let mut tris = Vec::new();
    for (i, face) in faces.iter().enumerate() {
        if Some(i) == outer_index {
            continue;
        }
        for cycle in simple_cycles(face, |d| dart_tail(&edges, d)) {
            if cycle.len() < 3 {
                continue;
            }
            let vs: Vec<usize> = cycle.iter().map(|&d| dart_tail(&edges, d)).collect();
            let k = vs.len();
            // fan from vs[0]; spoke j joins vs[0] and vs[j]
            let mut spoke = vec![usize::MAX; k];
            spoke[1] = cycle[0] / 2;
            spoke[k - 1] = cycle[k - 1] / 2;
            for j in 2..k - 1 {
                spoke[j] = disc_edges.len();
                disc_edges.push(DiscEdge {
                    ends: [vs[0], vs[j]],
                    length: dist(&points[vs[0]], &points[vs[j]]),
                });
                source_edge.push(None);
            }
            for j in 1..k - 1 {
                let rim = cycle[j] / 2;
                tris.push(([vs[0], vs[j], vs[j + 1]], [spoke[j], rim, spoke[j + 1]]));
            }
        }
    }
    debug_assert!(edges.iter().all(|&[a, b]| a < n && b < n));
    let disc = PolyhedralDisc::assemble(n, disc_edges, &tris, boundary, boundary_edges)?;
    let chi = disc.euler_characteristic();
    if chi != 1 {
        return Err(GlueError::Euler(chi));
    }
    for t in &disc.triangles {
        for i in 0..3 {
            let e = t.edges[i];
            let (p, q) = (t.shape.corners[i], t.shape.corners[(i + 1) % 3]);
            let side = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
            let length = disc.edges[e].length;
            if (side - length).abs() > GLUE_TOL * (1.0 + length) {
                return Err(GlueError::Length { edge: e, side, length });
            }
        }
    }
    Ok(GluedDisc {
        disc,
        vertex_of: c.class_of.clone(),
        points,
        source_edge,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphmin::{relax, samples, Tolerances};
    use crate::majorization::cat0_certificate;
    use crate::mesh::builders;

    #[test]
    fn flat_mesh_glues_to_itself() {
        let m = builders::rings(&[5, 6]);
        let g = GraphInTarget::from_mesh(&m, m.boundary_loop.clone());
        let w = glue_disc(&g).unwrap();
        assert_eq!(w.disc.triangles.len(), m.triangles.len());
        assert_eq!(w.disc.boundary.len(), 6);
        assert_eq!(w.disc.euler_characteristic(), 1);
        let cert = cat0_certificate(&w.disc, 1e-6);
        assert!(cert.pass);
    }

    #[test]
    fn star_collapses_into_triangle() {
        let g = samples::star(vec![5.0, 5.0], [[0.0, 0.0], [2.0, 0.0], [0.0, 2.0]]);
        let (out, cert) = relax(&g, Tolerances::default(), 100);
        assert!(cert.valid);
        let w = glue_disc(&out).unwrap();
        assert_eq!(w.disc.euler_characteristic(), 1);
        assert!(cat0_certificate(&w.disc, 1e-6).pass);
    }

    #[test]
    fn tree_glues_to_segments() {
        // path 0-1-2: no bounded faces at all
        let params = vec![[0.0, 0.0], [1.0, 0.0], [2.0, 1.0]];
        let edges = vec![[0, 1], [1, 2]];
        let g = GraphInTarget {
            points: vec![vec![0.0], vec![1.0], vec![3.0]],
            rotation: GraphInTarget::rotation_from_params(&params, &edges),
            edges,
            pinned: vec![0, 2],
            params: Some(params),
            outer: None,
            realizations: None,
        };
        let w = glue_disc(&g).unwrap();
        assert!(w.disc.triangles.is_empty());
        assert_eq!(w.disc.boundary_edges.len(), 4);
        assert_eq!(w.disc.segment_edges().len(), 2);
    }

    #[test]
    fn relaxed_random_graphs_glue() {
        for seed in 0..10 {
            let g = samples::random_disc_graph(seed);
            let (out, _) = relax(&g, Tolerances::default(), 20_000);
            let w = glue_disc(&out).unwrap();
            assert_eq!(w.disc.euler_characteristic(), 1, "seed {seed}");
            for v in 0..w.disc.vertex_count {
                let p = w.image(&SurfacePoint::Vertex(v));
                assert_eq!(p, w.points[v]);
            }
        }
    }
}
