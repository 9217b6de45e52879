//! Polyhedral discs as geodesic target spaces. Distances are shortest paths
//! in a graph of vertices, evenly spaced edge points and face centroids,
//! joined by straight segments inside each triangle.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::majorization::{cat0_certificate, PolyhedralDisc, DEFAULT_TOL_ANGLE};
use crate::shortest::WeightedGraph;
use crate::target::TargetSpace;

const ON_EDGE_TOL: f64 = 1e-12;

/// Relative allowance of a path certified to be a local geodesic in a
/// certified CAT(0) disc, where local geodesics are shortest.
const EXACT_ALLOWANCE: f64 = 1e-9;
/// Largest turning angle accepted at an edge crossing of a straight path.
const STRAIGHT_TOL: f64 = 1e-7;

/// Triangles around a vertex in cyclic order, each with the edge through
/// which the walk enters it and the angle accumulated before it.
#[derive(Clone, Debug)]
struct Fan {
    steps: Vec<(usize, usize, f64)>,
    total: f64,
    closed: bool,
}

impl Fan {
    fn build(disc: &PolyhedralDisc, v: usize, tris: &[usize], edge_tris: &[Vec<usize>]) -> Option<Fan> {
        if tris.is_empty() {
            return None;
        }
        let at_v = |t: usize| -> (usize, usize, usize) {
            let tri = &disc.triangles[t];
            let i = tri.vertices.iter().position(|&x| x == v).unwrap();
            (i, tri.edges[(i + 2) % 3], tri.edges[i])
        };
        let mut start = (tris[0], at_v(tris[0]).1);
        let mut closed = true;
        for &t in tris {
            let (_, e1, e2) = at_v(t);
            for e in [e1, e2] {
                if edge_tris[e].len() > 2 {
                    return None;
                }
                if edge_tris[e].len() == 1 {
                    closed = false;
                    start = (t, e);
                }
            }
        }
        let mut steps = Vec::new();
        let (mut t, mut entry) = start;
        let mut offset = 0.0;
        loop {
            let (i, e1, e2) = at_v(t);
            steps.push((t, entry, offset));
            offset += disc.triangles[t].shape.angle(i);
            let exit = if entry == e1 { e2 } else { e1 };
            let next = edge_tris[exit].iter().find(|&&x| x != t);
            match next {
                Some(&n) if n != start.0 => {
                    t = n;
                    entry = exit;
                }
                _ => break,
            }
            if steps.len() > tris.len() {
                return None;
            }
        }
        if steps.len() != tris.len() {
            return None;
        }
        Some(Fan {
            steps,
            total: offset,
            closed,
        })
    }

    /// Angular position around `v` of a point of triangle `t`.
    fn angle_of(&self, target: &PolyhedralTarget, v: usize, w: &SurfacePoint, t: usize) -> Option<f64> {
        let &(_, entry, offset) = self.steps.iter().find(|s| s.0 == t)?;
        let ends = target.disc.edges[entry].ends;
        let other = if ends[0] == v { ends[1] } else { ends[0] };
        let tri = &target.disc.triangles[t];
        let cv = tri.shape.corners[tri.vertices.iter().position(|&x| x == v)?];
        let cx = tri.shape.corners[tri.vertices.iter().position(|&x| x == other)?];
        let pw = target.point_pos(w, t);
        let rx = [cx[0] - cv[0], cx[1] - cv[1]];
        let rw = [pw[0] - cv[0], pw[1] - cv[1]];
        let cross = rx[0] * rw[1] - rx[1] * rw[0];
        let dot = rx[0] * rw[0] + rx[1] * rw[1];
        Some(offset + cross.abs().atan2(dot))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SurfacePoint {
    Vertex(usize),
    /// Point at fraction `s` from `ends[0]` to `ends[1]` of an edge.
    OnEdge { edge: usize, s: f64 },
    /// Barycentric coordinates with respect to the triangle's corners.
    OnTriangle { tri: usize, bary: [f64; 3] },
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum NodeLoc {
    Vertex(usize),
    Edge { edge: usize, s: f64 },
    Centroid(usize),
}

#[derive(Clone, Copy, Debug)]
enum Direction {
    Edge(usize),
    Inside { tri: usize, sides: [(usize, f64); 2] },
}

#[derive(Clone, Copy, PartialEq, PartialOrd)]
struct OrdF(f64);
impl Eq for OrdF {}
impl Ord for OrdF {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Carrier {
    Tri(usize),
    Segment(usize),
}

/// A distance together with its declared approximation allowance: the
/// computed value is the length of an actual path, and the true distance is
/// claimed to be no smaller than `length - allowance`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Measured {
    pub length: f64,
    pub allowance: f64,
}

#[derive(Clone, Debug)]
enum Leg {
    Tri { tri: usize, from: [f64; 2], to: [f64; 2] },
    Segment { edge: usize, from: f64, to: f64 },
    Still(SurfacePoint),
}

/// Polyline realizing a computed distance.
#[derive(Clone, Debug)]
pub struct SurfacePath {
    legs: Vec<(Leg, f64)>,
    pub length: f64,
    pub allowance: f64,
    /// Certified local geodesic in a certified CAT(0) disc.
    pub exact: bool,
}

fn lerp(a: [f64; 2], b: [f64; 2], t: f64) -> [f64; 2] {
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
}

fn planar_dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

#[derive(Clone, Debug)]
pub struct PolyhedralTarget {
    disc: PolyhedralDisc,
    steiner: usize,
    spacing: f64,
    graph: WeightedGraph,
    nodes: Vec<NodeLoc>,
    node_carriers: Vec<Vec<Carrier>>,
    tri_nodes: Vec<Vec<usize>>,
    /// Nodes along each edge in order from `ends[0]` to `ends[1]`.
    edge_nodes: Vec<Vec<usize>>,
    segment: Vec<bool>,
    vertex_carriers: Vec<Vec<Carrier>>,
    edge_tris: Vec<Vec<usize>>,
    fans: Vec<Option<Fan>>,
    cat0: bool,
}

impl PolyhedralTarget {
    /// `steiner` evenly spaced points are placed on every edge.
    pub fn new(disc: PolyhedralDisc, steiner: usize) -> Self {
        let nv = disc.vertex_count;
        let ne = disc.edges.len();
        let mut nodes: Vec<NodeLoc> = (0..nv).map(NodeLoc::Vertex).collect();
        let mut edge_nodes = Vec::with_capacity(ne);
        for (e, edge) in disc.edges.iter().enumerate() {
            let mut along = vec![edge.ends[0]];
            for j in 1..=steiner {
                along.push(nodes.len());
                nodes.push(NodeLoc::Edge {
                    edge: e,
                    s: j as f64 / (steiner + 1) as f64,
                });
            }
            along.push(edge.ends[1]);
            edge_nodes.push(along);
        }
        let mut edge_tris = vec![Vec::new(); ne];
        for (t, tri) in disc.triangles.iter().enumerate() {
            for &e in &tri.edges {
                edge_tris[e].push(t);
            }
        }
        let segment: Vec<bool> = edge_tris.iter().map(Vec::is_empty).collect();
        let mut tri_nodes = Vec::with_capacity(disc.triangles.len());
        for (t, tri) in disc.triangles.iter().enumerate() {
            let mut list: Vec<usize> = tri.vertices.to_vec();
            for &e in &tri.edges {
                let along = &edge_nodes[e];
                list.extend_from_slice(&along[1..along.len() - 1]);
            }
            list.push(nodes.len());
            nodes.push(NodeLoc::Centroid(t));
            tri_nodes.push(list);
        }
        let mut vertex_carriers = vec![Vec::new(); nv];
        for (t, tri) in disc.triangles.iter().enumerate() {
            for &v in &tri.vertices {
                vertex_carriers[v].push(Carrier::Tri(t));
            }
        }
        for (e, edge) in disc.edges.iter().enumerate() {
            if segment[e] {
                for &v in &edge.ends {
                    vertex_carriers[v].push(Carrier::Segment(e));
                }
            }
        }
        let node_carriers: Vec<Vec<Carrier>> = nodes
            .iter()
            .map(|loc| match *loc {
                NodeLoc::Vertex(v) => vertex_carriers[v].clone(),
                NodeLoc::Edge { edge, .. } => {
                    if segment[edge] {
                        vec![Carrier::Segment(edge)]
                    } else {
                        edge_tris[edge].iter().map(|&t| Carrier::Tri(t)).collect()
                    }
                }
                NodeLoc::Centroid(t) => vec![Carrier::Tri(t)],
            })
            .collect();
        let mut vertex_tris = vec![Vec::new(); nv];
        for (t, tri) in disc.triangles.iter().enumerate() {
            for &v in &tri.vertices {
                vertex_tris[v].push(t);
            }
        }
        let fans = (0..nv)
            .map(|v| {
                if vertex_carriers[v].iter().any(|c| matches!(c, Carrier::Segment(_))) {
                    None
                } else {
                    Fan::build(&disc, v, &vertex_tris[v], &edge_tris)
                }
            })
            .collect();
        let cat0 = cat0_certificate(&disc, DEFAULT_TOL_ANGLE).pass;
        let mut target = PolyhedralTarget {
            fans,
            cat0,
            spacing: disc
                .edges
                .iter()
                .map(|e| e.length / (steiner + 1) as f64)
                .fold(0.0, f64::max),
            disc,
            steiner,
            graph: WeightedGraph::new(nodes.len()),
            nodes,
            node_carriers,
            tri_nodes,
            edge_nodes,
            segment,
            vertex_carriers,
            edge_tris,
        };
        let mut graph = WeightedGraph::new(target.nodes.len());
        for (t, list) in target.tri_nodes.iter().enumerate() {
            let pos: Vec<[f64; 2]> = list.iter().map(|&n| target.node_pos(n, t)).collect();
            let sides: Vec<u8> = list.iter().map(|&n| target.side_mask(n, t)).collect();
            for i in 0..list.len() {
                for j in (i + 1)..list.len() {
                    // pairs on a common side are joined through the edge chain
                    if sides[i] & sides[j] != 0 {
                        continue;
                    }
                    graph.add_edge(list[i], list[j], planar_dist(pos[i], pos[j]));
                }
            }
        }
        for (e, along) in target.edge_nodes.iter().enumerate() {
            let step = target.disc.edges[e].length / (steiner + 1) as f64;
            for w in along.windows(2) {
                graph.add_edge(w[0], w[1], step);
            }
        }
        target.graph = graph;
        target
    }

    /// The disc passed its CAT(0) certificate at construction.
    pub fn is_cat0(&self) -> bool {
        self.cat0
    }

    pub fn disc(&self) -> &PolyhedralDisc {
        &self.disc
    }

    pub fn steiner(&self) -> usize {
        self.steiner
    }

    /// Largest gap between consecutive nodes on an edge.
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node_point(&self, node: usize) -> SurfacePoint {
        match self.nodes[node] {
            NodeLoc::Vertex(v) => SurfacePoint::Vertex(v),
            NodeLoc::Edge { edge, s } => SurfacePoint::OnEdge { edge, s },
            NodeLoc::Centroid(tri) => SurfacePoint::OnTriangle {
                tri,
                bary: [1.0 / 3.0; 3],
            },
        }
    }

    /// Bit `i` is set when the node lies on side `i` of the triangle.
    fn side_mask(&self, node: usize, tri: usize) -> u8 {
        let t = &self.disc.triangles[tri];
        match self.nodes[node] {
            NodeLoc::Vertex(v) => {
                let i = self.corner_of(tri, v).expect("vertex on triangle");
                (1 << i) | (1 << ((i + 2) % 3))
            }
            NodeLoc::Edge { edge, .. } => 1 << t.edges.iter().position(|&e| e == edge).expect("edge on triangle"),
            NodeLoc::Centroid(_) => 0,
        }
    }

    fn corner_of(&self, tri: usize, v: usize) -> Option<usize> {
        self.disc.triangles[tri].vertices.iter().position(|&x| x == v)
    }

    fn edge_pos(&self, tri: usize, edge: usize, s: f64) -> [f64; 2] {
        let t = &self.disc.triangles[tri];
        let i = t.edges.iter().position(|&e| e == edge).expect("edge on triangle");
        let (a, b) = (t.shape.corners[i], t.shape.corners[(i + 1) % 3]);
        if t.vertices[i] == self.disc.edges[edge].ends[0] {
            lerp(a, b, s)
        } else {
            lerp(a, b, 1.0 - s)
        }
    }

    fn node_pos(&self, node: usize, tri: usize) -> [f64; 2] {
        let t = &self.disc.triangles[tri];
        match self.nodes[node] {
            NodeLoc::Vertex(v) => t.shape.corners[self.corner_of(tri, v).expect("vertex on triangle")],
            NodeLoc::Edge { edge, s } => self.edge_pos(tri, edge, s),
            NodeLoc::Centroid(_) => {
                let c = t.shape.corners;
                [(c[0][0] + c[1][0] + c[2][0]) / 3.0, (c[0][1] + c[1][1] + c[2][1]) / 3.0]
            }
        }
    }

    /// Position along a segment edge, as a fraction from `ends[0]`.
    fn node_s(&self, node: usize, edge: usize) -> f64 {
        match self.nodes[node] {
            NodeLoc::Vertex(v) => {
                if self.disc.edges[edge].ends[0] == v {
                    0.0
                } else {
                    1.0
                }
            }
            NodeLoc::Edge { s, .. } => s,
            NodeLoc::Centroid(_) => unreachable!("centroids are not on segments"),
        }
    }

    /// Rewrites triangle points lying on a side as edge points, and edge
    /// points at an end as vertices.
    pub fn normalize(&self, p: &SurfacePoint) -> SurfacePoint {
        match *p {
            SurfacePoint::OnTriangle { tri, bary } => {
                let t = &self.disc.triangles[tri];
                for i in 0..3 {
                    if bary[i] >= 1.0 - ON_EDGE_TOL {
                        return SurfacePoint::Vertex(t.vertices[i]);
                    }
                }
                for i in 0..3 {
                    if bary[i] <= ON_EDGE_TOL {
                        // opposite side runs from corner i+1 to corner i+2
                        let side = (i + 1) % 3;
                        let edge = t.edges[side];
                        let from = t.vertices[side];
                        let frac = bary[(i + 2) % 3] / (bary[side] + bary[(i + 2) % 3]);
                        let s = if self.disc.edges[edge].ends[0] == from { frac } else { 1.0 - frac };
                        return self.normalize(&SurfacePoint::OnEdge { edge, s });
                    }
                }
                *p
            }
            SurfacePoint::OnEdge { edge, s } => {
                let ends = self.disc.edges[edge].ends;
                if s <= ON_EDGE_TOL {
                    SurfacePoint::Vertex(ends[0])
                } else if s >= 1.0 - ON_EDGE_TOL {
                    SurfacePoint::Vertex(ends[1])
                } else {
                    *p
                }
            }
            SurfacePoint::Vertex(_) => *p,
        }
    }

    fn carriers(&self, p: &SurfacePoint) -> Vec<Carrier> {
        match *p {
            SurfacePoint::Vertex(v) => self.vertex_carriers[v].clone(),
            SurfacePoint::OnEdge { edge, .. } => {
                if self.segment[edge] {
                    vec![Carrier::Segment(edge)]
                } else {
                    self.edge_tris[edge].iter().map(|&t| Carrier::Tri(t)).collect()
                }
            }
            SurfacePoint::OnTriangle { tri, .. } => vec![Carrier::Tri(tri)],
        }
    }

    fn point_pos(&self, p: &SurfacePoint, tri: usize) -> [f64; 2] {
        let t = &self.disc.triangles[tri];
        match *p {
            SurfacePoint::Vertex(v) => t.shape.corners[self.corner_of(tri, v).expect("vertex on triangle")],
            SurfacePoint::OnEdge { edge, s } => self.edge_pos(tri, edge, s),
            SurfacePoint::OnTriangle { bary, .. } => {
                let c = t.shape.corners;
                [
                    bary[0] * c[0][0] + bary[1] * c[1][0] + bary[2] * c[2][0],
                    bary[0] * c[0][1] + bary[1] * c[1][1] + bary[2] * c[2][1],
                ]
            }
        }
    }

    fn point_s(&self, p: &SurfacePoint, edge: usize) -> f64 {
        match *p {
            SurfacePoint::Vertex(v) => {
                if self.disc.edges[edge].ends[0] == v {
                    0.0
                } else {
                    1.0
                }
            }
            SurfacePoint::OnEdge { s, .. } => s,
            SurfacePoint::OnTriangle { .. } => unreachable!("triangle points are not on segments"),
        }
    }

    fn carrier_nodes(&self, c: Carrier) -> &[usize] {
        match c {
            Carrier::Tri(t) => &self.tri_nodes[t],
            Carrier::Segment(e) => &self.edge_nodes[e],
        }
    }

    /// Distance inside one carrier between a point and a node.
    fn local_to_node(&self, p: &SurfacePoint, c: Carrier, node: usize) -> f64 {
        match c {
            Carrier::Tri(t) => planar_dist(self.point_pos(p, t), self.node_pos(node, t)),
            Carrier::Segment(e) => {
                (self.point_s(p, e) - self.node_s(node, e)).abs() * self.disc.edges[e].length
            }
        }
    }

    fn local_points(&self, p: &SurfacePoint, q: &SurfacePoint, c: Carrier) -> f64 {
        match c {
            Carrier::Tri(t) => planar_dist(self.point_pos(p, t), self.point_pos(q, t)),
            Carrier::Segment(e) => (self.point_s(p, e) - self.point_s(q, e)).abs() * self.disc.edges[e].length,
        }
    }

    fn leg_points(&self, p: &SurfacePoint, q: &SurfacePoint, c: Carrier) -> Leg {
        match c {
            Carrier::Tri(t) => Leg::Tri {
                tri: t,
                from: self.point_pos(p, t),
                to: self.point_pos(q, t),
            },
            Carrier::Segment(e) => Leg::Segment {
                edge: e,
                from: self.point_s(p, e),
                to: self.point_s(q, e),
            },
        }
    }

    fn common_carrier(&self, a: usize, b: usize) -> Carrier {
        let ca = &self.node_carriers[a];
        *ca.iter()
            .find(|c| self.node_carriers[b].contains(c))
            .expect("graph neighbours share a carrier")
    }

    fn seeds(&self, p: &SurfacePoint) -> (Vec<(usize, f64)>, Vec<Carrier>) {
        let carriers = self.carriers(p);
        let mut seeds = Vec::new();
        for &c in &carriers {
            for &n in self.carrier_nodes(c) {
                seeds.push((n, self.local_to_node(p, c, n)));
            }
        }
        (seeds, carriers)
    }

    /// Distances from a point to every graph node.
    pub fn distances_from(&self, p: &SurfacePoint) -> Vec<f64> {
        let p = self.normalize(p);
        let (seeds, _) = self.seeds(&p);
        self.graph.dijkstra_seeded(&seeds).0
    }

    fn allowance(&self, crossings: usize) -> f64 {
        self.spacing * (crossings + 1) as f64
    }

    pub fn measure(&self, p: &SurfacePoint, q: &SurfacePoint) -> Measured {
        let path = self.geodesic(p, q);
        Measured {
            length: path.length,
            allowance: path.allowance,
        }
    }

    /// Shortest path found between two points.
    pub fn geodesic(&self, p: &SurfacePoint, q: &SurfacePoint) -> SurfacePath {
        let p = self.normalize(p);
        let q = self.normalize(q);
        if p == q {
            return SurfacePath {
                legs: vec![(Leg::Still(p), 0.0)],
                length: 0.0,
                allowance: 0.0,
                exact: true,
            };
        }
        let (seeds, p_carriers) = self.seeds(&p);
        let (dist, parent) = self.graph.dijkstra_seeded(&seeds);
        let q_carriers = self.carriers(&q);
        // best: (length, end node or None for a direct leg, carrier at q)
        let mut best: (f64, Option<usize>, Carrier) = (f64::INFINITY, None, q_carriers[0]);
        for &c in &q_carriers {
            if p_carriers.contains(&c) {
                let d = self.local_points(&p, &q, c);
                if d < best.0 {
                    best = (d, None, c);
                }
            }
            for &n in self.carrier_nodes(c) {
                let d = dist[n] + self.local_to_node(&q, c, n);
                if d < best.0 {
                    best = (d, Some(n), c);
                }
            }
        }
        let (_, end, qc) = best;
        let mut way = vec![p];
        let mut carriers = Vec::new();
        if let Some(end) = end {
            let nodes = crate::shortest::trace_path(&parent, end);
            let start = nodes[0];
            // seed carrier: the one of p's carriers that realizes the seed value
            let pc = *p_carriers
                .iter()
                .filter(|&&c| self.carrier_nodes(c).contains(&start))
                .min_by(|&&a, &&b| {
                    self.local_to_node(&p, a, start)
                        .total_cmp(&self.local_to_node(&p, b, start))
                })
                .expect("seed lies on a carrier of p");
            carriers.push(pc);
            way.push(self.node_point(start));
            for w in nodes.windows(2) {
                carriers.push(self.common_carrier(w[0], w[1]));
                way.push(self.node_point(w[1]));
            }
        }
        carriers.push(qc);
        way.push(q);
        self.straighten(way, carriers)
    }

    /// Shortens a waypoint path inside its sequence of carriers: drops
    /// waypoints whose two legs share a carrier and slides edge crossings to
    /// the straight position in the unfolding of the two adjacent triangles.
    fn straighten(&self, mut way: Vec<SurfacePoint>, mut carriers: Vec<Carrier>) -> SurfacePath {
        let mut releases = 0;
        loop {
            self.relax_crossings(&mut way, &mut carriers);
            if releases >= 64 || !self.release_vertex(&mut way, &mut carriers) {
                break;
            }
            releases += 1;
        }
        let mut legs = Vec::with_capacity(carriers.len());
        let mut length = 0.0;
        for (k, &c) in carriers.iter().enumerate() {
            let d = self.local_points(&way[k], &way[k + 1], c);
            length += d;
            legs.push((self.leg_points(&way[k], &way[k + 1], c), d));
        }
        let crossings = way[1..way.len() - 1]
            .iter()
            .filter(|w| matches!(w, SurfacePoint::OnEdge { .. }))
            .count();
        let exact = self.cat0 && self.locally_straight(&way, &carriers);
        SurfacePath {
            legs,
            length,
            exact,
            allowance: if exact {
                EXACT_ALLOWANCE * (1.0 + length)
            } else {
                self.allowance(crossings)
            },
        }
    }

    fn relax_crossings(&self, way: &mut Vec<SurfacePoint>, carriers: &mut Vec<Carrier>) {
        for sweep in 0..1000 {
            let mut i = 1;
            while i + 1 < way.len() {
                if matches!((way[i], way[i + 1]), (SurfacePoint::Vertex(a), SurfacePoint::Vertex(b)) if a == b)
                    && i + 2 < way.len()
                {
                    // repeated vertex: drop the zero-length leg between the copies
                    way.remove(i + 1);
                    carriers.remove(i);
                } else if carriers[i - 1] == carriers[i] {
                    way.remove(i);
                    carriers.remove(i);
                } else {
                    i += 1;
                }
            }
            if sweep == 0 {
                self.unfold_runs(way, carriers);
            }
            let mut moved: f64 = 0.0;
            for i in 1..way.len() - 1 {
                let SurfacePoint::OnEdge { edge, s } = way[i] else {
                    continue;
                };
                let (Carrier::Tri(ta), Carrier::Tri(tb)) = (carriers[i - 1], carriers[i]) else {
                    continue;
                };
                let ns = self.crossing(&way[i - 1], ta, &way[i + 1], tb, edge, s);
                moved = moved.max((ns - s).abs() * self.disc.edges[edge].length);
                way[i] = if ns <= 0.0 {
                    SurfacePoint::Vertex(self.disc.edges[edge].ends[0])
                } else if ns >= 1.0 {
                    SurfacePoint::Vertex(self.disc.edges[edge].ends[1])
                } else {
                    SurfacePoint::OnEdge { edge, s: ns }
                };
            }
            if moved < 1e-15 {
                break;
            }
        }
    }

    /// Places each maximal run of edge crossings between two fixed waypoints
    /// on the straight line of the unfolded triangle chain, when that line
    /// stays inside every crossed edge.
    fn unfold_runs(&self, way: &mut [SurfacePoint], carriers: &[Carrier]) {
        let mut a = 0;
        while a + 1 < way.len() {
            let mut b = a + 1;
            while b + 1 < way.len() && matches!(way[b], SurfacePoint::OnEdge { .. }) {
                b += 1;
            }
            if b > a + 1 {
                if let Some(ss) = self.unfold_chain(&way[a..=b], &carriers[a..b]) {
                    for (k, s) in ss.into_iter().enumerate() {
                        if let SurfacePoint::OnEdge { edge, .. } = way[a + 1 + k] {
                            way[a + 1 + k] = SurfacePoint::OnEdge { edge, s };
                        }
                    }
                }
            }
            a = b;
        }
    }

    fn unfold_chain(&self, way: &[SurfacePoint], carriers: &[Carrier]) -> Option<Vec<f64>> {
        let tris: Vec<usize> = carriers
            .iter()
            .map(|c| match *c {
                Carrier::Tri(t) => Some(t),
                Carrier::Segment(_) => None,
            })
            .collect::<Option<_>>()?;
        let cross = |e: [f64; 2], w: [f64; 2]| e[0] * w[1] - e[1] * w[0];
        let sub = |x: [f64; 2], y: [f64; 2]| [x[0] - y[0], x[1] - y[1]];
        // corners of each triangle in the frame of the first one
        let mut placed: Vec<[[f64; 2]; 3]> = vec![self.disc.triangles[tris[0]].shape.corners];
        let mut edges = Vec::with_capacity(way.len() - 2);
        for j in 1..tris.len() {
            let SurfacePoint::OnEdge { edge, .. } = way[j] else {
                return None;
            };
            let prev = &self.disc.triangles[tris[j - 1]];
            let cur = &self.disc.triangles[tris[j]];
            let ip = prev.edges.iter().position(|&e| e == edge)?;
            let ic = cur.edges.iter().position(|&e| e == edge)?;
            let ends = self.disc.edges[edge].ends;
            // common-frame positions of the edge ends and the previous apex
            let pos_prev = |v: usize| placed[j - 1][prev.vertices.iter().position(|&x| x == v).unwrap()];
            let (u1, v1) = (pos_prev(ends[0]), pos_prev(ends[1]));
            let apex_prev = placed[j - 1][(ip + 2) % 3];
            let e1 = sub(v1, u1);
            let len2 = e1[0] * e1[0] + e1[1] * e1[1];
            if len2 <= 0.0 {
                return None;
            }
            let side = -cross(e1, sub(apex_prev, u1)).signum();
            let cur_pos = |v: usize| cur.shape.corners[cur.vertices.iter().position(|&x| x == v).unwrap()];
            let (u0, v0) = (cur_pos(ends[0]), cur_pos(ends[1]));
            let e0 = sub(v0, u0);
            let mut out = [[0.0; 2]; 3];
            for (k, c) in cur.shape.corners.iter().enumerate() {
                let r = sub(*c, u0);
                let along = (e0[0] * r[0] + e0[1] * r[1]) / len2;
                let h = side * cross(e0, r).abs() / len2;
                out[k] = [u1[0] + along * e1[0] - h * e1[1], u1[1] + along * e1[1] + h * e1[0]];
            }
            let _ = ic;
            placed.push(out);
            edges.push((edge, u1, v1));
        }
        let start = self.point_pos(&way[0], tris[0]);
        let last = *tris.last().unwrap();
        let bary = self.bary_of(last, self.point_pos(&way[way.len() - 1], last));
        let pl = placed.last().unwrap();
        let end = [
            bary[0] * pl[0][0] + bary[1] * pl[1][0] + bary[2] * pl[2][0],
            bary[0] * pl[0][1] + bary[1] * pl[1][1] + bary[2] * pl[2][1],
        ];
        let d = sub(end, start);
        let mut out = Vec::with_capacity(edges.len());
        for (_, u, v) in edges {
            let e = sub(v, u);
            let denom = cross(d, e);
            if denom.abs() < 1e-300 {
                return None;
            }
            // start + t d = u + s e
            let s = cross(d, sub(u, start)) / -denom;
            if !(s > 0.0 && s < 1.0) {
                return None;
            }
            out.push(s);
        }
        Some(out)
    }

    /// Finds a vertex waypoint passed with less than `pi` on one side and
    /// replaces it by crossings of the edges on that side, close to the
    /// vertex. Returns whether anything changed.
    fn release_vertex(&self, way: &mut Vec<SurfacePoint>, carriers: &mut Vec<Carrier>) -> bool {
        for i in 1..way.len() - 1 {
            let SurfacePoint::Vertex(v) = way[i] else {
                continue;
            };
            let (Carrier::Tri(ta), Carrier::Tri(tb)) = (carriers[i - 1], carriers[i]) else {
                continue;
            };
            let Some(fan) = &self.fans[v] else {
                continue;
            };
            let (Some(x), Some(y)) = (fan.angle_of(self, v, &way[i - 1], ta), fan.angle_of(self, v, &way[i + 1], tb)) else {
                continue;
            };
            let n = fan.steps.len();
            let ia = fan.steps.iter().position(|st| st.0 == ta).unwrap();
            let ib = fan.steps.iter().position(|st| st.0 == tb).unwrap();
            let direct = (y - x).abs();
            let forward = y >= x;
            // walk through increasing steps when going forward
            let around = if fan.closed { fan.total - direct } else { f64::INFINITY };
            let up = if !fan.closed {
                // an open fan cannot be walked around its gap
                if direct >= PI - 1e-9 {
                    continue;
                }
                ib > ia
            } else if direct <= around && direct < PI - 1e-9 {
                forward
            } else if around < direct && around < PI - 1e-9 {
                !forward
            } else {
                continue;
            };
            let mut new_way = Vec::new();
            let mut new_carriers = vec![Carrier::Tri(ta)];
            let mut j = ia;
            while j != ib {
                let next = if up { (j + 1) % n } else { (j + n - 1) % n };
                // the edge shared by steps j and next is the entry of the later one
                let shared = if up { fan.steps[next].1 } else { fan.steps[j].1 };
                let e = &self.disc.edges[shared];
                let eta = 1e-6;
                let s = if e.ends[0] == v { eta } else { 1.0 - eta };
                new_way.push(SurfacePoint::OnEdge { edge: shared, s });
                new_carriers.push(Carrier::Tri(fan.steps[next].0));
                j = next;
            }
            if new_way.is_empty() {
                continue;
            }
            way.splice(i..=i, new_way);
            carriers.splice(i - 1..=i, new_carriers);
            return true;
        }
        false
    }

    /// `a` and `b` in coordinates along the shared edge of `ta` and `tb`
    /// (in units of the edge, `b` unfolded onto the far side from `ta`):
    /// `(a1, h1, a2, h2)`, or `None` for a zero-length edge.
    fn unfolded_pair(
        &self,
        a: &SurfacePoint,
        ta: usize,
        b: &SurfacePoint,
        tb: usize,
        edge: usize,
    ) -> Option<(f64, f64, f64, f64)> {
        let (ua, va) = (self.edge_pos(ta, edge, 0.0), self.edge_pos(ta, edge, 1.0));
        let (ub, vb) = (self.edge_pos(tb, edge, 0.0), self.edge_pos(tb, edge, 1.0));
        let ea = [va[0] - ua[0], va[1] - ua[1]];
        let eb = [vb[0] - ub[0], vb[1] - ub[1]];
        let len2 = ea[0] * ea[0] + ea[1] * ea[1];
        if len2 <= 0.0 {
            return None;
        }
        let cross = |e: [f64; 2], w: [f64; 2]| e[0] * w[1] - e[1] * w[0];
        let dot = |e: [f64; 2], w: [f64; 2]| e[0] * w[0] + e[1] * w[1];
        let pa = self.point_pos(a, ta);
        let pb = self.point_pos(b, tb);
        let ra = [pa[0] - ua[0], pa[1] - ua[1]];
        let rb = [pb[0] - ub[0], pb[1] - ub[1]];
        let (a1, h1) = (dot(ea, ra) / len2, cross(ea, ra) / len2);
        let (a2, h2) = (dot(eb, rb) / len2, cross(eb, rb) / len2);
        let third = self.disc.triangles[ta]
            .edges
            .iter()
            .position(|&e| e == edge)
            .map(|i| self.disc.triangles[ta].shape.corners[(i + 2) % 3])
            .expect("edge on triangle");
        let side_a = cross(ea, [third[0] - ua[0], third[1] - ua[1]]).signum();
        Some((a1, side_a * h1.abs(), a2, -side_a * h2.abs()))
    }

    /// Fraction along `edge` minimizing the length of the two legs through
    /// triangles `ta` (towards `a`) and `tb` (towards `b`).
    fn crossing(&self, a: &SurfacePoint, ta: usize, b: &SurfacePoint, tb: usize, edge: usize, s: f64) -> f64 {
        let Some((a1, h1, a2, h2)) = self.unfolded_pair(a, ta, b, tb, edge) else {
            return s;
        };
        let t = if (h1 - h2).abs() > 1e-300 {
            a1 + (a2 - a1) * h1 / (h1 - h2)
        } else {
            s.clamp(a1.min(a2), a1.max(a2))
        };
        t.clamp(0.0, 1.0)
    }

    /// Turning angle of the path `a -> (edge at s) -> b` in the unfolding.
    fn turn_at_crossing(&self, a: &SurfacePoint, ta: usize, b: &SurfacePoint, tb: usize, edge: usize, s: f64) -> f64 {
        let Some((a1, h1, a2, h2)) = self.unfolded_pair(a, ta, b, tb, edge) else {
            return 0.0;
        };
        let (d1, d2) = ([s - a1, -h1], [a2 - s, h2]);
        let cross = d1[0] * d2[1] - d1[1] * d2[0];
        let dot = d1[0] * d2[0] + d1[1] * d2[1];
        if cross == 0.0 && dot == 0.0 {
            return 0.0;
        }
        cross.atan2(dot).abs()
    }

    /// Every crossing strictly inside its edge and every vertex passed with
    /// at least `pi` on each side.
    /// Direction at `v` of a leg towards `w`: an edge at `v`, or a point of
    /// a triangle's corner at `v` given as (edge, angle from it) pairs for
    /// both sides of the corner.
    fn direction_at(&self, v: usize, w: &SurfacePoint, c: Carrier) -> Direction {
        match c {
            Carrier::Segment(e) => Direction::Edge(e),
            Carrier::Tri(t) => {
                let tri = &self.disc.triangles[t];
                let i = self.corner_of(t, v).expect("vertex on triangle");
                let (e1, e2) = (tri.edges[(i + 2) % 3], tri.edges[i]);
                let cv = tri.shape.corners[i];
                let c1 = tri.shape.corners[(i + 2) % 3];
                let pw = self.point_pos(w, t);
                let r1 = [c1[0] - cv[0], c1[1] - cv[1]];
                let rw = [pw[0] - cv[0], pw[1] - cv[1]];
                let cross = r1[0] * rw[1] - r1[1] * rw[0];
                let dot = r1[0] * rw[0] + r1[1] * rw[1];
                let x = cross.abs().atan2(dot).min(tri.shape.angle(i));
                Direction::Inside { tri: t, sides: [(e1, x), (e2, tri.shape.angle(i) - x)] }
            }
        }
    }

    /// Angle between two directions at `v`: distance in the link of `v`,
    /// infinite between different link components.
    fn link_distance(&self, v: usize, a: Direction, b: Direction) -> f64 {
        if let (Direction::Inside { tri: ta, sides: sa }, Direction::Inside { tri: tb, sides: sb }) = (a, b) {
            if ta == tb {
                return (sa[0].1 - sb[0].1).abs();
            }
        }
        let starts = match a {
            Direction::Edge(e) => vec![(e, 0.0)],
            Direction::Inside { sides, .. } => sides.to_vec(),
        };
        let ends = match b {
            Direction::Edge(e) => vec![(e, 0.0)],
            Direction::Inside { sides, .. } => sides.to_vec(),
        };
        // link graph: edges at v joined by the corners of triangles at v
        let mut dist: BTreeMap<usize, f64> = BTreeMap::new();
        let mut heap = BinaryHeap::new();
        for &(e, d) in &starts {
            if dist.get(&e).is_none_or(|&x| d < x) {
                dist.insert(e, d);
                heap.push((Reverse(OrdF(d)), e));
            }
        }
        while let Some((Reverse(OrdF(d)), e)) = heap.pop() {
            if d > dist[&e] || d >= PI {
                continue;
            }
            for &t in &self.edge_tris[e] {
                let tri = &self.disc.triangles[t];
                let Some(i) = self.corner_of(t, v) else { continue };
                let (e1, e2) = (tri.edges[(i + 2) % 3], tri.edges[i]);
                let next = if e1 == e { e2 } else { e1 };
                let nd = d + tri.shape.angle(i);
                if dist.get(&next).is_none_or(|&x| nd < x) {
                    dist.insert(next, nd);
                    heap.push((Reverse(OrdF(nd)), next));
                }
            }
        }
        ends.iter()
            .filter_map(|&(e, d)| dist.get(&e).map(|x| x + d))
            .fold(f64::INFINITY, f64::min)
    }

    fn locally_straight(&self, way: &[SurfacePoint], carriers: &[Carrier]) -> bool {
        for i in 1..way.len() - 1 {
            match way[i] {
                SurfacePoint::OnEdge { edge, s } => {
                    if s <= ON_EDGE_TOL || s >= 1.0 - ON_EDGE_TOL {
                        return false;
                    }
                    if let (Carrier::Tri(ta), Carrier::Tri(tb)) = (carriers[i - 1], carriers[i]) {
                        if self.turn_at_crossing(&way[i - 1], ta, &way[i + 1], tb, edge, s) > STRAIGHT_TOL {
                            return false;
                        }
                    }
                }
                SurfacePoint::Vertex(v) => {
                    let a = self.direction_at(v, &way[i - 1], carriers[i - 1]);
                    let b = self.direction_at(v, &way[i + 1], carriers[i]);
                    if self.link_distance(v, a, b) < PI - 1e-9 {
                        return false;
                    }
                }
                SurfacePoint::OnTriangle { .. } => {}
            }
        }
        true
    }

    /// Barycentric coordinates of a planar point of a triangle. Degenerate
    /// triangles are handled by projecting onto their longest side.
    pub fn bary_of(&self, tri: usize, p: [f64; 2]) -> [f64; 3] {
        let t = &self.disc.triangles[tri];
        let [a, b, c] = t.shape.corners;
        let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        let scale = t.shape.sides.iter().cloned().fold(0.0, f64::max).max(1e-300);
        if det.abs() > 1e-12 * scale * scale {
            let l1 = ((p[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (p[1] - a[1])) / det;
            let l2 = ((b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1])) / det;
            return [1.0 - l1 - l2, l1, l2];
        }
        // longest side: opposite the corner with the largest side index
        let i = (0..3)
            .max_by(|&x, &y| t.shape.sides[x].total_cmp(&t.shape.sides[y]))
            .unwrap();
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        let (pj, pk) = (t.shape.corners[j], t.shape.corners[k]);
        let len2 = (pk[0] - pj[0]).powi(2) + (pk[1] - pj[1]).powi(2);
        let f = if len2 > 0.0 {
            (((p[0] - pj[0]) * (pk[0] - pj[0]) + (p[1] - pj[1]) * (pk[1] - pj[1])) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let mut bary = [0.0; 3];
        bary[j] = 1.0 - f;
        bary[k] = f;
        bary
    }

    /// Point at fraction `t` of the arclength of a computed path.
    pub fn path_point(&self, path: &SurfacePath, t: f64) -> SurfacePoint {
        let mut left = t.clamp(0.0, 1.0) * path.length;
        let last = path.legs.len() - 1;
        for (k, (leg, len)) in path.legs.iter().enumerate() {
            if left <= *len || k == last {
                let f = if *len > 0.0 { (left / len).min(1.0) } else { 0.0 };
                let p = match *leg {
                    Leg::Tri { tri, from, to } => SurfacePoint::OnTriangle {
                        tri,
                        bary: self.bary_of(tri, lerp(from, to, f)),
                    },
                    Leg::Segment { edge, from, to } => SurfacePoint::OnEdge {
                        edge,
                        s: from + f * (to - from),
                    },
                    Leg::Still(p) => p,
                };
                return self.normalize(&p);
            }
            left -= len;
        }
        unreachable!("paths have at least one leg")
    }

    /// Planar coordinates of a point inside a triangle containing it.
    pub fn planar_in(&self, p: &SurfacePoint, tri: usize) -> [f64; 2] {
        self.point_pos(&self.normalize(p), tri)
    }
}

impl TargetSpace for PolyhedralTarget {
    type Point = SurfacePoint;

    fn distance(&self, p: &SurfacePoint, q: &SurfacePoint) -> f64 {
        self.measure(p, q).length
    }

    fn geodesic_eval(&self, p: &SurfacePoint, q: &SurfacePoint, t: f64) -> SurfacePoint {
        let path = self.geodesic(p, q);
        self.path_point(&path, t)
    }

    fn contains(&self, p: &SurfacePoint) -> bool {
        match *p {
            SurfacePoint::Vertex(v) => v < self.disc.vertex_count,
            SurfacePoint::OnEdge { edge, s } => edge < self.disc.edges.len() && (0.0..=1.0).contains(&s),
            SurfacePoint::OnTriangle { tri, bary } => {
                tri < self.disc.triangles.len()
                    && bary.iter().all(|&b| b >= -1e-12)
                    && (bary.iter().sum::<f64>() - 1.0).abs() <= 1e-9
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::majorization::{cone_disc, PolyhedralDisc};

    fn square() -> PolyhedralDisc {
        // unit square split along the diagonal 0-2
        let pos = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        PolyhedralDisc::from_triangles(4, &[[0, 1, 2], [0, 2, 3]], |a, b| planar_dist(pos[a], pos[b]))
            .unwrap()
    }

    #[test]
    fn two_face_unfolding() {
        let w = square();
        let t = PolyhedralTarget::new(w, 8);
        let p = SurfacePoint::OnTriangle { tri: 0, bary: [0.2, 0.7, 0.1] };
        let q = SurfacePoint::OnTriangle { tri: 1, bary: [0.3, 0.1, 0.6] };
        let pp = t.planar_in(&p, 0);
        let qq = t.planar_in(&q, 1);
        // both triangles share the frame of the square only up to a rigid
        // motion; recover the square coordinates from barycentrics instead
        let sq = |tri: usize, b: [f64; 3]| -> [f64; 2] {
            let ids = t.disc().triangles[tri].vertices;
            let pos = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
            [
                (0..3).map(|i| b[i] * pos[ids[i]][0]).sum(),
                (0..3).map(|i| b[i] * pos[ids[i]][1]).sum(),
            ]
        };
        let exact = planar_dist(sq(0, [0.2, 0.7, 0.1]), sq(1, [0.3, 0.1, 0.6]));
        let m = t.measure(&p, &q);
        assert!(m.length >= exact - 1e-12);
        assert!(m.length - exact <= m.allowance);
        let _ = (pp, qq);
    }

    #[test]
    fn geodesic_endpoints_and_length() {
        let t = PolyhedralTarget::new(cone_disc(8, 2.5 * std::f64::consts::PI), 6);
        let p = SurfacePoint::OnTriangle { tri: 1, bary: [0.1, 0.6, 0.3] };
        let q = SurfacePoint::OnTriangle { tri: 5, bary: [0.2, 0.2, 0.6] };
        let path = t.geodesic(&p, &q);
        let start = t.path_point(&path, 0.0);
        let end = t.path_point(&path, 1.0);
        assert!(t.distance(&start, &p) < 1e-9);
        assert!(t.distance(&end, &q) < 1e-9);
        // the midpoint splits the length in halves up to the allowance
        let mid = t.path_point(&path, 0.5);
        let (a, b) = (t.distance(&p, &mid), t.distance(&mid, &q));
        assert!((a + b - path.length).abs() <= 2.0 * path.allowance);
    }

    #[test]
    fn segment_edges_are_one_dimensional() {
        // a triangle with a dangling edge 2-3 of length 2
        let mut w = PolyhedralDisc::from_triangles(3, &[[0, 1, 2]], |_, _| 1.0).unwrap();
        w.vertex_count = 4;
        w.edges.push(crate::majorization::DiscEdge { ends: [2, 3], length: 2.0 });
        w.angle_sums.push(0.0);
        w.interior.push(false);
        let t = PolyhedralTarget::new(w, 3);
        let d = t.distance(&SurfacePoint::Vertex(0), &SurfacePoint::Vertex(3));
        assert!((d - 3.0).abs() < 1e-12);
        let half = SurfacePoint::OnEdge { edge: 3, s: 0.25 };
        assert!((t.distance(&SurfacePoint::Vertex(3), &half) - 1.5).abs() < 1e-12);
    }
}
