//! Comparison triangles, majorants of faces, and polyhedral discs glued
//! from them.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::surface::{PolyhedralTarget, SurfacePoint};
use crate::target::{angle_from_sides, TargetSpace};
use crate::unionfind::DisjointSet;

pub mod glue;
pub use glue::{glue_disc, GluedDisc, GlueError};

pub const DEFAULT_TOL_ANGLE: f64 = 1e-6;
pub const GLUE_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum MajorizationError {
    #[error("sides ({0}, {1}, {2}) violate the triangle inequality")]
    TriangleInequality(f64, f64, f64),
    #[error("negative or non-finite side length {0}")]
    BadSide(f64),
    #[error("polygon needs at least 3 corners, got {0}")]
    ShortPolygon(usize),
    #[error("edge {edge} has length {found} but {expected} was glued to it")]
    GlueMismatch {
        edge: usize,
        expected: f64,
        found: f64,
    },
    #[error("boundary of the triangle set is not a single cycle")]
    BoundaryNotCycle,
    #[error("triangle {0} references an unknown vertex or edge")]
    BadIndex(usize),
}

/// Planar triangle with prescribed side lengths. `sides[0]` is opposite
/// corner 0 (between corners 1 and 2), and so on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTriangle {
    pub sides: [f64; 3],
    pub corners: [[f64; 2]; 3],
    pub degenerate: bool,
}

pub fn comparison_triangle(a: f64, b: f64, c: f64) -> Result<ComparisonTriangle, MajorizationError> {
    for s in [a, b, c] {
        if !(s.is_finite() && s >= 0.0) {
            return Err(MajorizationError::BadSide(s));
        }
    }
    let scale = a.max(b).max(c).max(1.0);
    let slack = 1e-12 * scale;
    if a > b + c + slack || b > a + c + slack || c > a + b + slack {
        return Err(MajorizationError::TriangleInequality(a, b, c));
    }
    let p0 = [0.0, 0.0];
    let (p1, p2) = if c > 0.0 {
        let x = (b * b + c * c - a * a) / (2.0 * c);
        let y = 2.0 * heron(a, b, c) / c;
        ([c, 0.0], [x, y])
    } else {
        ([0.0, 0.0], [b, 0.0])
    };
    let degenerate = p2[1] <= 1e-12 * scale;
    Ok(ComparisonTriangle {
        sides: [a, b, c],
        corners: [p0, p1, p2],
        degenerate,
    })
}

/// Area from side lengths, in Kahan's cancellation-free arrangement.
fn heron(a: f64, b: f64, c: f64) -> f64 {
    let mut s = [a, b, c];
    s.sort_by(|x, y| y.total_cmp(x));
    let [a, b, c] = s;
    let f = (a + (b + c)) * (c - (a - b)) * (c + (a - b)) * (a + (b - c));
    0.25 * f.max(0.0).sqrt()
}

impl ComparisonTriangle {
    /// Interior angle at corner `i`. A corner next to a zero-length side
    /// gets `pi/2`, so the three angles still sum to `pi`.
    pub fn angle(&self, i: usize) -> f64 {
        let opposite = self.sides[i];
        let adj1 = self.sides[(i + 1) % 3];
        let adj2 = self.sides[(i + 2) % 3];
        if adj1 <= 0.0 || adj2 <= 0.0 {
            if opposite <= 0.0 && adj1.max(adj2) > 0.0 {
                return 0.0;
            }
            return if adj1 <= 0.0 && adj2 <= 0.0 { PI / 3.0 } else { PI / 2.0 };
        }
        angle_from_sides(adj1, adj2, opposite)
    }

    pub fn area(&self) -> f64 {
        let [p, q, r] = self.corners;
        0.5 * ((q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1])).abs()
    }
}

/// Fan of comparison triangles over a closed polygon, with the angle
/// witness at every polygon corner.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FaceMajorant {
    /// Triangle `k` has corners `(0, k+1, k+2)` of the polygon.
    pub triangles: Vec<ComparisonTriangle>,
    /// Majorant corner angle at each polygon corner (fan angles summed).
    pub planar_angles: Vec<f64>,
    /// Angle at the same corner measured in the target.
    pub target_angles: Vec<f64>,
}

impl FaceMajorant {
    /// Smallest `planar - target` over the corners.
    pub fn worst_margin(&self) -> f64 {
        self.planar_angles
            .iter()
            .zip(&self.target_angles)
            .map(|(p, t)| p - t)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Angle at `apex` between short geodesic pieces towards `p` and `q`:
/// the comparison angle of the points at distance `radius` along them.
pub fn local_angle<T: TargetSpace>(
    space: &T,
    apex: &T::Point,
    p: &T::Point,
    q: &T::Point,
    radius: f64,
) -> f64 {
    let dp = space.distance(apex, p);
    let dq = space.distance(apex, q);
    if dp <= 0.0 || dq <= 0.0 {
        return PI / 2.0;
    }
    let x = space.geodesic_eval(apex, p, (radius / dp).min(1.0));
    let y = space.geodesic_eval(apex, q, (radius / dq).min(1.0));
    let a = space.distance(apex, &x);
    let b = space.distance(apex, &y);
    if a <= 0.0 || b <= 0.0 {
        return PI / 2.0;
    }
    angle_from_sides(a, b, space.distance(&x, &y))
}

/// Fan-triangulates the polygon from its first corner and majorizes each
/// triangle by its comparison triangle. `angle_radius` is the scale at which
/// target corner angles are measured.
pub fn face_majorant<T: TargetSpace>(
    space: &T,
    polygon: &[T::Point],
    angle_radius: f64,
) -> Result<FaceMajorant, MajorizationError> {
    let n = polygon.len();
    if n < 3 {
        return Err(MajorizationError::ShortPolygon(n));
    }
    let d = |i: usize, j: usize| space.distance(&polygon[i], &polygon[j]);
    let mut triangles = Vec::with_capacity(n - 2);
    let mut planar_angles = vec![0.0; n];
    for k in 1..n - 1 {
        // corners (0, k, k+1): sides opposite each corner
        let t = comparison_triangle(d(k, k + 1), d(k + 1, 0), d(0, k))?;
        planar_angles[0] += t.angle(0);
        planar_angles[k] += t.angle(1);
        planar_angles[k + 1] += t.angle(2);
        triangles.push(t);
    }
    let target_angles = (0..n)
        .map(|j| {
            local_angle(
                space,
                &polygon[j],
                &polygon[(j + n - 1) % n],
                &polygon[(j + 1) % n],
                angle_radius,
            )
        })
        .collect();
    Ok(FaceMajorant {
        triangles,
        planar_angles,
        target_angles,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscEdge {
    pub ends: [usize; 2],
    pub length: f64,
}

/// Side `i` runs from corner `i` to corner `i + 1` along `edges[i]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscTriangle {
    pub vertices: [usize; 3],
    pub edges: [usize; 3],
    pub shape: ComparisonTriangle,
}

/// A disc retract glued from comparison triangles and segments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolyhedralDisc {
    pub vertex_count: usize,
    pub edges: Vec<DiscEdge>,
    pub triangles: Vec<DiscTriangle>,
    /// Closed boundary walk as vertices; `boundary_edges[k]` joins
    /// `boundary[k]` and `boundary[k + 1]`.
    pub boundary: Vec<usize>,
    pub boundary_edges: Vec<usize>,
    pub angle_sums: Vec<f64>,
    pub interior: Vec<bool>,
}

impl PolyhedralDisc {
    /// Assembles the disc from edges and triangle faces given as
    /// `(vertices, edges)` with side `i` running from corner `i` to `i + 1`.
    pub fn assemble(
        vertex_count: usize,
        edges: Vec<DiscEdge>,
        faces: &[([usize; 3], [usize; 3])],
        boundary: Vec<usize>,
        boundary_edges: Vec<usize>,
    ) -> Result<Self, MajorizationError> {
        let mut triangles = Vec::with_capacity(faces.len());
        let mut angle_sums = vec![0.0; vertex_count];
        for (k, &(vertices, ids)) in faces.iter().enumerate() {
            if vertices.iter().any(|&v| v >= vertex_count) || ids.iter().any(|&e| e >= edges.len()) {
                return Err(MajorizationError::BadIndex(k));
            }
            let len = |i: usize| edges[ids[i]].length;
            // side 0 is opposite corner 2, side 1 opposite corner 0
            let shape = comparison_triangle(len(1), len(2), len(0))?;
            for (i, &v) in vertices.iter().enumerate() {
                angle_sums[v] += shape.angle(i);
            }
            triangles.push(DiscTriangle {
                vertices,
                edges: ids,
                shape,
            });
        }
        let mut interior = vec![true; vertex_count];
        for &v in &boundary {
            interior[v] = false;
        }
        Ok(PolyhedralDisc {
            vertex_count,
            edges,
            triangles,
            boundary,
            boundary_edges,
            angle_sums,
            interior,
        })
    }

    /// Disc built from a triangulated surface with edge lengths given by
    /// `length(a, b)`; the boundary is traced from edges with one triangle.
    pub fn from_triangles(
        vertex_count: usize,
        tris: &[[usize; 3]],
        length: impl Fn(usize, usize) -> f64,
    ) -> Result<Self, MajorizationError> {
        let mut index: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut edges = Vec::new();
        let mut count = Vec::new();
        let mut faces = Vec::with_capacity(tris.len());
        for (k, t) in tris.iter().enumerate() {
            if t.iter().any(|&v| v >= vertex_count) {
                return Err(MajorizationError::BadIndex(k));
            }
            let mut ids = [0; 3];
            for i in 0..3 {
                let (a, b) = (t[i], t[(i + 1) % 3]);
                let key = (a.min(b), a.max(b));
                let id = *index.entry(key).or_insert_with(|| {
                    edges.push(DiscEdge {
                        ends: [key.0, key.1],
                        length: length(key.0, key.1),
                    });
                    count.push(0);
                    edges.len() - 1
                });
                count[id] += 1;
                ids[i] = id;
            }
            faces.push((*t, ids));
        }
        // orient boundary edges as they appear in their triangle
        let mut next: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
        for &(t, ids) in &faces {
            for i in 0..3 {
                if count[ids[i]] == 1 && next.insert(t[i], (t[(i + 1) % 3], ids[i])).is_some() {
                    return Err(MajorizationError::BoundaryNotCycle);
                }
            }
        }
        let total = next.len();
        let mut boundary = Vec::with_capacity(total);
        let mut boundary_edges = Vec::with_capacity(total);
        if let Some(&start) = next.keys().next() {
            let mut v = start;
            loop {
                let (w, e) = next[&v];
                boundary.push(v);
                boundary_edges.push(e);
                v = w;
                if v == start || boundary.len() > total {
                    break;
                }
            }
        }
        if boundary.len() != total {
            return Err(MajorizationError::BoundaryNotCycle);
        }
        Self::assemble(vertex_count, edges, &faces, boundary, boundary_edges)
    }

    /// The one-point disc.
    pub fn point() -> Self {
        PolyhedralDisc {
            vertex_count: 1,
            edges: Vec::new(),
            triangles: Vec::new(),
            boundary: vec![0],
            boundary_edges: Vec::new(),
            angle_sums: vec![0.0],
            interior: vec![false],
        }
    }

    /// Edges that lie in no triangle.
    pub fn segment_edges(&self) -> Vec<usize> {
        let mut used = vec![false; self.edges.len()];
        for t in &self.triangles {
            for &e in &t.edges {
                used[e] = true;
            }
        }
        (0..self.edges.len()).filter(|&e| !used[e]).collect()
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.vertex_count as i64 - self.edges.len() as i64 + self.triangles.len() as i64
    }

    pub fn is_connected(&self) -> bool {
        let mut ds = DisjointSet::new(self.vertex_count);
        let mut k = self.vertex_count;
        for e in &self.edges {
            if ds.union(e.ends[0], e.ends[1]) {
                k -= 1;
            }
        }
        k <= 1
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Cat0Report {
    /// `(vertex, total angle)` for every interior vertex.
    pub interior_angle_sums: Vec<(usize, f64)>,
    pub euler_characteristic: i64,
    pub connected: bool,
    pub simply_connected: bool,
    pub min_interior_angle_sum: Option<f64>,
    pub pass: bool,
}

/// Interior angle sums against `2 pi - tol_angle`, plus simple connectivity
/// of the complex (connected with Euler characteristic 1).
pub fn cat0_certificate(w: &PolyhedralDisc, tol_angle: f64) -> Cat0Report {
    let interior_angle_sums: Vec<(usize, f64)> = (0..w.vertex_count)
        .filter(|&v| w.interior[v])
        .map(|v| (v, w.angle_sums[v]))
        .collect();
    let chi = w.euler_characteristic();
    let connected = w.is_connected();
    let simply_connected = connected && chi == 1;
    let min = interior_angle_sums
        .iter()
        .map(|&(_, s)| s)
        .fold(None, |m: Option<f64>, s| Some(m.map_or(s, |m| m.min(s))));
    let angles_ok = min.map_or(true, |m| m >= 2.0 * PI - tol_angle);
    Cat0Report {
        interior_angle_sums,
        euler_characteristic: chi,
        connected,
        simply_connected,
        min_interior_angle_sum: min,
        pass: angles_ok && simply_connected,
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ThinTriangleReport {
    pub samples: usize,
    /// Largest `d(x, y) - comparison - allowance` seen.
    pub worst_violation: f64,
    /// Largest `d(x, y) - comparison` seen, before subtracting the allowance.
    pub worst_raw_excess: f64,
    pub positive_violations: usize,
    /// Draws discarded because a side from `a` was not certified as a
    /// geodesic in a certified disc.
    pub uncertified: usize,
}

/// Uniform random point of the disc by area (segments are ignored unless
/// the disc has no triangles).
pub fn random_point(w: &PolyhedralDisc, cumulative_area: &[f64], rng: &mut impl Rng) -> SurfacePoint {
    if w.triangles.is_empty() {
        if w.edges.is_empty() {
            return SurfacePoint::Vertex(0);
        }
        return SurfacePoint::OnEdge {
            edge: rng.gen_range(0..w.edges.len()),
            s: rng.gen(),
        };
    }
    let total = *cumulative_area.last().unwrap();
    let pick = rng.gen::<f64>() * total;
    let tri = cumulative_area
        .partition_point(|&c| c <= pick)
        .min(w.triangles.len() - 1);
    let (mut u, mut v): (f64, f64) = (rng.gen(), rng.gen());
    if u + v > 1.0 {
        u = 1.0 - u;
        v = 1.0 - v;
    }
    SurfacePoint::OnTriangle {
        tri,
        bary: [1.0 - u - v, u, v],
    }
}

pub fn cumulative_areas(w: &PolyhedralDisc) -> Vec<f64> {
    let mut acc = 0.0;
    w.triangles
        .iter()
        .map(|t| {
            acc += t.shape.area();
            acc
        })
        .collect()
}

/// Samples geodesic triangles `abc` and points `x` on `ab`, `y` on `ac`,
/// and compares `d(x, y)` with the distance of the corresponding points of
/// the comparison triangle. On a certified CAT(0) disc only draws whose
/// sides `ab` and `ac` are certified geodesics are used (at most
/// `20 * samples` draws); elsewhere the computed paths are taken as they are.
pub fn thin_triangle_test(target: &PolyhedralTarget, samples: usize, seed: u64) -> ThinTriangleReport {
    let w = target.disc();
    let areas = cumulative_areas(w);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_violation = f64::NEG_INFINITY;
    let mut worst_raw_excess = f64::NEG_INFINITY;
    let mut positive_violations = 0;
    let mut uncertified = 0;
    let mut done = 0;
    while done < samples && done + uncertified < 20 * samples.max(1) {
        let a = random_point(w, &areas, &mut rng);
        let b = random_point(w, &areas, &mut rng);
        let c = random_point(w, &areas, &mut rng);
        let ab = target.geodesic(&a, &b);
        let ac = target.geodesic(&a, &c);
        let bc = target.measure(&b, &c);
        let (lc, lb, la) = (ab.length, ac.length, bc.length);
        if lc <= 0.0 || lb <= 0.0 {
            continue;
        }
        let (s, t): (f64, f64) = (rng.gen(), rng.gen());
        if target.is_cat0() && !(ab.exact && ac.exact) {
            uncertified += 1;
            continue;
        }
        let x = target.path_point(&ab, s);
        let y = target.path_point(&ac, t);
        let xy = target.measure(&x, &y);
        // squared comparison distance is linear in the squared side lengths:
        // s(s-t) lc^2 + t(t-s) lb^2 + st la^2
        let coef = [s * t, t * (t - s), s * (s - t)];
        let sides = [(la, bc.allowance), (lb, ac.allowance), (lc, ab.allowance)];
        let nominal: f64 = coef.iter().zip(&sides).map(|(&k, &(l, _))| k * l * l).sum();
        // true side lengths lie in [l - allowance, l]; take the worst corner
        let widest: f64 = coef
            .iter()
            .zip(&sides)
            .map(|(&k, &(l, d))| {
                let lo = (l - d).max(0.0);
                (k * lo * lo).max(k * l * l)
            })
            .sum();
        let comparison = nominal.max(0.0).sqrt();
        let allowance = xy.allowance + (widest.max(0.0).sqrt() - comparison);
        let raw = xy.length - comparison;
        let v = raw - allowance;
        worst_raw_excess = worst_raw_excess.max(raw);
        worst_violation = worst_violation.max(v);
        if v > 0.0 {
            positive_violations += 1;
        }
        done += 1;
    }
    ThinTriangleReport {
        samples: done,
        worst_violation,
        worst_raw_excess,
        positive_violations,
        uncertified,
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BoundaryArea {
    pub length: f64,
    pub area: f64,
    /// `area <= length^2 / (4 pi) + 1e-9`.
    pub isoperimetric: bool,
}

pub fn boundary_and_area(w: &PolyhedralDisc) -> BoundaryArea {
    let length: f64 = w.boundary_edges.iter().map(|&e| w.edges[e].length).sum();
    let area: f64 = w.triangles.iter().map(|t| t.shape.area()).sum();
    BoundaryArea {
        length,
        area,
        isoperimetric: area <= length * length / (4.0 * PI) + 1e-9,
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NetReport {
    pub epsilon: f64,
    /// Equally spaced boundary points.
    pub boundary_points: usize,
    /// Greedily added points farther than epsilon from all others.
    pub inner_points: usize,
    pub bound: f64,
    pub within_bound: bool,
    /// Largest distance from a candidate point to the net.
    pub covering_radius: f64,
}

/// Greedy epsilon-net: `m = ceil(10 l / eps)` equally spaced boundary points
/// with `l = L / (2 pi)`, then every candidate point of the surface graph
/// farther than `eps` from the current net is added in index order.
pub fn epsilon_net(target: &PolyhedralTarget, epsilon: f64) -> NetReport {
    let w = target.disc();
    let length = boundary_and_area(w).length;
    let ell = length / (2.0 * PI);
    let m = (10.0 * ell / epsilon).ceil() as usize;
    let nodes = target.node_count();
    let mut nearest = vec![f64::INFINITY; nodes];
    let absorb = |nearest: &mut Vec<f64>, p: &SurfacePoint| {
        let d = target.distances_from(p);
        for (n, x) in nearest.iter_mut().zip(d) {
            *n = n.min(x);
        }
    };
    let boundary_points = if length > 0.0 { m } else { 1 };
    if length > 0.0 {
        for j in 0..m {
            let p = boundary_point(w, length * j as f64 / m as f64);
            absorb(&mut nearest, &p);
        }
    } else {
        absorb(&mut nearest, &SurfacePoint::Vertex(w.boundary[0]));
    }
    let mut inner_points = 0;
    for node in 0..nodes {
        if nearest[node] > epsilon {
            inner_points += 1;
            absorb(&mut nearest, &target.node_point(node));
        }
    }
    let bound = 4.0 * (ell / epsilon).powi(2) + m as f64;
    NetReport {
        epsilon,
        boundary_points,
        inner_points,
        bound,
        within_bound: ((boundary_points + inner_points) as f64) <= bound,
        covering_radius: nearest.iter().cloned().fold(0.0, f64::max),
    }
}

/// Point at arclength `s` along the boundary walk.
pub fn boundary_point(w: &PolyhedralDisc, s: f64) -> SurfacePoint {
    let mut left = s;
    for (k, &e) in w.boundary_edges.iter().enumerate() {
        let len = w.edges[e].length;
        if left <= len && len > 0.0 {
            let from = w.boundary[k];
            let frac = left / len;
            let along = if w.edges[e].ends[0] == from { frac } else { 1.0 - frac };
            return SurfacePoint::OnEdge { edge: e, s: along };
        }
        left -= len;
    }
    SurfacePoint::Vertex(w.boundary[0])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutReport {
    pub cut_vertices: Vec<usize>,
    /// Vertex sets of the maximal 2-connected blocks, each sorted.
    pub blocks: Vec<Vec<usize>>,
}

/// Articulation vertices and blocks of the 1-skeleton.
pub fn cut_vertices(w: &PolyhedralDisc) -> CutReport {
    let pairs: Vec<(usize, usize)> = w.edges.iter().map(|e| (e.ends[0], e.ends[1])).collect();
    articulation(w.vertex_count, &pairs)
}

/// Hopcroft-Tarjan articulation points and biconnected blocks.
pub fn articulation(n: usize, edges: &[(usize, usize)]) -> CutReport {
    let mut adj = vec![Vec::new(); n];
    for (id, &(a, b)) in edges.iter().enumerate() {
        if a != b {
            adj[a].push((b, id));
            adj[b].push((a, id));
        }
    }
    let mut disc = vec![usize::MAX; n];
    let mut low = vec![0; n];
    let mut is_cut = vec![false; n];
    let mut blocks = Vec::new();
    let mut edge_stack: Vec<(usize, usize)> = Vec::new();
    let mut time = 0;
    for root in 0..n {
        if disc[root] != usize::MAX {
            continue;
        }
        if adj[root].is_empty() {
            blocks.push(vec![root]);
            disc[root] = time;
            time += 1;
            continue;
        }
        // iterative DFS: (vertex, parent edge, next adjacency index)
        let mut stack = vec![(root, usize::MAX, 0usize)];
        disc[root] = time;
        low[root] = time;
        time += 1;
        let mut root_children = 0;
        while let Some(&mut (v, pe, ref mut i)) = stack.last_mut() {
            if *i < adj[v].len() {
                let (w, id) = adj[v][*i];
                *i += 1;
                if id == pe {
                    continue;
                }
                if disc[w] == usize::MAX {
                    edge_stack.push((v, w));
                    disc[w] = time;
                    low[w] = time;
                    time += 1;
                    if v == root {
                        root_children += 1;
                    }
                    stack.push((w, id, 0));
                } else if disc[w] < disc[v] {
                    edge_stack.push((v, w));
                    low[v] = low[v].min(disc[w]);
                }
            } else {
                stack.pop();
                if let Some(&(p, _, _)) = stack.last() {
                    low[p] = low[p].min(low[v]);
                    if low[v] >= disc[p] {
                        if p != root {
                            is_cut[p] = true;
                        }
                        let mut block = Vec::new();
                        while let Some((a, b)) = edge_stack.pop() {
                            block.push(a);
                            block.push(b);
                            if (a, b) == (p, v) {
                                break;
                            }
                        }
                        block.sort_unstable();
                        block.dedup();
                        blocks.push(block);
                    }
                }
            }
        }
        if root_children > 1 {
            is_cut[root] = true;
        }
    }
    blocks.sort();
    CutReport {
        cut_vertices: (0..n).filter(|&v| is_cut[v]).collect(),
        blocks,
    }
}

/// Standard fixtures: `k` congruent isosceles triangles with legs 1 around
/// a cone point `0` of total angle `total`, closed up into a disc.
pub fn cone_disc(k: usize, total: f64) -> PolyhedralDisc {
    let apex = total / k as f64;
    let rim = 2.0 * (apex / 2.0).sin();
    let tris: Vec<[usize; 3]> = (0..k).map(|i| [0, 1 + i, 1 + (i + 1) % k]).collect();
    PolyhedralDisc::from_triangles(k + 1, &tris, |a, b| if a == 0 || b == 0 { 1.0 } else { rim })
        .expect("cone triangles are valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::target::EuclideanSpace;

    #[test]
    fn comparison_triangle_shapes() {
        let t = comparison_triangle(1.0, 1.0, 1.0).unwrap();
        for i in 0..3 {
            assert!((t.angle(i) - PI / 3.0).abs() < 1e-12);
        }
        // right angle opposite the side of length 5 (side c, corner 2)
        let t = comparison_triangle(3.0, 4.0, 5.0).unwrap();
        assert!((t.angle(2) - PI / 2.0).abs() < 1e-12);
        assert!(!t.degenerate);
        let t = comparison_triangle(2.0, 1.0, 1.0).unwrap();
        assert!(t.degenerate);
        assert!(comparison_triangle(3.0, 1.0, 1.0).is_err());
        let t = comparison_triangle(1.0, 1.0, 0.0).unwrap();
        assert!((t.angle(0) + t.angle(1) + t.angle(2) - PI).abs() < 1e-12);
    }

    #[test]
    fn corners_reproduce_sides() {
        for &(a, b, c) in &[(3.0, 4.0, 5.0), (1.0, 2.0, 2.5), (0.3, 0.3, 0.6), (7.0, 1.0, 6.5)] {
            let t = comparison_triangle(a, b, c).unwrap();
            let d = |i: usize, j: usize| crate::mesh::dist(&t.corners[i], &t.corners[j]);
            assert!((d(1, 2) - a).abs() < 1e-12);
            assert!((d(2, 0) - b).abs() < 1e-12);
            assert!((d(0, 1) - c).abs() < 1e-12);
        }
    }

    #[test]
    fn quadrilateral_fan() {
        let e = EuclideanSpace::new(2);
        let quad = vec![vec![0.0, 0.0], vec![2.0, 0.0], vec![2.0, 1.0], vec![0.0, 1.0]];
        let f = face_majorant(&e, &quad, 0.1).unwrap();
        assert_eq!(f.triangles.len(), 2);
        // flat convex face: majorant reproduces the corner angles
        for (p, t) in f.planar_angles.iter().zip(&f.target_angles) {
            assert!((p - PI / 2.0).abs() < 1e-12 && (t - PI / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cone_certificates() {
        assert!(!cat0_certificate(&cone_disc(5, 5.0 * PI / 3.0), DEFAULT_TOL_ANGLE).pass);
        assert!(cat0_certificate(&cone_disc(6, 2.0 * PI), DEFAULT_TOL_ANGLE).pass);
        let c7 = cone_disc(7, 7.0 * PI / 3.0);
        let r = cat0_certificate(&c7, DEFAULT_TOL_ANGLE);
        assert!(r.pass);
        assert!((r.min_interior_angle_sum.unwrap() - 7.0 * PI / 3.0).abs() < 1e-12);
    }

    #[test]
    fn unit_triangle_area() {
        let w = PolyhedralDisc::from_triangles(3, &[[0, 1, 2]], |_, _| 1.0).unwrap();
        let r = boundary_and_area(&w);
        assert!((r.length - 3.0).abs() < 1e-15);
        assert!((r.area - 3f64.sqrt() / 4.0).abs() < 1e-15);
        assert!(r.isoperimetric);
        assert!(cut_vertices(&w).cut_vertices.is_empty());
    }

    #[test]
    fn articulation_matches_removal() {
        // bowtie chain: triangles {0,1,2}, {2,3,4}, {4,5,6}
        let edges = [(0, 1), (1, 2), (2, 0), (2, 3), (3, 4), (4, 2), (4, 5), (5, 6), (6, 4)];
        let r = articulation(7, &edges);
        assert_eq!(r.cut_vertices, vec![2, 4]);
        assert_eq!(r.blocks, vec![vec![0, 1, 2], vec![2, 3, 4], vec![4, 5, 6]]);
    }

    /// Polar coordinates on a cone built by `cone_disc`.
    pub(crate) fn cone_polar(w: &PolyhedralDisc, p: &SurfacePoint) -> (f64, f64) {
        let k = w.triangles.len();
        let apex = w.triangles[0].shape.angle(0);
        match *p {
            SurfacePoint::OnTriangle { tri, bary } => {
                let c = w.triangles[tri].shape.corners;
                let x = bary[1] * c[1][0] + bary[2] * c[2][0];
                let y = bary[1] * c[1][1] + bary[2] * c[2][1];
                (x.hypot(y), tri as f64 * apex + y.atan2(x))
            }
            SurfacePoint::Vertex(0) => (0.0, 0.0),
            SurfacePoint::Vertex(v) => (1.0, ((v - 1) % k) as f64 * apex),
            SurfacePoint::OnEdge { .. } => unimplemented!(),
        }
    }

    pub(crate) fn cone_distance(total: f64, a: (f64, f64), b: (f64, f64)) -> f64 {
        let raw = (a.1 - b.1).abs().rem_euclid(total);
        let dphi = raw.min(total - raw);
        if dphi < PI {
            (a.0 * a.0 + b.0 * b.0 - 2.0 * a.0 * b.0 * dphi.cos()).max(0.0).sqrt()
        } else {
            a.0 + b.0
        }
    }

    #[test]
    fn cone_distances_match_unfolding() {
        for (k, total) in [(8usize, 2.5 * PI), (6, 1.5 * PI)] {
            let w = cone_disc(k, total);
            let t = PolyhedralTarget::new(w.clone(), 8);
            let areas = cumulative_areas(&w);
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            for _ in 0..300 {
                let a = random_point(&w, &areas, &mut rng);
                let b = random_point(&w, &areas, &mut rng);
                let m = t.measure(&a, &b);
                let exact = cone_distance(total, cone_polar(&w, &a), cone_polar(&w, &b));
                assert!(m.length >= exact - 1e-12, "{} < {}", m.length, exact);
                assert!(m.length - exact <= m.allowance, "{} vs {}", m.length - exact, m.allowance);
            }
        }
    }

    #[test]
    fn thin_triangles_on_cones() {
        let flat = PolyhedralDisc::from_triangles(3, &[[0, 1, 2]], |_, _| 1.0).unwrap();
        let r = thin_triangle_test(&PolyhedralTarget::new(flat, 4), 300, 1);
        assert!(r.worst_violation <= 0.0);
        let wide = PolyhedralTarget::new(cone_disc(8, 2.5 * PI), 4);
        assert_eq!(thin_triangle_test(&wide, 500, 2).positive_violations, 0);
        let narrow = PolyhedralTarget::new(cone_disc(6, 1.5 * PI), 16);
        assert!(thin_triangle_test(&narrow, 1000, 2).worst_violation > 0.0);
    }

    #[test]
    fn nets_respect_the_counting_bound() {
        let t = PolyhedralTarget::new(cone_disc(8, 2.5 * PI), 4);
        let length = boundary_and_area(t.disc()).length;
        for eps in [length / 10.0, length / 20.0] {
            let r = epsilon_net(&t, eps);
            assert!(r.within_bound, "{r:?}");
            assert!(r.covering_radius <= eps + 1e-12);
        }
    }

    #[test]
    fn greedy_boundary_point_walks_the_boundary() {
        let w = PolyhedralDisc::from_triangles(3, &[[0, 1, 2]], |_, _| 1.0).unwrap();
        let t = PolyhedralTarget::new(w.clone(), 2);
        let p = boundary_point(&w, 1.5);
        let v0 = SurfacePoint::Vertex(w.boundary[0]);
        let v2 = SurfacePoint::Vertex(w.boundary[2]);
        assert!((t.distance(&p, &v0) - 3f64.sqrt() / 2.0).abs() < 1e-12);
        assert!((t.distance(&p, &v2) - 0.5).abs() < 1e-12);
    }
}
