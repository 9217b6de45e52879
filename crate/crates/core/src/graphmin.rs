//! Finite graphs mapped into Euclidean space: straightening, Pareto descent
//! relative to pinned vertices, and first-order certificates.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::{dist, MappedDisc};
use crate::target::angle_from_sides;
use crate::unionfind::DisjointSet;

/// Edges at most this long are treated as collapsed.
pub const COINCIDE_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("graph has no vertices")]
    Empty,
    #[error("edge {edge} references vertex {vertex} of {count}")]
    EdgeIndex {
        edge: usize,
        vertex: usize,
        count: usize,
    },
    #[error("edge {0} is a loop")]
    Loop(usize),
    #[error("point {index} has dimension {found}, expected {expected}")]
    Dimension {
        index: usize,
        found: usize,
        expected: usize,
    },
    #[error("pinned vertex {0} out of range")]
    PinnedIndex(usize),
    #[error("graph is not connected")]
    Disconnected,
    #[error("rotation at vertex {0} does not list exactly its incident edges")]
    Rotation(usize),
    #[error("faces violate Euler's formula: V - E + F = {0}")]
    Euler(i64),
    #[error("no outer face could be identified")]
    NoOuterFace,
    #[error("realization of edge {0} has the wrong dimension")]
    Realization(usize),
}

/// Dart `2e` runs from `edges[e][0]` to `edges[e][1]`; dart `2e + 1` back.
pub fn dart_tail(edges: &[[usize; 2]], d: usize) -> usize {
    edges[d / 2][d % 2]
}

pub fn dart_head(edges: &[[usize; 2]], d: usize) -> usize {
    edges[d / 2][1 - d % 2]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphInTarget {
    pub points: Vec<Vec<f64>>,
    pub edges: Vec<[usize; 2]>,
    pub pinned: Vec<usize>,
    /// Outgoing darts at each vertex in counterclockwise order.
    pub rotation: Vec<Vec<usize>>,
    /// Positions in the parameter plane, when the graph comes from a disc.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<Vec<[f64; 2]>>,
    /// A dart whose left face is the outer face.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outer: Option<usize>,
    /// Interior polyline points of each edge; straight when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub realizations: Option<Vec<Vec<Vec<f64>>>>,
}

impl GraphInTarget {
    pub fn vertex_count(&self) -> usize {
        self.points.len()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let [a, b] = self.edges[e];
        dist(&self.points[a], &self.points[b])
    }

    pub fn total_length(&self) -> f64 {
        (0..self.edges.len()).map(|e| self.edge_length(e)).sum()
    }

    pub fn pinned_mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.vertex_count()];
        for &v in &self.pinned {
            m[v] = true;
        }
        m
    }

    /// Rotation system from parameter positions: darts sorted by angle.
    pub fn rotation_from_params(params: &[[f64; 2]], edges: &[[usize; 2]]) -> Vec<Vec<usize>> {
        let mut rot = vec![Vec::new(); params.len()];
        for d in 0..2 * edges.len() {
            rot[dart_tail(edges, d)].push(d);
        }
        for (v, list) in rot.iter_mut().enumerate() {
            let angle = |d: &usize| {
                let w = dart_head(edges, *d);
                (params[w][1] - params[v][1]).atan2(params[w][0] - params[v][0])
            };
            list.sort_by(|a, b| angle(a).total_cmp(&angle(b)).then(a.cmp(b)));
        }
        rot
    }

    /// The 1-skeleton of a mapped disc with its planar rotation, pinning the
    /// listed vertices.
    pub fn from_mesh(m: &MappedDisc, pinned: Vec<usize>) -> Self {
        let edges: Vec<[usize; 2]> = m.edges().into_iter().map(|(a, b)| [a, b]).collect();
        let rotation = Self::rotation_from_params(&m.vertices, &edges);
        GraphInTarget {
            points: m.images.clone(),
            edges,
            pinned,
            rotation,
            params: Some(m.vertices.clone()),
            outer: None,
            realizations: None,
        }
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        let n = self.vertex_count();
        if n == 0 {
            return Err(GraphError::Empty);
        }
        let dim = self.dim();
        for (index, p) in self.points.iter().enumerate() {
            if p.len() != dim {
                return Err(GraphError::Dimension {
                    index,
                    found: p.len(),
                    expected: dim,
                });
            }
        }
        for (e, &[a, b]) in self.edges.iter().enumerate() {
            for v in [a, b] {
                if v >= n {
                    return Err(GraphError::EdgeIndex {
                        edge: e,
                        vertex: v,
                        count: n,
                    });
                }
            }
            if a == b {
                return Err(GraphError::Loop(e));
            }
        }
        if let Some(&v) = self.pinned.iter().find(|&&v| v >= n) {
            return Err(GraphError::PinnedIndex(v));
        }
        let mut ds = DisjointSet::new(n);
        let mut parts = n;
        for &[a, b] in &self.edges {
            if ds.union(a, b) {
                parts -= 1;
            }
        }
        if parts != 1 {
            return Err(GraphError::Disconnected);
        }
        if self.rotation.len() != n {
            return Err(GraphError::Rotation(self.rotation.len().min(n)));
        }
        let mut seen = vec![false; 2 * self.edges.len()];
        for (v, list) in self.rotation.iter().enumerate() {
            for &d in list {
                if d >= seen.len() || seen[d] || dart_tail(&self.edges, d) != v {
                    return Err(GraphError::Rotation(v));
                }
                seen[d] = true;
            }
        }
        if let Some(v) = (0..seen.len()).find(|&d| !seen[d]) {
            return Err(GraphError::Rotation(dart_tail(&self.edges, v)));
        }
        if let Some(r) = &self.realizations {
            for (e, poly) in r.iter().enumerate() {
                if poly.iter().any(|p| p.len() != dim) {
                    return Err(GraphError::Realization(e));
                }
            }
        }
        let faces = self.faces();
        let chi = n as i64 - self.edges.len() as i64 + faces.len() as i64;
        if chi != 2 {
            return Err(GraphError::Euler(chi));
        }
        if self.edges.is_empty() {
            return Ok(());
        }
        self.outer_face(&faces).map(|_| ()).ok_or(GraphError::NoOuterFace)
    }

    /// Face boundaries as dart cycles; each face lies to the left of its
    /// darts.
    pub fn faces(&self) -> Vec<Vec<usize>> {
        face_cycles(&self.edges, &self.rotation)
    }

    /// Index into `faces` of the outer face.
    pub fn outer_face(&self, faces: &[Vec<usize>]) -> Option<usize> {
        if let Some(d) = self.outer {
            return faces.iter().position(|f| f.contains(&d));
        }
        let params = self.params.as_ref()?;
        // the outer walk is the only one with negative signed area
        faces
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let area: f64 = f
                    .iter()
                    .map(|&d| {
                        let (a, b) = (params[dart_tail(&self.edges, d)], params[dart_head(&self.edges, d)]);
                        a[0] * b[1] - b[0] * a[1]
                    })
                    .sum();
                (i, area)
            })
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .map(|(i, _)| i)
    }

    /// Length of edge `e` as realized (polyline through its interior points).
    pub fn realized_length(&self, e: usize) -> f64 {
        let [a, b] = self.edges[e];
        match self.realizations.as_ref().map(|r| &r[e]) {
            Some(poly) if !poly.is_empty() => {
                let mut len = dist(&self.points[a], &poly[0]);
                for w in poly.windows(2) {
                    len += dist(&w[0], &w[1]);
                }
                len + dist(poly.last().unwrap(), &self.points[b])
            }
            _ => self.edge_length(e),
        }
    }
}

/// Face walk: after arriving at `v` along `u -> v`, leave along the dart
/// preceding `v -> u` in the counterclockwise order at `v`.
pub fn face_cycles(edges: &[[usize; 2]], rotation: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let darts = 2 * edges.len();
    let mut pos = vec![(usize::MAX, 0); darts];
    for (v, list) in rotation.iter().enumerate() {
        for (i, &d) in list.iter().enumerate() {
            pos[d] = (v, i);
        }
    }
    let next = |d: usize| -> usize {
        let back = d ^ 1;
        let (v, i) = pos[back];
        let list = &rotation[v];
        list[(i + list.len() - 1) % list.len()]
    };
    let mut used = vec![false; darts];
    let mut faces = Vec::new();
    for start in 0..darts {
        if used[start] || pos[start].0 == usize::MAX {
            continue;
        }
        let mut face = Vec::new();
        let mut d = start;
        while !used[d] {
            used[d] = true;
            face.push(d);
            d = next(d);
        }
        faces.push(face);
    }
    faces
}

/// Combinatorial map after collapsing zero-length edges: vertices are
/// classes of original vertices, edges keep their original ids.
#[derive(Clone, Debug)]
pub struct Contracted {
    pub class_of: Vec<usize>,
    pub classes: Vec<Vec<usize>>,
    /// Surviving edges as `(original id, [class, class])`.
    pub edges: Vec<(usize, [usize; 2])>,
    /// Rotation over surviving edge positions, darts `2k`, `2k + 1`.
    pub rotation: Vec<Vec<usize>>,
}

impl Contracted {
    pub fn edge_pairs(&self) -> Vec<[usize; 2]> {
        self.edges.iter().map(|e| e.1).collect()
    }

    pub fn faces(&self) -> Vec<Vec<usize>> {
        face_cycles(&self.edge_pairs(), &self.rotation)
    }
}

/// Contracts every edge of length at most `tol`, merging rotations so the
/// embedding stays planar, and drops edges that become loops.
pub fn contract_short_edges(g: &GraphInTarget, tol: f64) -> Contracted {
    let n = g.vertex_count();
    let mut rot: Vec<Vec<usize>> = g.rotation.clone();
    let mut alive = vec![true; g.edges.len()];
    let mut ds = DisjointSet::new(n);
    let mut rep: Vec<usize> = (0..n).collect();
    // current owner of each original vertex's rotation
    let find_rep = |ds: &mut DisjointSet, rep: &[usize], v: usize| rep[ds.find(v)];
    for e in 0..g.edges.len() {
        if g.edge_length(e) > tol {
            continue;
        }
        let [a, b] = g.edges[e];
        let (ra, rb) = (find_rep(&mut ds, &rep, a), find_rep(&mut ds, &rep, b));
        let (d_ab, d_ba) = (2 * e, 2 * e + 1);
        alive[e] = false;
        if ra == rb {
            rot[ra].retain(|&d| d != d_ab && d != d_ba);
            continue;
        }
        let rotate_after = |list: &Vec<usize>, d: usize| -> Vec<usize> {
            let i = list.iter().position(|&x| x == d).expect("dart in rotation");
            list[i + 1..].iter().chain(&list[..i]).cloned().collect()
        };
        let mut merged = rotate_after(&rot[ra], d_ab);
        merged.extend(rotate_after(&rot[rb], d_ba));
        rot[rb].clear();
        rot[ra] = merged;
        ds.union(a, b);
        let root = ds.find(a);
        rep[root] = ra;
    }
    // number classes by first occurrence
    let mut class_id = vec![usize::MAX; n];
    let mut class_of = vec![0; n];
    let mut classes: Vec<Vec<usize>> = Vec::new();
    for v in 0..n {
        let r = find_rep(&mut ds, &rep, v);
        if class_id[r] == usize::MAX {
            class_id[r] = classes.len();
            classes.push(Vec::new());
        }
        class_of[v] = class_id[r];
        classes[class_id[r]].push(v);
    }
    let mut new_index = vec![usize::MAX; g.edges.len()];
    let mut edges = Vec::new();
    for e in 0..g.edges.len() {
        if alive[e] {
            new_index[e] = edges.len();
            let [a, b] = g.edges[e];
            edges.push((e, [class_of[a], class_of[b]]));
        }
    }
    let mut rotation = vec![Vec::new(); classes.len()];
    for (v, list) in rot.iter().enumerate() {
        if list.is_empty() {
            continue;
        }
        let c = class_id[v];
        if c == usize::MAX {
            continue;
        }
        rotation[c] = list.iter().map(|&d| 2 * new_index[d / 2] + d % 2).collect();
    }
    Contracted {
        class_of,
        classes,
        edges,
        rotation,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StraightenReport {
    pub before: Vec<f64>,
    pub after: Vec<f64>,
}

/// Replaces every edge realization by the segment between its endpoints.
pub fn straighten(g: &GraphInTarget) -> (GraphInTarget, StraightenReport) {
    let before = (0..g.edges.len()).map(|e| g.realized_length(e)).collect();
    let mut out = g.clone();
    out.realizations = None;
    let after = (0..g.edges.len()).map(|e| out.edge_length(e)).collect();
    (out, StraightenReport { before, after })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Descent {
    /// `max_{|d| <= 1} min_i <d, u_i>`, clamped at 0 when 0 is in the hull.
    pub t: f64,
    pub direction: Option<Vec<f64>>,
}

/// Coefficients summing to one that minimize `|sum a_i u_i|` over the
/// affine hull of the selected vectors.
fn affine_min_norm(u: &[Vec<f64>], set: &[usize]) -> Vec<f64> {
    let dim = u[0].len();
    let m = set.len();
    if m == 1 {
        return vec![1.0];
    }
    let base = &u[set[0]];
    let diff = DMatrix::from_fn(dim, m - 1, |r, c| u[set[c + 1]][r] - base[r]);
    let rhs = DVector::from_fn(dim, |r, _| -base[r]);
    let svd = diff.svd(true, true);
    let cut = 1e-13 * svd.singular_values.max();
    let mu = svd.solve(&rhs, cut).expect("u and v were computed");
    let mut alpha = vec![1.0 - mu.sum()];
    alpha.extend(mu.iter());
    alpha
}

fn combine(u: &[Vec<f64>], set: &[usize], coef: &[f64]) -> Vec<f64> {
    let mut p = vec![0.0; u[0].len()];
    for (&i, &c) in set.iter().zip(coef) {
        for (pc, uc) in p.iter_mut().zip(&u[i]) {
            *pc += c * uc;
        }
    }
    p
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimum-norm point of the convex hull of the given vectors (Wolfe's
/// active-set method).
pub fn min_norm_point(u: &[Vec<f64>]) -> Vec<f64> {
    let scale = u.iter().map(|v| dot(v, v)).fold(0.0, f64::max);
    let first = (0..u.len())
        .min_by(|&a, &b| dot(&u[a], &u[a]).total_cmp(&dot(&u[b], &u[b])))
        .expect("at least one vector");
    let mut set = vec![first];
    let mut lambda = vec![1.0];
    let mut x = u[first].clone();
    for _ in 0..10 * u.len() + 10 {
        let xx = dot(&x, &x);
        let (j, best) = (0..u.len())
            .map(|i| (i, dot(&x, &u[i])))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        // stop once x/|x| certifies |x| to within 1e-13 of the scale
        let norm = xx.sqrt();
        if norm <= 1e-14 * scale.sqrt() || best >= xx - 1e-13 * norm * scale.sqrt() || set.contains(&j) {
            break;
        }
        set.push(j);
        lambda.push(0.0);
        loop {
            let alpha = affine_min_norm(u, &set);
            if alpha.iter().all(|&a| a > 1e-15) {
                x = combine(u, &set, &alpha);
                lambda = alpha;
                break;
            }
            // step toward the affine minimizer until a weight hits zero
            let theta = lambda
                .iter()
                .zip(&alpha)
                .filter(|(_, &a)| a <= 1e-15)
                .map(|(&l, &a)| l / (l - a))
                .fold(1.0, f64::min);
            for (l, a) in lambda.iter_mut().zip(&alpha) {
                *l += theta * (a - *l);
            }
            let keep: Vec<bool> = lambda.iter().map(|&l| l > 1e-15).collect();
            if keep.iter().all(|&k| k) {
                // numerical stall: drop the smallest weight
                let (i, _) = lambda
                    .iter()
                    .enumerate()
                    .min_by(|a, b| a.1.total_cmp(b.1))
                    .unwrap();
                set.remove(i);
                lambda.remove(i);
            } else {
                let mut k = 0;
                set.retain(|_| {
                    k += 1;
                    keep[k - 1]
                });
                lambda.retain(|&l| l > 1e-15);
            }
            let total: f64 = lambda.iter().sum();
            lambda.iter_mut().for_each(|l| *l /= total);
            x = combine(u, &set, &lambda);
            if set.len() == 1 {
                break;
            }
        }
    }
    x
}

/// Near a flat configuration the min-norm point loses the value of t* in
/// rounding. In an orthonormal frame around the approximate direction `d0`
/// the same quantity is the well-conditioned linear program
/// `max s` subject to `s <= <d0, u_j> + <w, a_j>`, solved here by vertex
/// enumeration inside a small box for `w`. By duality `s* d0` lies in the
/// hull, so the optimum `s*` bounds the distance from above while the
/// polished direction bounds it from below. Returns `(s*, direction)` when
/// the box does not bind.
fn polish_descent(u: &[Vec<f64>], d0: &[f64]) -> Option<(f64, Vec<f64>)> {
    const BOX: f64 = 1e-4;
    let m = d0.len();
    if m == 1 {
        let t = u.iter().map(|v| v[0] * d0[0]).fold(f64::INFINITY, f64::min);
        return (t >= 0.0).then(|| (t, d0.to_vec()));
    }
    // complete d0 to an orthonormal basis
    let mut basis: Vec<Vec<f64>> = vec![d0.to_vec()];
    for i in 0..m {
        let mut e = vec![0.0; m];
        e[i] = 1.0;
        for b in &basis {
            let c = dot(&e, b);
            e.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
        let n = dot(&e, &e).sqrt();
        if n > 1e-6 {
            e.iter_mut().for_each(|x| *x /= n);
            basis.push(e);
        }
        if basis.len() == m {
            break;
        }
    }
    let z: Vec<f64> = u.iter().map(|v| dot(v, d0)).collect();
    let a: Vec<Vec<f64>> = u
        .iter()
        .map(|v| basis[1..].iter().map(|e| dot(v, e)).collect())
        .collect();
    // constraint rows over (w, s): coef . (w, s) <= rhs
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for (aj, zj) in a.iter().zip(&z) {
        let mut c: Vec<f64> = aj.iter().map(|x| -x).collect();
        c.push(1.0);
        rows.push((c, *zj));
    }
    for i in 0..m - 1 {
        for sign in [1.0, -1.0] {
            let mut c = vec![0.0; m];
            c[i] = sign;
            rows.push((c, BOX));
        }
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut pick = Vec::with_capacity(m);
    fn choose(
        start: usize,
        rows: &[(Vec<f64>, f64)],
        m: usize,
        pick: &mut Vec<usize>,
        f: &mut dyn FnMut(&[usize]),
    ) {
        if pick.len() == m {
            f(pick);
            return;
        }
        for i in start..rows.len() {
            pick.push(i);
            choose(i + 1, rows, m, pick, f);
            pick.pop();
        }
    }
    let mut visit = |idx: &[usize]| {
        let mat = DMatrix::from_fn(m, m, |r, c| rows[idx[r]].0[c]);
        let rhs = DVector::from_fn(m, |r, _| rows[idx[r]].1);
        let Some(x) = mat.lu().solve(&rhs) else {
            return;
        };
        if x.iter().any(|v| !v.is_finite()) {
            return;
        }
        let feasible = rows.iter().all(|(c, r)| {
            let lhs: f64 = c.iter().zip(x.iter()).map(|(p, q)| p * q).sum();
            lhs <= r + 1e-15 * (1.0 + r.abs())
        });
        if feasible && best.as_ref().map_or(true, |b| x[m - 1] > b.0) {
            best = Some((x[m - 1], x.iter().take(m - 1).cloned().collect()));
        }
    };
    choose(0, &rows, m, &mut pick, &mut visit);
    let (value, w) = best?;
    if w.iter().any(|x| x.abs() >= 0.5 * BOX) {
        return None;
    }
    let mut d = d0.to_vec();
    for (wi, e) in w.iter().zip(&basis[1..]) {
        d.iter_mut().zip(e).for_each(|(x, y)| *x += wi * y);
    }
    let n = dot(&d, &d).sqrt();
    d.iter_mut().for_each(|x| *x /= n);
    Some((value, d))
}

/// Best common descent direction for a vertex whose incident edges point
/// along the unit vectors `u`.
pub fn descent_direction(u: &[Vec<f64>]) -> Descent {
    if u.is_empty() {
        return Descent {
            t: 0.0,
            direction: None,
        };
    }
    let p = min_norm_point(u);
    let norm = p.iter().map(|x| x * x).sum::<f64>().sqrt();
    // the hull point p bounds t* from above
    let (mut t, mut direction) = (norm, None);
    if norm > 1e-14 {
        direction = Some(p.iter().map(|x| x / norm).collect::<Vec<f64>>());
    }
    if norm < 1e-6 {
        let d0 = direction.clone().unwrap_or_else(|| {
            let mut e = vec![0.0; u[0].len()];
            e[0] = 1.0;
            e
        });
        if let Some((tp, dp)) = polish_descent(u, &d0) {
            t = tp;
            direction = Some(dp);
        }
    }
    if t <= 0.0 {
        return Descent {
            t: 0.0,
            direction: None,
        };
    }
    Descent { t, direction }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub geo: f64,
    pub descent: f64,
    pub angle: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            geo: 1e-9,
            descent: 1e-8,
            angle: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepLog {
    pub sweep: usize,
    pub moves: usize,
    pub total_length: f64,
    pub worst_descent: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinimizationCertificate {
    /// `(class representative, t*)` for each free vertex class.
    pub descent: Vec<(usize, f64)>,
    /// `(class representative, angle sum)` for free classes of degree >= 2.
    pub angle_sums: Vec<(usize, f64)>,
    /// Realized length minus chord, per edge.
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub log: Vec<SweepLog>,
    /// Free classes whose descent could not be evaluated or executed.
    pub flagged: Vec<usize>,
    pub tolerances: Tolerances,
    pub valid: bool,
}

impl MinimizationCertificate {
    pub fn worst_descent(&self) -> f64 {
        self.descent.iter().map(|d| d.1).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn worst_residual(&self) -> f64 {
        self.residuals.iter().cloned().fold(0.0, f64::max)
    }

    pub fn min_angle_sum(&self) -> f64 {
        self.angle_sums.iter().map(|d| d.1).fold(f64::INFINITY, f64::min)
    }
}

fn unit(from: &[f64], to: &[f64]) -> Vec<f64> {
    let l = dist(from, to);
    from.iter().zip(to).map(|(a, b)| (b - a) / l).collect()
}

/// Weiszfeld iteration for the point minimizing the sum of distances.
fn fermat_weber(qs: &[&Vec<f64>], start: &[f64]) -> Vec<f64> {
    let mut x = start.to_vec();
    for _ in 0..100 {
        let mut num = vec![0.0; x.len()];
        let mut den = 0.0;
        for q in qs {
            let d = dist(&x, q);
            if d < 1e-14 {
                return (*q).clone();
            }
            for (n, c) in num.iter_mut().zip(q.iter()) {
                *n += c / d;
            }
            den += 1.0 / d;
        }
        let next: Vec<f64> = num.iter().map(|n| n / den).collect();
        let moved = dist(&next, &x);
        x = next;
        if moved < 1e-15 {
            break;
        }
    }
    x
}

/// Checks the three first-order conditions on the graph with zero-length
/// edges collapsed.
pub fn certify_conditions(g: &GraphInTarget, tol: Tolerances) -> MinimizationCertificate {
    let c = contract_short_edges(g, COINCIDE_TOL);
    let pinned = g.pinned_mask();
    let residuals: Vec<f64> = (0..g.edges.len())
        .map(|e| g.realized_length(e) - g.edge_length(e))
        .collect();
    let pairs = c.edge_pairs();
    let mut descent = Vec::new();
    let mut angle_sums = Vec::new();
    for (k, members) in c.classes.iter().enumerate() {
        if members.iter().any(|&v| pinned[v]) {
            continue;
        }
        let p = &g.points[members[0]];
        let nbrs: Vec<&Vec<f64>> = c.rotation[k]
            .iter()
            .map(|&d| &g.points[c.classes[dart_head(&pairs, d)][0]])
            .collect();
        let u: Vec<Vec<f64>> = nbrs.iter().map(|q| unit(p, q)).collect();
        descent.push((members[0], descent_direction(&u).t));
        if nbrs.len() >= 2 {
            let m = nbrs.len();
            let sum: f64 = (0..m)
                .map(|i| {
                    let (x, y) = (nbrs[i], nbrs[(i + 1) % m]);
                    angle_from_sides(dist(p, x), dist(p, y), dist(x, y))
                })
                .sum();
            angle_sums.push((members[0], sum));
        }
    }
    let mut cert = MinimizationCertificate {
        descent,
        angle_sums,
        residuals,
        iterations: 0,
        converged: true,
        log: Vec::new(),
        flagged: Vec::new(),
        tolerances: tol,
        valid: false,
    };
    cert.valid = cert.worst_residual() <= tol.geo
        && cert.descent.iter().all(|d| d.1 <= tol.descent)
        && cert.angle_sums.iter().all(|a| a.1 >= 2.0 * PI - tol.angle);
    cert
}

/// Edges leaving a moving group: their current ends inside the group and
/// their fixed far ends.
struct Star {
    origin: Vec<Vec<f64>>,
    far: Vec<Vec<f64>>,
    len: Vec<f64>,
}

impl Star {
    fn new(origin: Vec<Vec<f64>>, far: Vec<Vec<f64>>) -> Self {
        let len = origin.iter().zip(&far).map(|(o, q)| dist(o, q)).collect();
        Star { origin, far, len }
    }

    /// Total change of the lengths if every edge ends at `cand`, provided
    /// none grows beyond the rounding error of the displacement (whose
    /// absolute error is of order eps times the longest edge). Changes are
    /// formed from the displacement to avoid cancellation.
    fn score(&self, cand: &[f64]) -> Option<f64> {
        let reach = self.len.iter().cloned().fold(0.0, f64::max);
        let mut total = 0.0;
        let mut moved = false;
        for ((o, q), &l) in self.origin.iter().zip(&self.far).zip(&self.len) {
            let s: Vec<f64> = cand.iter().zip(o).map(|(c, h)| c - h).collect();
            moved |= s.iter().any(|&x| x != 0.0);
            let num: f64 = s
                .iter()
                .zip(q.iter().zip(o))
                .map(|(si, (qi, oi))| si * (si - 2.0 * (qi - oi)))
                .sum();
            if num > 16.0 * f64::EPSILON * reach * l {
                return None;
            }
            total += num / (dist(cand, q) + l);
        }
        moved.then_some(total)
    }

    /// Nearest point to `start` in the hull of the far ends, pushed on
    /// toward their Fermat-Weber point (also in the hull) halfway to the
    /// first ball boundary.
    fn hull_move(&self, start: &[f64]) -> Option<(f64, Vec<f64>)> {
        let offsets: Vec<Vec<f64>> = self
            .far
            .iter()
            .map(|q| q.iter().zip(start).map(|(a, b)| a - b).collect())
            .collect();
        let mut shift = min_norm_point(&offsets);
        let norm = dot(&shift, &shift).sqrt();
        let reach = self.len.iter().cloned().fold(0.0, f64::max);
        if norm > 0.0 && norm < 1e-6 * reach {
            // thin hull: the polished value times the direction is a hull
            // point resolved far below the rounding of the active-set solve
            let d0: Vec<f64> = shift.iter().map(|x| x / norm).collect();
            if let Some((value, _)) = polish_descent(&offsets, &d0) {
                shift = d0.iter().map(|x| x * value.max(0.0)).collect();
            }
        }
        let projected: Vec<f64> = start.iter().zip(&shift).map(|(x, y)| x + y).collect();
        let sum = self.score(&projected)?;
        let qs: Vec<&Vec<f64>> = self.far.iter().collect();
        let fw = fermat_weber(&qs, &projected);
        let v: Vec<f64> = fw.iter().zip(&projected).map(|(a, b)| a - b).collect();
        let vv = dot(&v, &v);
        let mut tau: f64 = 1.0;
        if vv > 0.0 {
            for (q, &l) in qs.iter().zip(&self.len) {
                let w: Vec<f64> = projected.iter().zip(q.iter()).map(|(a, b)| a - b).collect();
                let (b, c) = (2.0 * dot(&w, &v), dot(&w, &w) - l * l);
                let disc = (b * b - 4.0 * vv * c).max(0.0);
                tau = tau.min((-b + disc.sqrt()) / (2.0 * vv));
            }
        }
        let pushed: Vec<f64> = projected
            .iter()
            .zip(&v)
            .map(|(a, b)| a + 0.5 * tau.max(0.0) * b)
            .collect();
        match self.score(&pushed) {
            Some(s2) if s2 < sum => Some((s2, pushed)),
            _ => Some((sum, projected)),
        }
    }

    /// Steps of the shortest edge length along `d`, halved until the total
    /// drops.
    fn line_search(&self, here: &[f64], d: &[f64]) -> Option<(f64, Vec<f64>)> {
        let mut step = self.len.iter().cloned().fold(f64::INFINITY, f64::min);
        for _ in 0..200 {
            let cand: Vec<f64> = here.iter().zip(d).map(|(x, y)| x + step * y).collect();
            if let Some(sum) = self.score(&cand).filter(|&x| x < 0.0) {
                return Some((sum, cand));
            }
            step *= 0.5;
            if step == 0.0 {
                break;
            }
        }
        None
    }
}

/// Gauss-Seidel Pareto descent over the free vertices in ascending order.
/// A vertex admitting descent jumps into the convex hull of its neighbours,
/// which shortens every incident edge. Vertices joined by collapsed edges
/// move together along their external edges; groups containing a pinned
/// vertex stay put. Two free groups joined by a short edge are merged when
/// a common position shortens all their other edges.
pub fn relax(
    g: &GraphInTarget,
    tol: Tolerances,
    max_iter: usize,
) -> (GraphInTarget, MinimizationCertificate) {
    let (mut g, _) = straighten(g);
    let pinned = g.pinned_mask();
    let n = g.vertex_count();
    let mut log = Vec::new();
    let mut converged = false;
    let mut flagged = Vec::new();
    let mut sweeps = 0;
    while sweeps < max_iter {
        sweeps += 1;
        // groups of coincident vertices joined by collapsed edges
        let mut ds = DisjointSet::new(n);
        for e in 0..g.edges.len() {
            if g.edge_length(e) <= COINCIDE_TOL {
                ds.union(g.edges[e][0], g.edges[e][1]);
            }
        }
        let (label, k) = ds.labels();
        let mut groups = vec![Vec::new(); k];
        for v in 0..n {
            groups[label[v]].push(v);
        }
        let free: Vec<bool> = groups.iter().map(|m| m.iter().all(|&v| !pinned[v])).collect();
        let mut incident = vec![Vec::new(); k];
        for &[a, b] in &g.edges {
            if label[a] != label[b] {
                incident[label[a]].push((a, b));
                incident[label[b]].push((b, a));
            }
        }
        let mut moves = 0;
        let mut worst: f64 = 0.0;
        flagged.clear();
        for (gi, members) in groups.iter().enumerate() {
            if !free[gi] || incident[gi].is_empty() {
                continue;
            }
            let here = g.points[members[0]].clone();
            let star = Star::new(
                vec![here.clone(); incident[gi].len()],
                incident[gi].iter().map(|&(_, b)| g.points[b].clone()).collect(),
            );
            if star.len.iter().any(|&l| l <= COINCIDE_TOL) {
                flagged.push(members[0]);
                continue;
            }
            let u: Vec<Vec<f64>> = star.far.iter().map(|q| unit(&here, q)).collect();
            let descent = descent_direction(&u);
            worst = worst.max(descent.t);
            // stop with a margin below the certificate tolerance
            if descent.t <= 0.1 * tol.descent {
                continue;
            }
            // landing in the hull makes the group stationary; the line
            // search only steps in when that move is rejected
            let best = star.hull_move(&here).or_else(|| {
                descent
                    .direction
                    .as_ref()
                    .and_then(|d| star.line_search(&here, d))
            });
            match best {
                Some((_, cand)) => {
                    for &v in members {
                        g.points[v] = cand.clone();
                    }
                    moves += 1;
                }
                None => flagged.push(members[0]),
            }
        }
        // Merge pass over short edges: two free groups may move to a common
        // point, or one free group may snap onto its neighbour, provided no
        // other edge gets longer.
        let mut touched = vec![false; k];
        let outside = |gi: usize, other: usize, g: &GraphInTarget| -> Star {
            let (origin, far) = incident[gi]
                .iter()
                .filter(|&&(_, y)| label[y] != other)
                .map(|&(x, y)| (g.points[x].clone(), g.points[y].clone()))
                .unzip();
            Star::new(origin, far)
        };
        for &[a, b] in &g.edges {
            let (ga, gb) = (label[a], label[b]);
            if ga == gb || (!free[ga] && !free[gb]) || touched[ga] || touched[gb] {
                continue;
            }
            let l = dist(&g.points[a], &g.points[b]);
            let (sa, sb) = (outside(ga, gb, &g), outside(gb, ga, &g));
            let shortest = sa
                .len
                .iter()
                .chain(&sb.len)
                .cloned()
                .fold(f64::INFINITY, f64::min);
            if l > 0.1 * shortest || shortest <= COINCIDE_TOL {
                continue;
            }
            let mut found: Option<(Vec<f64>, bool, bool)> = None;
            if free[ga] && free[gb] && !(sa.far.is_empty() && sb.far.is_empty()) {
                let both = Star::new(
                    sa.origin.iter().chain(&sb.origin).cloned().collect(),
                    sa.far.iter().chain(&sb.far).cloned().collect(),
                );
                let mid: Vec<f64> = g.points[a].iter().zip(&g.points[b]).map(|(x, y)| 0.5 * (x + y)).collect();
                found = both.hull_move(&mid).map(|(_, c)| (c, true, true));
            }
            if found.is_none() && free[ga] && (sa.far.is_empty() || sa.score(&g.points[b]).is_some()) {
                found = Some((g.points[b].clone(), true, false));
            }
            if found.is_none() && free[gb] && (sb.far.is_empty() || sb.score(&g.points[a]).is_some()) {
                found = Some((g.points[a].clone(), false, true));
            }
            if let Some((cand, move_a, move_b)) = found {
                for (gi, moving) in [(ga, move_a), (gb, move_b)] {
                    if moving {
                        for &v in &groups[gi] {
                            g.points[v] = cand.clone();
                        }
                    }
                    touched[gi] = true;
                }
                moves += 1;
            }
        }
        log.push(SweepLog {
            sweep: sweeps,
            moves,
            total_length: g.total_length(),
            worst_descent: worst,
        });
        if moves == 0 {
            converged = true;
            break;
        }
    }
    let mut cert = certify_conditions(&g, tol);
    cert.iterations = sweeps;
    cert.converged = converged;
    cert.log = log;
    cert.flagged = flagged;
    cert.valid = cert.valid && converged;
    (g, cert)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::builders;

    fn path3(mid: Vec<f64>) -> GraphInTarget {
        let params = vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]];
        let edges = vec![[0, 1], [1, 2]];
        GraphInTarget {
            points: vec![vec![0.0, 0.0], mid, vec![2.0, 0.0]],
            rotation: GraphInTarget::rotation_from_params(&params, &edges),
            edges,
            pinned: vec![0, 2],
            params: Some(params),
            outer: None,
            realizations: None,
        }
    }

    // enumeration of affinely independent subsets of size at most dim + 1
    fn exhaustive_min_norm(u: &[Vec<f64>]) -> Vec<f64> {
        let k = u.len();
        let dim = u[0].len();
        let max_size = (dim + 1).min(k);
        let mut best: Option<(f64, Vec<f64>)> = None;
        let mut subset = Vec::with_capacity(max_size);
        fn visit(
            start: usize,
            k: usize,
            max_size: usize,
            subset: &mut Vec<usize>,
            f: &mut dyn FnMut(&[usize]),
        ) {
            if !subset.is_empty() {
                f(subset);
            }
            if subset.len() == max_size {
                return;
            }
            for i in start..k {
                subset.push(i);
                visit(i + 1, k, max_size, subset, f);
                subset.pop();
            }
        }
        let mut consider = |s: &[usize]| {
            let m = s.len();
            // p = u_0 + sum mu_j (u_j - u_0), least squares against 0
            let base = &u[s[0]];
            let mut lambda = vec![1.0];
            if m > 1 {
                let diff = DMatrix::from_fn(dim, m - 1, |r, c| u[s[c + 1]][r] - base[r]);
                let rhs = DVector::from_fn(dim, |r, _| -base[r]);
                let svd = diff.svd(true, true);
                let top = svd.singular_values.max();
                if svd.singular_values.min() <= 1e-12 * top.max(1e-300) {
                    return;
                }
                let Ok(mu) = svd.solve(&rhs, 0.0) else {
                    return;
                };
                lambda[0] = 1.0 - mu.sum();
                lambda.extend(mu.iter());
            }
            if lambda.iter().any(|&l| l < -1e-12 || !l.is_finite()) {
                return;
            }
            let sol = &lambda;
            let mut p = vec![0.0; dim];
            for (a, &i) in s.iter().enumerate() {
                for c in 0..dim {
                    p[c] += sol[a] * u[i][c];
                }
            }
            let norm2: f64 = p.iter().map(|x| x * x).sum();
            if best.as_ref().map_or(true, |(b, _)| norm2 < *b) {
                best = Some((norm2, p));
            }
        };
        visit(0, k, max_size, &mut subset, &mut consider);
        best.expect("singletons are always feasible").1
    }

    #[test]
    fn min_norm_matches_enumeration() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..2000 {
            let dim = rng.gen_range(1..=3);
            let k = rng.gen_range(1..=8);
            let shift: f64 = rng.gen_range(-1.0..1.0);
            let u: Vec<Vec<f64>> = (0..k)
                .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0) + shift).collect())
                .collect();
            let a = min_norm_point(&u);
            let b = exhaustive_min_norm(&u);
            let (na, nb) = (dot(&a, &a).sqrt(), dot(&b, &b).sqrt());
            assert!((na - nb).abs() < 1e-12, "{u:?}: {na} vs {nb}");
        }
    }

    #[test]
    fn flat_stars_resolve_tiny_descent() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let t: f64 = 10f64.powf(rng.gen_range(-11.0..-6.0));
            // random orthonormal frame (d, e1, e2)
            let mut frame: Vec<Vec<f64>> = Vec::new();
            while frame.len() < 3 {
                let mut v: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
                for f in &frame {
                    let c = dot(&v, f);
                    v.iter_mut().zip(f).for_each(|(x, y)| *x -= c * y);
                }
                let n = dot(&v, &v).sqrt();
                if n > 0.1 {
                    frame.push(v.iter().map(|x| x / n).collect());
                }
            }
            // in-plane directions spread around the full circle
            let k = rng.gen_range(3..8);
            let base: f64 = rng.gen_range(0.0..2.0 * PI);
            let u: Vec<Vec<f64>> = (0..k)
                .map(|i| {
                    let a = base + 2.0 * PI * (i as f64 + rng.gen_range(0.0..0.5)) / k as f64;
                    let c = (1.0 - t * t).sqrt();
                    (0..3)
                        .map(|r| c * (a.cos() * frame[1][r] + a.sin() * frame[2][r]) + t * frame[0][r])
                        .collect()
                })
                .collect();
            let got = descent_direction(&u).t;
            assert!((got - t).abs() <= 1e-14, "t = {t:e}, got {got:e}");
        }
    }

    #[test]
    fn descent_examples() {
        let one = descent_direction(&[vec![0.0, 1.0]]);
        assert!((one.t - 1.0).abs() < 1e-15);
        assert_eq!(one.direction, Some(vec![0.0, 1.0]));
        let three: Vec<Vec<f64>> = (0..3)
            .map(|i| {
                let a = 2.0 * PI * i as f64 / 3.0;
                vec![a.cos(), a.sin()]
            })
            .collect();
        let d = descent_direction(&three);
        assert!(d.t <= 1e-12 && d.direction.is_none());
        let a = PI / 3.0;
        let two = descent_direction(&[vec![1.0, 0.0], vec![a.cos(), a.sin()]]);
        assert!((two.t - (PI / 6.0).cos()).abs() < 1e-12);
        let b = two.direction.unwrap();
        assert!((b[1].atan2(b[0]) - PI / 6.0).abs() < 1e-12);
    }

    #[test]
    fn path_relaxes_onto_the_segment() {
        let g = path3(vec![0.7, 0.9]);
        g.validate().unwrap();
        let (out, cert) = relax(&g, Tolerances::default(), 10_000);
        assert!(cert.converged && cert.valid, "{cert:?}");
        assert!(out.points[1][1].abs() < 1e-6);
        assert!(out.total_length() <= g.total_length());
    }

    #[test]
    fn fully_pinned_is_identity() {
        let mut g = path3(vec![0.7, 0.9]);
        g.pinned = vec![0, 1, 2];
        let (out, cert) = relax(&g, Tolerances::default(), 10);
        assert_eq!(out, g);
        assert_eq!(cert.iterations, 1);
        assert_eq!(cert.log[0].moves, 0);
    }

    #[test]
    fn flat_wheel_certifies() {
        let m = builders::hex_patch(1);
        let boundary = m.boundary_loop.clone();
        let g = GraphInTarget::from_mesh(&m, boundary);
        g.validate().unwrap();
        let cert = certify_conditions(&g, Tolerances::default());
        assert!(cert.valid);
        assert_eq!(cert.angle_sums.len(), 1);
        assert!((cert.angle_sums[0].1 - 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn faces_of_a_mesh_graph() {
        let m = builders::rings(&[5, 6]);
        let g = GraphInTarget::from_mesh(&m, m.boundary_loop.clone());
        let faces = g.faces();
        assert_eq!(faces.len(), m.triangles.len() + 1);
        let outer = g.outer_face(&faces).unwrap();
        assert_eq!(faces[outer].len(), m.boundary_loop.len());
        assert!(faces.iter().enumerate().all(|(i, f)| i == outer || f.len() == 3));
    }

    #[test]
    fn contraction_keeps_faces_planar() {
        let m = builders::rings(&[5, 6]);
        let mut g = GraphInTarget::from_mesh(&m, m.boundary_loop.clone());
        // collapse the spoke 0-1
        g.points[1] = g.points[0].clone();
        let c = contract_short_edges(&g, COINCIDE_TOL);
        let faces = c.faces();
        let chi = c.classes.len() as i64 - c.edges.len() as i64 + faces.len() as i64;
        assert_eq!(chi, 2);
        assert_eq!(c.classes.len(), 11);
    }

    #[test]
    fn straighten_shortens_detours() {
        let mut g = path3(vec![1.0, 0.0]);
        g.realizations = Some(vec![vec![vec![0.5, 1.0]], vec![]]);
        let (s, r) = straighten(&g);
        assert!(r.after[0] < r.before[0]);
        assert_eq!(r.after[1], r.before[1]);
        assert!(s.realizations.is_none());
        let cert = certify_conditions(&g, Tolerances::default());
        assert!(cert.worst_residual() > 0.1);
    }
}

pub mod samples {
    use super::*;
    use crate::mesh::builders;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Disc graph from concentric rings with the boundary pinned on a wavy
    /// curve in R^3 and interior vertices scattered at random.
    pub fn random_disc_graph(seed: u64) -> GraphInTarget {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rings = rng.gen_range(1..=3);
        let mut counts = Vec::new();
        for r in 0..rings {
            counts.push(rng.gen_range(4 + 2 * r..=6 + 3 * r));
        }
        let m = builders::rings(&counts);
        let boundary = m.boundary_loop.clone();
        let radius = rings as f64;
        let wobble = rng.gen_range(0.0..0.8);
        let phase = rng.gen_range(0.0..PI);
        let mut images = Vec::with_capacity(m.vertex_count());
        let on_boundary = m.is_boundary_vertex();
        for (v, p) in m.vertices.iter().enumerate() {
            if on_boundary[v] {
                let a = p[1].atan2(p[0]);
                images.push(vec![p[0], p[1], wobble * (2.0 * a + phase).sin()]);
            } else {
                images.push(vec![
                    rng.gen_range(-radius..radius),
                    rng.gen_range(-radius..radius),
                    rng.gen_range(-1.0..1.0),
                ]);
            }
        }
        GraphInTarget::from_mesh(&m.with_images(images), boundary)
    }

    /// Pinned triangle (corners counterclockwise) with one free centre
    /// joined to all three corners.
    pub fn star(center: Vec<f64>, corners: [[f64; 2]; 3]) -> GraphInTarget {
        let cx = corners.iter().map(|c| c[0]).sum::<f64>() / 3.0;
        let cy = corners.iter().map(|c| c[1]).sum::<f64>() / 3.0;
        let mut params = vec![[cx, cy]];
        params.extend(corners);
        let edges = vec![[0, 1], [0, 2], [0, 3], [1, 2], [2, 3], [3, 1]];
        let mut points = vec![center];
        points.extend(corners.iter().map(|c| c.to_vec()));
        GraphInTarget {
            rotation: GraphInTarget::rotation_from_params(&params, &edges),
            points,
            edges,
            pinned: vec![1, 2, 3],
            params: Some(params),
            outer: None,
            realizations: None,
        }
    }
}
