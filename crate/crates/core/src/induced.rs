//! Pseudometrics induced on the vertices of a mapped disc.

use serde::{Deserialize, Serialize};

use crate::mesh::{dist, MappedDisc, MeshError};
use crate::metric::PseudometricMatrix;
use crate::shortest::WeightedGraph;
use crate::unionfind::DisjointSet;

/// Largest vertex count for which the connecting pseudometric is computed
/// by exhaustive search over connected vertex subsets.
pub const EXACT_CONNECTING_LIMIT: usize = 14;

/// Shortest image length of mesh paths between original vertices, routed
/// through the mesh refined `refinement` times per edge.
pub fn length_pseudometric(
    m: &MappedDisc,
    refinement: usize,
) -> Result<PseudometricMatrix, MeshError> {
    m.validate()?;
    let fine = m.refine(refinement)?;
    let g = fine.image_graph();
    let n = m.vertex_count();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut d = g.dijkstra(i);
            d.truncate(n);
            d
        })
        .collect();
    Ok(symmetrize(rows))
}

// Dijkstra rows agree up to rounding; take the smaller entry of each pair.
fn symmetrize(rows: Vec<Vec<f64>>) -> PseudometricMatrix {
    let n = rows.len();
    PseudometricMatrix::from_fn(n, |i, j| if i == j { 0.0 } else { rows[i][j].min(rows[j][i]) })
}

/// Connecting pseudometric of a mapped disc. `lower == upper` when `exact`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConnectingBracket {
    pub lower: PseudometricMatrix,
    pub upper: PseudometricMatrix,
    pub exact: bool,
}

impl ConnectingBracket {
    /// Upper bound, which is the exact value when `exact` holds.
    pub fn value(&self) -> &PseudometricMatrix {
        &self.upper
    }
}

fn image_distances(m: &MappedDisc) -> Vec<Vec<f64>> {
    let n = m.vertex_count();
    (0..n)
        .map(|i| (0..n).map(|j| dist(&m.images[i], &m.images[j])).collect())
        .collect()
}

/// Minimum image diameter of a connected vertex set containing both points.
pub fn connecting_pseudometric(m: &MappedDisc) -> Result<ConnectingBracket, MeshError> {
    m.validate()?;
    if m.vertex_count() <= EXACT_CONNECTING_LIMIT {
        let d = connecting_exhaustive(m);
        Ok(ConnectingBracket {
            lower: d.clone(),
            upper: d,
            exact: true,
        })
    } else {
        let upper = connecting_upper(m).metric_closure();
        Ok(ConnectingBracket {
            lower: upper.scaled(0.5),
            upper,
            exact: false,
        })
    }
}

fn connecting_exhaustive(m: &MappedDisc) -> PseudometricMatrix {
    let n = m.vertex_count();
    let dm = image_distances(m);
    let mut nbr = vec![0u32; n];
    for (a, b) in m.edges() {
        nbr[a] |= 1 << b;
        nbr[b] |= 1 << a;
    }
    let mut best = PseudometricMatrix::disconnected(n);
    for mask in 1u32..(1 << n) {
        // connectivity by flood fill inside the mask
        let start = mask.trailing_zeros() as usize;
        let mut reached = 1u32 << start;
        let mut frontier = reached;
        while frontier != 0 {
            let v = frontier.trailing_zeros() as usize;
            frontier &= frontier - 1;
            let new = nbr[v] & mask & !reached;
            reached |= new;
            frontier |= new;
        }
        if reached != mask {
            continue;
        }
        let members: Vec<usize> = (0..n).filter(|&v| mask >> v & 1 == 1).collect();
        let mut diam: f64 = 0.0;
        for (k, &a) in members.iter().enumerate() {
            for &b in &members[k + 1..] {
                diam = diam.max(dm[a][b]);
            }
        }
        for (k, &a) in members.iter().enumerate() {
            for &b in &members[k + 1..] {
                if diam < best.get(a, b) {
                    best.set(a, b, diam);
                }
            }
        }
    }
    best
}

// Grows the sublevel sets of the distance to each centre and records, for
// every pair, the diameter of the component that first contains both.
fn connecting_upper(m: &MappedDisc) -> PseudometricMatrix {
    let n = m.vertex_count();
    let dm = image_distances(m);
    let adj = m.adjacency();
    let mut upper = PseudometricMatrix::disconnected(n);
    for (a, b) in m.edges() {
        if dm[a][b] < upper.get(a, b) {
            upper.set(a, b, dm[a][b]);
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    for c in 0..n {
        order.sort_by(|&a, &b| dm[c][a].total_cmp(&dm[c][b]).then(a.cmp(&b)));
        let mut ds = DisjointSet::new(n);
        let mut members: Vec<Vec<usize>> = (0..n).map(|v| vec![v]).collect();
        let mut diam = vec![0.0f64; n];
        let mut added = vec![false; n];
        for &v in &order {
            added[v] = true;
            for &w in &adj[v] {
                if !added[w] {
                    continue;
                }
                let (rv, rw) = (ds.find(v), ds.find(w));
                if rv == rw {
                    continue;
                }
                let mut cross: f64 = 0.0;
                for &a in &members[rv] {
                    for &b in &members[rw] {
                        cross = cross.max(dm[a][b]);
                    }
                }
                let joined = diam[rv].max(diam[rw]).max(cross);
                for &a in &members[rv] {
                    for &b in &members[rw] {
                        if joined < upper.get(a, b) {
                            upper.set(a, b, joined);
                        }
                    }
                }
                ds.union(rv, rw);
                let root = ds.find(rv);
                let (keep, gone) = if root == rv { (rv, rw) } else { (rw, rv) };
                let moved = std::mem::take(&mut members[gone]);
                members[keep].extend(moved);
                diam[keep] = joined;
            }
        }
    }
    upper
}

/// Partition of the vertices into classes of connecting distance at most
/// `zero_tol`, using the upper bound when the search is not exact.
pub fn connecting_classes(c: &ConnectingBracket, zero_tol: f64) -> (Vec<usize>, usize) {
    let d = c.value();
    let n = d.len();
    let mut ds = DisjointSet::new(n);
    for i in 0..n {
        for j in (i + 1)..n {
            if d.get(i, j) <= zero_tol {
                ds.union(i, j);
            }
        }
    }
    ds.labels()
}

/// Length pseudometric of the map after identifying connecting-distance
/// classes, measured along mesh edges.
pub fn intrinsic_pseudometric(
    m: &MappedDisc,
    zero_tol: f64,
) -> Result<PseudometricMatrix, MeshError> {
    let c = connecting_pseudometric(m)?;
    Ok(intrinsic_from(m, &c, zero_tol))
}

fn intrinsic_from(m: &MappedDisc, c: &ConnectingBracket, zero_tol: f64) -> PseudometricMatrix {
    let (class_of, k) = connecting_classes(c, zero_tol);
    let mut g = WeightedGraph::new(k);
    for (a, b) in m.edges() {
        let (ca, cb) = (class_of[a], class_of[b]);
        if ca != cb {
            g.add_edge(ca, cb, dist(&m.images[a], &m.images[b]));
        }
    }
    let class_rows: Vec<Vec<f64>> = (0..k).map(|s| g.dijkstra(s)).collect();
    let n = m.vertex_count();
    PseudometricMatrix::from_fn(n, |i, j| {
        if i == j {
            0.0
        } else {
            let (a, b) = (class_of[i], class_of[j]);
            class_rows[a][b].min(class_rows[b][a])
        }
    })
}

/// The three induced pseudometrics and the chain
/// `length >= intrinsic >= connecting` checked entrywise.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OrderingReport {
    pub length: PseudometricMatrix,
    pub intrinsic: PseudometricMatrix,
    pub connecting: ConnectingBracket,
    pub zero_tol: f64,
    /// Largest `intrinsic - length`.
    pub intrinsic_over_length: f64,
    /// Largest `connecting.lower - intrinsic`; the lower bound is the exact
    /// value when the connecting search is exhaustive.
    pub connecting_over_intrinsic: f64,
    /// Largest `connecting.upper - intrinsic`, for information only when
    /// the bracket is not exact.
    pub upper_over_intrinsic: f64,
    pub slack: f64,
    pub pass: bool,
}

/// Checks the ordering chain with slack `1e-9 + zero_tol`. The chain is
/// measured on the unrefined mesh, where all three matrices route along
/// the same edges.
pub fn ordering_chain(m: &MappedDisc, zero_tol: f64) -> Result<OrderingReport, MeshError> {
    let length = length_pseudometric(m, 1)?;
    let connecting = connecting_pseudometric(m)?;
    let intrinsic = intrinsic_from(m, &connecting, zero_tol);
    let slack = 1e-9 + zero_tol;
    let intrinsic_over_length = intrinsic.max_excess_over(&length);
    let connecting_over_intrinsic = connecting.lower.max_excess_over(&intrinsic);
    let upper_over_intrinsic = connecting.upper.max_excess_over(&intrinsic);
    Ok(OrderingReport {
        pass: intrinsic_over_length <= slack && connecting_over_intrinsic <= slack,
        length,
        intrinsic,
        connecting,
        zero_tol,
        intrinsic_over_length,
        connecting_over_intrinsic,
        upper_over_intrinsic,
        slack,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClassReport {
    pub members: Vec<usize>,
    /// The members induce a connected subgraph of the 1-skeleton.
    pub connected: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MonotoneLightReport {
    pub classes: Vec<ClassReport>,
    /// Mesh edges joining different classes whose endpoints share an image.
    pub light_violations: Vec<(usize, usize)>,
    pub monotone: bool,
    pub light: bool,
}

pub fn monotone_light_report(
    m: &MappedDisc,
    zero_tol: f64,
) -> Result<MonotoneLightReport, MeshError> {
    let c = connecting_pseudometric(m)?;
    let (class_of, k) = connecting_classes(&c, zero_tol);
    let mut members = vec![Vec::new(); k];
    for (v, &cl) in class_of.iter().enumerate() {
        members[cl].push(v);
    }
    let adj = m.adjacency();
    let classes: Vec<ClassReport> = members
        .into_iter()
        .map(|mem| {
            let connected = induced_components(&adj, &mem).len() == 1;
            ClassReport {
                members: mem,
                connected,
            }
        })
        .collect();
    let light_violations: Vec<(usize, usize)> = m
        .edges()
        .into_iter()
        .filter(|&(a, b)| {
            class_of[a] != class_of[b] && dist(&m.images[a], &m.images[b]) <= zero_tol
        })
        .collect();
    Ok(MonotoneLightReport {
        monotone: classes.iter().all(|c| c.connected),
        light: light_violations.is_empty(),
        classes,
        light_violations,
    })
}

/// Connected components of the subgraph induced on `keep`, each sorted.
pub fn induced_components(adj: &[Vec<usize>], keep: &[usize]) -> Vec<Vec<usize>> {
    let mut inside = vec![false; adj.len()];
    for &v in keep {
        inside[v] = true;
    }
    let mut seen = vec![false; adj.len()];
    let mut comps = Vec::new();
    for &s in keep {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        let mut stack = vec![s];
        let mut comp = Vec::new();
        while let Some(v) = stack.pop() {
            comp.push(v);
            for &w in &adj[v] {
                if inside[w] && !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        comp.sort_unstable();
        comps.push(comp);
    }
    comps
}

/// A component of the complement of a small image ball that misses the
/// boundary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BubbleWitness {
    pub center: usize,
    pub radius: f64,
    pub component: Vec<usize>,
}

/// For every vertex image `p`, deletes the vertices whose image lies within
/// `radius` of `p` and reports remaining components that avoid the boundary.
pub fn no_bubble_check(m: &MappedDisc, radius: f64) -> Result<Vec<BubbleWitness>, MeshError> {
    m.validate()?;
    let adj = m.adjacency();
    let on_boundary = m.is_boundary_vertex();
    let n = m.vertex_count();
    let mut out = Vec::new();
    for c in 0..n {
        let keep: Vec<usize> = (0..n)
            .filter(|&v| dist(&m.images[v], &m.images[c]) > radius)
            .collect();
        for comp in induced_components(&adj, &keep) {
            if !comp.iter().any(|&v| on_boundary[v]) {
                out.push(BubbleWitness {
                    center: c,
                    radius,
                    component: comp,
                });
            }
        }
    }
    Ok(out)
}

/// Small hand-built discs used by tests and examples.
pub mod samples {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use crate::mesh::{builders, MappedDisc};

    /// Seeded grid disc with at most 30 vertices and random images in R^3;
    /// some seeds collapse a patch of vertices onto one point.
    pub fn random_disc(seed: u64) -> MappedDisc {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nx = rng.gen_range(3..=6);
        let ny = rng.gen_range(3..=30 / nx);
        let mut m = builders::grid(nx, ny);
        for p in &mut m.images {
            for x in p.iter_mut() {
                *x += rng.gen_range(-0.4..0.4);
            }
        }
        if rng.gen_bool(0.5) {
            let (i0, j0) = (rng.gen_range(0..nx - 1), rng.gen_range(0..ny - 1));
            let target = m.images[j0 * nx + i0].clone();
            for (di, dj) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                m.images[(j0 + dj) * nx + i0 + di] = target.clone();
            }
        }
        m
    }

    /// Pentagon boundary `0..5` around two interior vertices `5` (left) and
    /// `6` (right); seven triangles, isometric planar images.
    pub fn pentagon_pair() -> MappedDisc {
        let mut vertices: Vec<[f64; 2]> = (0..5)
            .map(|k| {
                let t = std::f64::consts::FRAC_PI_2 + 2.0 * std::f64::consts::PI * k as f64 / 5.0;
                [2.0 * t.cos(), 2.0 * t.sin()]
            })
            .collect();
        vertices.push([-0.5, 0.0]);
        vertices.push([0.5, 0.0]);
        let triangles = vec![
            [5, 6, 0],
            [0, 1, 5],
            [1, 2, 5],
            [2, 3, 5],
            [5, 3, 6],
            [3, 4, 6],
            [4, 0, 6],
        ];
        let images = vertices.iter().map(|v| vec![v[0], v[1]]).collect();
        MappedDisc {
            vertices,
            triangles,
            boundary_loop: vec![0, 1, 2, 3, 4],
            images,
        }
    }

    /// `pentagon_pair` with both interior vertices sent to their midpoint,
    /// offset by `gap` along the x axis from each other.
    pub fn pentagon_pair_collapsed(gap: f64) -> MappedDisc {
        let mut m = pentagon_pair();
        m.images[5] = vec![-gap / 2.0, 0.0];
        m.images[6] = vec![gap / 2.0, 0.0];
        m
    }

    /// Centre `0`, pentagon ring `1..6`, hexagon boundary `6..12`. The ring is
    /// sent to a single point and the centre is lifted far above it, so a
    /// small ball around the ring image cuts the centre off from the boundary.
    pub fn capped_annulus(height: f64) -> MappedDisc {
        let mut m = builders::rings(&[5, 6]);
        for v in 1..6 {
            m.images[v] = vec![0.0, 0.0, 0.0];
        }
        m.images[0] = vec![0.0, 0.0, height];
        m
    }
}

#[cfg(test)]
mod tests {
    use super::samples::*;
    use super::*;
    use crate::mesh::builders;

    #[test]
    fn constant_map_gives_zero_matrices() {
        let mut m = builders::grid(3, 3);
        for p in &mut m.images {
            *p = vec![1.0, 2.0, 3.0];
        }
        let z = PseudometricMatrix::zeros(9);
        assert_eq!(length_pseudometric(&m, 2).unwrap(), z);
        assert_eq!(connecting_pseudometric(&m).unwrap().upper, z);
        assert!(no_bubble_check(&m, 0.1).unwrap().is_empty());
    }

    #[test]
    fn flat_lattice_length_is_graph_distance() {
        let m = builders::hex_patch(2);
        let d = length_pseudometric(&m, 1).unwrap();
        // unit edges: graph distance is hop count
        let g = {
            let mut g = WeightedGraph::new(m.vertex_count());
            for (a, b) in m.edges() {
                g.add_edge(a, b, 1.0);
            }
            g
        };
        for i in 0..m.vertex_count() {
            let hops = g.dijkstra(i);
            for j in 0..m.vertex_count() {
                assert!((d.get(i, j) - hops[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn path_through_far_point() {
        // a triangle strip whose middle vertex sits far away: 0 - 1 - 2 with
        // the only disc being the single triangle would join 0 and 2 directly,
        // so use a fan where 0 and 2 are not adjacent
        let m = MappedDisc {
            vertices: vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [1.0, 1.0], [1.0, -1.0]],
            triangles: vec![[0, 1, 3], [1, 2, 3], [0, 4, 1], [1, 4, 2]],
            boundary_loop: vec![0, 4, 2, 3],
            images: vec![vec![0.0], vec![10.0], vec![1.0], vec![10.0], vec![10.0]],
        };
        let c = connecting_pseudometric(&m).unwrap();
        assert!(c.exact);
        assert_eq!(c.upper.get(0, 2), 10.0);
    }

    #[test]
    fn bracket_contains_exhaustive_value() {
        let mut m = builders::grid(4, 3);
        for (k, p) in m.images.iter_mut().enumerate() {
            p[2] = ((k * 7) % 5) as f64 * 0.3;
        }
        let exact = connecting_exhaustive(&m);
        let upper = connecting_upper(&m).metric_closure();
        assert!(exact.dominated_by(&upper, 1e-12));
        assert!(upper.scaled(0.5).dominated_by(&exact, 1e-12));
    }

    #[test]
    fn collapsed_pair_shortens_routes() {
        let m = pentagon_pair_collapsed(1e-3);
        let len = length_pseudometric(&m, 1).unwrap();
        let intr = intrinsic_pseudometric(&m, 1e-2).unwrap();
        assert!(intr.dominated_by(&len, 1e-12));
        assert!(intr.get(1, 4) < len.get(1, 4) - 5e-4);
    }

    #[test]
    fn capped_annulus_has_a_bubble() {
        let m = capped_annulus(5.0);
        m.validate().unwrap();
        let w = no_bubble_check(&m, 0.5).unwrap();
        assert!(w.iter().any(|b| b.component == vec![0]));
        let flat = builders::rings(&[5, 6]);
        assert!(no_bubble_check(&flat, 0.5).unwrap().is_empty());
    }

    #[test]
    fn ordering_chain_on_random_discs() {
        for seed in 0..10 {
            let m = random_disc(seed);
            let r = ordering_chain(&m, 1e-9).unwrap();
            assert!(r.pass, "seed {seed}");
            assert!(r.length.dominated_by(&length_pseudometric(&m, 1).unwrap(), 0.0));
        }
        let r = ordering_chain(&pentagon_pair_collapsed(1e-3), 1e-2).unwrap();
        assert!(r.pass);
        assert!(r.intrinsic.get(1, 4) < r.length.get(1, 4));
    }
}
