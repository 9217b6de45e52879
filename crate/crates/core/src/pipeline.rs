//! From a mapped disc and a finite vertex sample to a glued CAT(0) disc W
//! with a contraction on the sample and a short map back to the target.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graphmin::{face_cycles, relax, GraphInTarget, MinimizationCertificate, Tolerances};
use crate::majorization::{
    boundary_and_area, cat0_certificate, cumulative_areas, glue_disc, random_point, BoundaryArea,
    GluedDisc, PolyhedralDisc, DEFAULT_TOL_ANGLE,
};
use crate::mesh::{dist, MappedDisc};
use crate::surface::{PolyhedralTarget, SurfacePoint};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("sample is empty")]
    EmptySample,
    #[error("sample vertex {0} is not a mesh vertex")]
    BadVertex(usize),
    #[error("{stage}: {message}")]
    Stage { stage: &'static str, message: String },
}

fn stage<E: std::fmt::Display>(stage: &'static str) -> impl FnOnce(E) -> PipelineError {
    move |e| PipelineError::Stage {
        stage,
        message: e.to_string(),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KeyLemmaConfig {
    /// Steiner points per edge for distances in W.
    pub steiner: usize,
    /// Sampled pairs for the shortness check of q.
    pub pairs: usize,
    pub seed: u64,
    pub tol: f64,
    pub relax_tol: Tolerances,
    pub max_sweeps: usize,
}

impl Default for KeyLemmaConfig {
    fn default() -> Self {
        KeyLemmaConfig {
            steiner: 4,
            pairs: 10_000,
            seed: 0,
            tol: 1e-6,
            relax_tol: Tolerances::default(),
            max_sweeps: 20_000,
        }
    }
}

/// The geodesic graph together with the mesh vertex behind each graph vertex.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GeodesicGraph {
    pub graph: GraphInTarget,
    pub mesh_vertex: Vec<usize>,
    /// Sample entries left out because they are at infinite distance from
    /// the first sample vertex.
    pub split_off: Vec<usize>,
}

/// Union of mesh shortest paths between all pairs of sample vertices.
/// Vertices of degree two that are neither sampled nor on the boundary
/// are suppressed into polyline edges; the rotation comes from the
/// parameter positions.
pub fn geodesic_graph(m: &MappedDisc, sample: &[usize]) -> Result<GeodesicGraph, PipelineError> {
    if sample.is_empty() {
        return Err(PipelineError::EmptySample);
    }
    let n = m.vertex_count();
    if let Some(&v) = sample.iter().find(|&&v| v >= n) {
        return Err(PipelineError::BadVertex(v));
    }
    let graph = m.image_graph();
    let trees: Vec<(Vec<f64>, Vec<Option<usize>>)> =
        sample.iter().map(|&s| graph.dijkstra_with_parents(s)).collect();
    let mut kept_sample = Vec::new();
    let mut split_off = Vec::new();
    for (i, &s) in sample.iter().enumerate() {
        if trees[0].0[s].is_finite() {
            kept_sample.push(i);
        } else {
            split_off.push(s);
        }
    }
    let mut used_edge: BTreeMap<(usize, usize), ()> = BTreeMap::new();
    let mut on_graph = vec![false; n];
    for &i in &kept_sample {
        on_graph[sample[i]] = true;
    }
    for (a, &i) in kept_sample.iter().enumerate() {
        for &j in &kept_sample[a + 1..] {
            let mut cur = sample[j];
            while let Some(p) = trees[i].1[cur] {
                used_edge.insert((p.min(cur), p.max(cur)), ());
                on_graph[p] = true;
                on_graph[cur] = true;
                cur = p;
            }
        }
    }
    let mut nbrs: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(a, b) in used_edge.keys() {
        nbrs[a].push(b);
        nbrs[b].push(a);
    }
    for (v, list) in nbrs.iter_mut().enumerate() {
        let p = m.vertices[v];
        list.sort_by(|&a, &b| {
            let ang = |w: usize| (m.vertices[w][1] - p[1]).atan2(m.vertices[w][0] - p[0]);
            ang(a).total_cmp(&ang(b))
        });
    }
    let is_sample: Vec<bool> = {
        let mut s = vec![false; n];
        for &i in &kept_sample {
            s[sample[i]] = true;
        }
        s
    };
    let boundary = m.is_boundary_vertex();
    let kept: Vec<bool> = (0..n)
        .map(|v| on_graph[v] && (is_sample[v] || boundary[v] || nbrs[v].len() != 2))
        .collect();
    let mut index = vec![usize::MAX; n];
    let mut mesh_vertex = Vec::new();
    for v in 0..n {
        if kept[v] {
            index[v] = mesh_vertex.len();
            mesh_vertex.push(v);
        }
    }
    // walk chains; each chain is recorded once from its lower dart
    let mut edges: Vec<[usize; 2]> = Vec::new();
    let mut chains: Vec<Vec<usize>> = Vec::new();
    let mut dart_at: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for &v in &mesh_vertex {
        for &w in &nbrs[v] {
            if dart_at.contains_key(&(v, w)) {
                continue;
            }
            let mut chain = vec![v, w];
            while !kept[*chain.last().unwrap()] {
                let (prev, cur) = (chain[chain.len() - 2], chain[chain.len() - 1]);
                let next = nbrs[cur].iter().cloned().find(|&x| x != prev).expect("degree two");
                chain.push(next);
            }
            let end = *chain.last().unwrap();
            let back = chain[chain.len() - 2];
            let e = edges.len();
            edges.push([index[v], index[end]]);
            dart_at.insert((v, w), 2 * e);
            dart_at.insert((end, back), 2 * e + 1);
            chains.push(chain);
        }
    }
    if let Some(e) = edges.iter().position(|&[a, b]| a == b) {
        return Err(PipelineError::Stage {
            stage: "geodesic_graph",
            message: format!("chain {e} closes on itself"),
        });
    }
    let rotation: Vec<Vec<usize>> = mesh_vertex
        .iter()
        .map(|&v| nbrs[v].iter().map(|&w| dart_at[&(v, w)]).collect())
        .collect();
    let realizations: Vec<Vec<Vec<f64>>> = chains
        .iter()
        .map(|c| c[1..c.len() - 1].iter().map(|&v| m.images[v].clone()).collect())
        .collect();
    // outer face: most negative signed area along the full chains
    let faces = face_cycles(&edges, &rotation);
    let outer = faces
        .iter()
        .map(|f| {
            let mut area = 0.0;
            for &d in f {
                let chain = &chains[d / 2];
                let pts: Vec<[f64; 2]> = if d % 2 == 0 {
                    chain.iter().map(|&v| m.vertices[v]).collect()
                } else {
                    chain.iter().rev().map(|&v| m.vertices[v]).collect()
                };
                for w in pts.windows(2) {
                    area += w[0][0] * w[1][1] - w[1][0] * w[0][1];
                }
            }
            (f[0], area)
        })
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(d, _)| d);
    let pinned: Vec<usize> = mesh_vertex
        .iter()
        .enumerate()
        .filter(|&(_, &v)| is_sample[v] && boundary[v])
        .map(|(i, _)| i)
        .collect();
    let graph = GraphInTarget {
        points: mesh_vertex.iter().map(|&v| m.images[v].clone()).collect(),
        edges,
        pinned,
        rotation,
        params: Some(mesh_vertex.iter().map(|&v| m.vertices[v]).collect()),
        outer,
        realizations: Some(realizations),
    };
    graph.validate().map_err(stage("geodesic_graph"))?;
    Ok(GeodesicGraph {
        graph,
        mesh_vertex,
        split_off,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ShortnessViolation {
    pub x: SurfacePoint,
    pub y: SurfacePoint,
    pub target_distance: f64,
    pub w_distance: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KeyLemmaReport {
    /// Largest `d_W(p(x), p(y)) - <x - y>_s` over sample pairs.
    pub contraction_excess: f64,
    pub contraction_pairs: usize,
    /// Largest `|q(x) - q(y)| - d_W(x, y)` over sampled pairs, with W
    /// distances taken as computed (upper bounds).
    pub shortness_excess: f64,
    pub shortness_pairs: usize,
    /// Largest declared allowance among the W distances used.
    pub max_allowance: f64,
    /// Pairs whose W distance was verified as a geodesic length.
    pub exact_pairs: usize,
    pub shortness_violations: Vec<ShortnessViolation>,
    /// Largest `|q(p(x)) - s(x)|` over boundary sample vertices.
    pub boundary_error: f64,
    pub cat0: bool,
    pub isoperimetric: BoundaryArea,
    pub relax_valid: bool,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KeyLemmaResult {
    pub sample: Vec<usize>,
    pub on_boundary: Vec<bool>,
    pub split_off: Vec<usize>,
    pub gamma: Option<GeodesicGraph>,
    pub relaxed: Option<GraphInTarget>,
    pub relax_certificate: Option<MinimizationCertificate>,
    pub w: GluedDisc,
    /// W vertex of each sample entry.
    pub p: Vec<usize>,
    /// `<x - y>_s` between sample entries.
    pub sample_lengths: Vec<Vec<f64>>,
    /// Sampled points of W with their images under q.
    pub q_samples: Vec<(SurfacePoint, Vec<f64>)>,
    pub report: KeyLemmaReport,
}

/// Random points of W: by area on the triangles and by length on the
/// segment edges, half each when both are present.
pub fn sample_points(w: &PolyhedralDisc, count: usize, seed: u64) -> Vec<SurfacePoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let areas = cumulative_areas(w);
    let area = areas.last().copied().unwrap_or(0.0);
    let segments = w.segment_edges();
    let seg_len: Vec<f64> = segments
        .iter()
        .scan(0.0, |acc, &e| {
            *acc += w.edges[e].length;
            Some(*acc)
        })
        .collect();
    let total_seg = seg_len.last().copied().unwrap_or(0.0);
    (0..count)
        .map(|_| {
            let use_area = area > 0.0 && (total_seg <= 0.0 || rng.gen_bool(0.5));
            if use_area {
                random_point(w, &areas, &mut rng)
            } else if total_seg > 0.0 {
                let r = rng.gen_range(0.0..total_seg);
                let k = seg_len.partition_point(|&c| c <= r).min(segments.len() - 1);
                SurfacePoint::OnEdge {
                    edge: segments[k],
                    s: rng.gen_range(0.0..1.0),
                }
            } else {
                SurfacePoint::Vertex(rng.gen_range(0..w.vertex_count))
            }
        })
        .collect()
}

/// Runs the whole chain: geodesic graph, relaxation relative to the sampled
/// boundary vertices, gluing, and the three checks.
pub fn run_key_lemma(
    m: &MappedDisc,
    sample: &[usize],
    config: &KeyLemmaConfig,
) -> Result<KeyLemmaResult, PipelineError> {
    m.validate().map_err(stage("mesh"))?;
    if sample.is_empty() {
        return Err(PipelineError::EmptySample);
    }
    if let Some(&v) = sample.iter().find(|&&v| v >= m.vertex_count()) {
        return Err(PipelineError::BadVertex(v));
    }
    let boundary = m.is_boundary_vertex();
    let on_boundary: Vec<bool> = sample.iter().map(|&v| boundary[v]).collect();
    let graph = m.image_graph();
    let lengths: Vec<Vec<f64>> = sample
        .iter()
        .map(|&s| {
            let d = graph.dijkstra(s);
            sample.iter().map(|&t| d[t]).collect()
        })
        .collect();
    let trivial = |w: GluedDisc, p: Vec<usize>| {
        let iso = boundary_and_area(&w.disc);
        KeyLemmaResult {
            sample: sample.to_vec(),
            on_boundary: on_boundary.clone(),
            split_off: Vec::new(),
            gamma: None,
            relaxed: None,
            relax_certificate: None,
            w,
            p,
            sample_lengths: lengths.clone(),
            q_samples: Vec::new(),
            report: KeyLemmaReport {
                contraction_excess: 0.0,
                contraction_pairs: sample.len() * (sample.len() - 1) / 2,
                shortness_excess: 0.0,
                shortness_pairs: 0,
                max_allowance: 0.0,
                exact_pairs: 0,
                shortness_violations: Vec::new(),
                boundary_error: 0.0,
                cat0: true,
                isoperimetric: iso,
                relax_valid: true,
                pass: true,
            },
        }
    };
    if !on_boundary.iter().any(|&b| b) {
        // no boundary constraint: a one-point space will do
        let w = GluedDisc::point(m.images[sample[0]].clone());
        return Ok(trivial(w, vec![0; sample.len()]));
    }
    let gamma = geodesic_graph(m, sample)?;
    let (relaxed, cert) = relax(&gamma.graph, config.relax_tol, config.max_sweeps);
    let w = glue_disc(&relaxed).map_err(stage("glue_disc"))?;
    let graph_vertex: BTreeMap<usize, usize> =
        gamma.mesh_vertex.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    // split-off entries all go to one extra point; here they share vertex 0
    let p: Vec<usize> = sample
        .iter()
        .map(|v| graph_vertex.get(v).map_or(0, |&gv| w.vertex_of[gv]))
        .collect();

    let target = PolyhedralTarget::new(w.disc.clone(), config.steiner);
    let mut contraction_excess = f64::NEG_INFINITY;
    let mut pairs = 0;
    for i in 0..sample.len() {
        for j in i + 1..sample.len() {
            if !lengths[i][j].is_finite() {
                continue;
            }
            let d = target
                .measure(&SurfacePoint::Vertex(p[i]), &SurfacePoint::Vertex(p[j]))
                .length;
            contraction_excess = contraction_excess.max(d - lengths[i][j]);
            pairs += 1;
        }
    }
    if pairs == 0 {
        contraction_excess = 0.0;
    }
    let mut boundary_error: f64 = 0.0;
    for (i, &v) in sample.iter().enumerate() {
        if on_boundary[i] {
            let q = w.image(&SurfacePoint::Vertex(p[i]));
            boundary_error = boundary_error.max(dist(&q, &m.images[v]));
        }
    }
    // shortness of q on sampled pairs
    let pts = sample_points(&w.disc, 2 * config.pairs, config.seed);
    let images: Vec<Vec<f64>> = pts.iter().map(|x| w.image(x)).collect();
    let mut shortness_excess = f64::NEG_INFINITY;
    let mut max_allowance: f64 = 0.0;
    let mut violations = Vec::new();
    let mut exact = 0;
    for k in 0..config.pairs {
        let (a, b) = (2 * k, 2 * k + 1);
        let md = target.measure(&pts[a], &pts[b]);
        let td = dist(&images[a], &images[b]);
        max_allowance = max_allowance.max(md.allowance);
        if md.allowance <= 1e-8 * (1.0 + md.length) {
            exact += 1;
        }
        shortness_excess = shortness_excess.max(td - md.length);
        if td > md.length + 1e-9 * (1.0 + md.length) && violations.len() < 16 {
            violations.push(ShortnessViolation {
                x: pts[a].clone(),
                y: pts[b].clone(),
                target_distance: td,
                w_distance: md.length,
            });
        }
    }
    if config.pairs == 0 {
        shortness_excess = 0.0;
    }
    let cat0 = cat0_certificate(&w.disc, DEFAULT_TOL_ANGLE).pass;
    let iso = boundary_and_area(&w.disc);
    let pass = contraction_excess <= config.tol
        && boundary_error <= config.tol
        && violations.is_empty()
        && cat0
        && iso.isoperimetric;
    let q_samples = pts.into_iter().zip(images).take(64).collect();
    Ok(KeyLemmaResult {
        sample: sample.to_vec(),
        on_boundary,
        split_off: gamma.split_off.clone(),
        relaxed: Some(relaxed),
        relax_certificate: Some(cert.clone()),
        gamma: Some(gamma),
        w,
        p,
        sample_lengths: lengths,
        q_samples,
        report: KeyLemmaReport {
            contraction_excess,
            contraction_pairs: pairs,
            shortness_excess,
            shortness_pairs: config.pairs,
            max_allowance,
            exact_pairs: exact,
            shortness_violations: violations,
            boundary_error,
            cat0,
            isoperimetric: iso,
            relax_valid: cert.valid,
            pass,
        },
    })
}

/// Distortion of the sample under successively larger samples.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RefinementRow {
    pub sample_size: usize,
    pub w_vertices: usize,
    pub w_area: f64,
    pub contraction_excess: f64,
    /// Largest `<x - y>_s - d_W(p(x), p(y))` over pairs of the first sample.
    pub max_shrink: f64,
}

/// Runs the chain for each sample in a nested sequence and tabulates how
/// much the first sample's distances shrink in W. Observation only.
pub fn refinement_study(
    m: &MappedDisc,
    samples: &[Vec<usize>],
    config: &KeyLemmaConfig,
) -> Result<Vec<RefinementRow>, PipelineError> {
    let base = samples.first().ok_or(PipelineError::EmptySample)?;
    let mut rows = Vec::new();
    for s in samples {
        let config = KeyLemmaConfig { pairs: 0, ..config.clone() };
        let r = run_key_lemma(m, s, &config)?;
        let target = PolyhedralTarget::new(r.w.disc.clone(), config.steiner);
        let mut shrink: f64 = 0.0;
        for (i, &a) in base.iter().enumerate() {
            for (j, &b) in base.iter().enumerate().skip(i + 1) {
                let (ia, ib) = (
                    s.iter().position(|&v| v == a),
                    s.iter().position(|&v| v == b),
                );
                if let (Some(ia), Some(ib)) = (ia, ib) {
                    let d = target
                        .measure(&SurfacePoint::Vertex(r.p[ia]), &SurfacePoint::Vertex(r.p[ib]))
                        .length;
                    if r.sample_lengths[i][j].is_finite() {
                        shrink = shrink.max(r.sample_lengths[ia][ib] - d);
                    }
                }
            }
        }
        rows.push(RefinementRow {
            sample_size: s.len(),
            w_vertices: r.w.disc.vertex_count,
            w_area: r.report.isoperimetric.area,
            contraction_excess: r.report.contraction_excess,
            max_shrink: shrink,
        });
    }
    Ok(rows)
}

pub mod samples {
    use super::*;
    use crate::mesh::builders::grid;

    /// A grid disc mapped onto a bumpy saddle in R^3 with a sample of
    /// boundary and interior vertices.
    pub fn saddle_instance(seed: u64) -> (MappedDisc, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(5..9);
        let base = grid(n, n);
        let a = rng.gen_range(0.3..1.5);
        let bump = rng.gen_range(0.0..0.3);
        let phase = rng.gen_range(0.0..std::f64::consts::TAU);
        let images = base
            .vertices
            .iter()
            .map(|&[x, y]| {
                let (u, v) = (2.0 * x - 1.0, 2.0 * y - 1.0);
                let z = a * (u * u - v * v) + bump * (3.0 * u + phase).sin() * (2.0 * v).cos();
                vec![u, v, z]
            })
            .collect();
        let m = base.with_images(images);
        let boundary = &m.boundary_loop;
        let nb = rng.gen_range(3..=boundary.len().min(8));
        let mut sample: Vec<usize> = rand::seq::index::sample(&mut rng, boundary.len(), nb)
            .into_iter()
            .map(|i| boundary[i])
            .collect();
        let is_b = m.is_boundary_vertex();
        let interior: Vec<usize> = (0..m.vertex_count()).filter(|&v| !is_b[v]).collect();
        let ni = rng.gen_range(0..=interior.len().min(4));
        sample.extend(
            rand::seq::index::sample(&mut rng, interior.len(), ni)
                .into_iter()
                .map(|i| interior[i]),
        );
        (m, sample)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::builders::grid;

    #[test]
    fn flat_grid_corners() {
        let m = grid(4, 4);
        let sample = vec![0, 3, 15, 12];
        let r = run_key_lemma(&m, &sample, &KeyLemmaConfig { pairs: 500, ..Default::default() }).unwrap();
        assert!(r.report.pass, "{:?}", r.report);
        // the four corners stay at the square's corners; W is the square
        assert!((r.report.isoperimetric.area - 1.0).abs() < 1e-9);
        assert!((r.report.isoperimetric.length - 4.0).abs() < 1e-9);
    }

    #[test]
    fn interior_only_sample_is_a_point() {
        let m = grid(4, 4);
        let r = run_key_lemma(&m, &[5, 10], &KeyLemmaConfig::default()).unwrap();
        assert_eq!(r.w.disc.vertex_count, 1);
        assert!(r.report.pass);
    }

    #[test]
    fn saddle_instances_pass() {
        for seed in 0..4 {
            let (m, s) = samples::saddle_instance(seed);
            let r = run_key_lemma(&m, &s, &KeyLemmaConfig { pairs: 300, ..Default::default() }).unwrap();
            assert!(r.report.pass, "seed {seed}: {:?}", r.report);
        }
    }

    #[test]
    fn bad_input() {
        let m = grid(3, 3);
        assert!(matches!(run_key_lemma(&m, &[], &KeyLemmaConfig::default()), Err(PipelineError::EmptySample)));
        assert!(matches!(run_key_lemma(&m, &[99], &KeyLemmaConfig::default()), Err(PipelineError::BadVertex(99))));
    }
}
