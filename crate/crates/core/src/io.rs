//! JSON instance files: a target declaration, one geometric payload, an
//! optional vertex sample and a tolerances block.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::fields::HeightFieldPatch;
use crate::graphmin::{GraphInTarget, Tolerances};
use crate::majorization::{DiscEdge, MajorizationError, PolyhedralDisc};
use crate::mesh::MappedDisc;
use crate::metric::DEFAULT_ZERO_TOL;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetDecl {
    Euclidean { dim: usize },
    /// A polyhedral disc used as the target; `steiner` points per edge for
    /// the distance graph.
    Polyhedral { steiner: usize },
}

/// Triangle face of a polyhedral disc: side `i` runs from `vertices[i]` to
/// `vertices[i + 1]` along `edges[i]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscFace {
    pub vertices: [usize; 3],
    pub edges: [usize; 3],
}

/// A polyhedral disc given by its edge lengths; shapes and angle sums are
/// recomputed on load.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscSpec {
    pub vertex_count: usize,
    pub edges: Vec<DiscEdge>,
    pub faces: Vec<DiscFace>,
    pub boundary: Vec<usize>,
    pub boundary_edges: Vec<usize>,
}

impl DiscSpec {
    pub fn from_disc(w: &PolyhedralDisc) -> Self {
        DiscSpec {
            vertex_count: w.vertex_count,
            edges: w.edges.clone(),
            faces: w
                .triangles
                .iter()
                .map(|t| DiscFace {
                    vertices: t.vertices,
                    edges: t.edges,
                })
                .collect(),
            boundary: w.boundary.clone(),
            boundary_edges: w.boundary_edges.clone(),
        }
    }

    pub fn build(&self) -> Result<PolyhedralDisc, MajorizationError> {
        let faces: Vec<([usize; 3], [usize; 3])> = self.faces.iter().map(|f| (f.vertices, f.edges)).collect();
        PolyhedralDisc::assemble(
            self.vertex_count,
            self.edges.clone(),
            &faces,
            self.boundary.clone(),
            self.boundary_edges.clone(),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    MappedDisc(MappedDisc),
    Graph(GraphInTarget),
    HeightField(HeightFieldPatch),
    PolyhedralDisc(DiscSpec),
}

impl Payload {
    pub fn kind(&self) -> &'static str {
        match self {
            Payload::MappedDisc(_) => "mapped_disc",
            Payload::Graph(_) => "graph",
            Payload::HeightField(_) => "height_field",
            Payload::PolyhedralDisc(_) => "polyhedral_disc",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub descent: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angle: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zero: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key_lemma: Option<f64>,
}

impl ToleranceBlock {
    pub fn entries(&self) -> [(&'static str, Option<f64>); 5] {
        [
            ("geo", self.geo),
            ("descent", self.descent),
            ("angle", self.angle),
            ("zero", self.zero),
            ("key_lemma", self.key_lemma),
        ]
    }

    /// Values set in `other` replace ours.
    pub fn overridden_by(&self, other: &ToleranceBlock) -> ToleranceBlock {
        ToleranceBlock {
            geo: other.geo.or(self.geo),
            descent: other.descent.or(self.descent),
            angle: other.angle.or(self.angle),
            zero: other.zero.or(self.zero),
            key_lemma: other.key_lemma.or(self.key_lemma),
        }
    }

    pub fn relax(&self) -> Tolerances {
        let d = Tolerances::default();
        Tolerances {
            geo: self.geo.unwrap_or(d.geo),
            descent: self.descent.unwrap_or(d.descent),
            angle: self.angle.unwrap_or(d.angle),
        }
    }

    pub fn zero_tol(&self) -> f64 {
        self.zero.unwrap_or(DEFAULT_ZERO_TOL)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub version: u32,
    pub target: TargetDecl,
    pub payload: Payload,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "is_default")]
    pub tolerances: ToleranceBlock,
}

fn is_default(t: &ToleranceBlock) -> bool {
    *t == ToleranceBlock::default()
}

impl InstanceFile {
    pub fn new(target: TargetDecl, payload: Payload) -> Self {
        InstanceFile {
            version: FORMAT_VERSION,
            target,
            payload,
            sample: None,
            tolerances: ToleranceBlock::default(),
        }
    }

    pub fn mapped_disc(m: MappedDisc) -> Self {
        let dim = m.image_dim();
        Self::new(TargetDecl::Euclidean { dim }, Payload::MappedDisc(m))
    }

    pub fn graph(g: GraphInTarget) -> Self {
        let dim = g.dim();
        Self::new(TargetDecl::Euclidean { dim }, Payload::Graph(g))
    }

    pub fn height_field(s: HeightFieldPatch) -> Self {
        Self::new(TargetDecl::Euclidean { dim: 3 }, Payload::HeightField(s))
    }

    pub fn polyhedral_disc(w: &PolyhedralDisc, steiner: usize) -> Self {
        Self::new(TargetDecl::Polyhedral { steiner }, Payload::PolyhedralDisc(DiscSpec::from_disc(w)))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("instance serializes");
        s.push('\n');
        s
    }
}

/// One finding: `path` names the offending field (or the source position
/// for syntax errors).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

struct Sink(Vec<Diagnostic>);

impl Sink {
    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(Diagnostic {
            path: path.into(),
            message: message.into(),
        });
    }

    fn index(&mut self, path: String, value: usize, bound: usize, what: &str) -> bool {
        if value >= bound {
            self.push(path, format!("{what} index {value} out of range (must be below {bound})"));
            return false;
        }
        true
    }

    fn finite(&mut self, path: String, xs: &[f64]) -> bool {
        if xs.iter().any(|x| !x.is_finite()) {
            self.push(path, "non-finite coordinate");
            return false;
        }
        true
    }
}

/// Parses JSON text, reporting syntax and schema errors with their line
/// and column, then runs [`validate`].
pub fn parse_instance(text: &str) -> Result<InstanceFile, Vec<Diagnostic>> {
    let inst: InstanceFile = serde_json::from_str(text).map_err(|e| {
        let at = format!(" at line {} column {}", e.line(), e.column());
        let full = e.to_string();
        vec![Diagnostic {
            path: at[4..].to_string(),
            message: full.strip_suffix(&at).unwrap_or(&full).to_string(),
        }]
    })?;
    let diags = validate(&inst);
    if diags.is_empty() {
        Ok(inst)
    } else {
        Err(diags)
    }
}

/// Schema and invariant check; diagnostics come in field order.
pub fn validate(inst: &InstanceFile) -> Vec<Diagnostic> {
    let mut out = Sink(Vec::new());
    if inst.version != FORMAT_VERSION {
        out.push(
            "version",
            format!("unsupported version {} (expected {FORMAT_VERSION})", inst.version),
        );
    }
    match (&inst.target, &inst.payload) {
        (TargetDecl::Euclidean { dim }, Payload::PolyhedralDisc(_)) => out.push(
            "target",
            format!("polyhedral_disc payload needs a polyhedral target, found euclidean dim {dim}"),
        ),
        (TargetDecl::Polyhedral { .. }, p @ (Payload::MappedDisc(_) | Payload::Graph(_) | Payload::HeightField(_))) => {
            out.push("target", format!("{} payload needs a euclidean target", p.kind()))
        }
        (TargetDecl::Euclidean { dim: 0 }, _) => out.push("target.dim", "dimension must be positive"),
        (TargetDecl::Euclidean { dim }, Payload::HeightField(_)) if *dim != 3 => {
            out.push("target.dim", format!("height_field payload lives in dimension 3, found {dim}"))
        }
        _ => {}
    }
    let dim = match inst.target {
        TargetDecl::Euclidean { dim } => Some(dim),
        TargetDecl::Polyhedral { .. } => None,
    };
    match &inst.payload {
        Payload::MappedDisc(m) => check_mapped_disc(&mut out, m, dim),
        Payload::Graph(g) => check_graph(&mut out, g, dim),
        Payload::HeightField(s) => check_height_field(&mut out, s),
        Payload::PolyhedralDisc(w) => check_disc(&mut out, w),
    }
    if let Some(sample) = &inst.sample {
        match &inst.payload {
            Payload::MappedDisc(m) => {
                for (k, &v) in sample.iter().enumerate() {
                    out.index(format!("sample[{k}]"), v, m.vertices.len(), "vertex");
                }
            }
            p => out.push("sample", format!("a sample is only read with mapped_disc payloads, not {}", p.kind())),
        }
    }
    for (name, value) in inst.tolerances.entries() {
        if let Some(t) = value {
            if !(t.is_finite() && t > 0.0) {
                out.push(format!("tolerances.{name}"), format!("must be positive and finite, found {t}"));
            }
        }
    }
    out.0
}

fn check_dim(out: &mut Sink, path: String, p: &[f64], dim: Option<usize>) -> bool {
    if let Some(d) = dim {
        if p.len() != d {
            out.push(path, format!("point has dimension {}, target has {d}", p.len()));
            return false;
        }
    }
    out.finite(path, p)
}

fn check_mapped_disc(out: &mut Sink, m: &MappedDisc, dim: Option<usize>) {
    let before = out.0.len();
    let n = m.vertices.len();
    for (i, v) in m.vertices.iter().enumerate() {
        out.finite(format!("payload.vertices[{i}]"), v);
    }
    if m.images.len() != n {
        out.push(
            "payload.images",
            format!("{} images for {n} vertices", m.images.len()),
        );
    }
    for (i, p) in m.images.iter().enumerate() {
        check_dim(out, format!("payload.images[{i}]"), p, dim);
    }
    for (t, tri) in m.triangles.iter().enumerate() {
        for (k, &v) in tri.iter().enumerate() {
            out.index(format!("payload.triangles[{t}][{k}]"), v, n, "vertex");
        }
    }
    for (k, &v) in m.boundary_loop.iter().enumerate() {
        out.index(format!("payload.boundary_loop[{k}]"), v, n, "vertex");
    }
    if out.0.len() == before {
        if let Err(e) = m.validate() {
            out.push("payload", e.to_string());
        }
    }
}

fn check_graph(out: &mut Sink, g: &GraphInTarget, dim: Option<usize>) {
    let before = out.0.len();
    let n = g.points.len();
    let darts = 2 * g.edges.len();
    for (i, p) in g.points.iter().enumerate() {
        check_dim(out, format!("payload.points[{i}]"), p, dim);
    }
    for (e, ends) in g.edges.iter().enumerate() {
        for (k, &v) in ends.iter().enumerate() {
            out.index(format!("payload.edges[{e}][{k}]"), v, n, "vertex");
        }
    }
    for (k, &v) in g.pinned.iter().enumerate() {
        out.index(format!("payload.pinned[{k}]"), v, n, "vertex");
    }
    if g.rotation.len() != n {
        out.push(
            "payload.rotation",
            format!("{} rotation lists for {n} vertices", g.rotation.len()),
        );
    }
    for (v, list) in g.rotation.iter().enumerate() {
        for (k, &d) in list.iter().enumerate() {
            out.index(format!("payload.rotation[{v}][{k}]"), d, darts, "dart");
        }
    }
    if let Some(params) = &g.params {
        if params.len() != n {
            out.push("payload.params", format!("{} params for {n} vertices", params.len()));
        }
        for (i, p) in params.iter().enumerate() {
            out.finite(format!("payload.params[{i}]"), p);
        }
    }
    if let Some(d) = g.outer {
        out.index("payload.outer".to_string(), d, darts, "dart");
    }
    if let Some(real) = &g.realizations {
        if real.len() != g.edges.len() {
            out.push(
                "payload.realizations",
                format!("{} realizations for {} edges", real.len(), g.edges.len()),
            );
        }
        for (e, line) in real.iter().enumerate() {
            for (k, p) in line.iter().enumerate() {
                check_dim(out, format!("payload.realizations[{e}][{k}]"), p, dim);
            }
        }
    }
    if out.0.len() == before {
        if let Err(e) = g.validate() {
            out.push("payload", e.to_string());
        }
    }
}

fn check_height_field(out: &mut Sink, s: &HeightFieldPatch) {
    let before = out.0.len();
    if !(s.h.is_finite() && s.h > 0.0) {
        out.push("payload.h", format!("spacing must be positive, found {}", s.h));
    }
    out.finite("payload.origin".to_string(), &s.origin);
    if s.values.len() != s.nx * s.ny {
        out.push(
            "payload.values",
            format!("{} values for a {} x {} grid", s.values.len(), s.nx, s.ny),
        );
    }
    for (k, v) in s.values.iter().enumerate() {
        out.finite(format!("payload.values[{k}]"), v);
    }
    if out.0.len() == before {
        if let Err(e) = s.validate() {
            out.push("payload", e.to_string());
        }
    }
}

fn check_disc(out: &mut Sink, w: &DiscSpec) {
    let before = out.0.len();
    let n = w.vertex_count;
    let ne = w.edges.len();
    if n == 0 {
        out.push("payload.vertex_count", "a disc needs at least one vertex");
    }
    for (e, edge) in w.edges.iter().enumerate() {
        for (k, &v) in edge.ends.iter().enumerate() {
            out.index(format!("payload.edges[{e}].ends[{k}]"), v, n, "vertex");
        }
        if !(edge.length.is_finite() && edge.length >= 0.0) {
            out.push(
                format!("payload.edges[{e}].length"),
                format!("length must be finite and non-negative, found {}", edge.length),
            );
        }
    }
    for (t, f) in w.faces.iter().enumerate() {
        for (k, &v) in f.vertices.iter().enumerate() {
            out.index(format!("payload.faces[{t}].vertices[{k}]"), v, n, "vertex");
        }
        for (k, &e) in f.edges.iter().enumerate() {
            if out.index(format!("payload.faces[{t}].edges[{k}]"), e, ne, "edge") {
                let mut ends = w.edges[e].ends;
                let mut side = [f.vertices[k], f.vertices[(k + 1) % 3]];
                ends.sort_unstable();
                side.sort_unstable();
                if ends != side {
                    out.push(
                        format!("payload.faces[{t}].edges[{k}]"),
                        format!("edge {e} does not join vertices {} and {}", side[0], side[1]),
                    );
                }
            }
        }
    }
    for (k, &v) in w.boundary.iter().enumerate() {
        out.index(format!("payload.boundary[{k}]"), v, n, "vertex");
    }
    for (k, &e) in w.boundary_edges.iter().enumerate() {
        out.index(format!("payload.boundary_edges[{k}]"), e, ne, "edge");
    }
    if out.0.len() == before {
        if let Err(e) = w.build() {
            out.push("payload", e.to_string());
        }
    }
}

/// The instances shipped in `fixtures/`, by file name.
pub mod fixtures {
    use std::f64::consts::PI;

    use super::InstanceFile;
    use crate::fields::hyperbolic_paraboloid;
    use crate::graphmin::samples as graphs;
    use crate::majorization::cone_disc;
    use crate::mesh::builders;
    use crate::pipeline::samples::saddle_instance;
    use crate::saddle::{hexagon_counterexample, FROZEN_HEXAGON};

    /// Flat 4 x 4 grid in the plane z = 0.
    pub fn flat() -> InstanceFile {
        InstanceFile::mapped_disc(builders::grid(4, 4))
    }

    /// Five triangles around a cone point of total angle `3 pi / 2`.
    pub fn cone5() -> InstanceFile {
        InstanceFile::polyhedral_disc(&cone_disc(5, 1.5 * PI), 16)
    }

    /// Five triangles around a cone point of total angle `5 pi / 2`.
    pub fn cone5_wide() -> InstanceFile {
        InstanceFile::polyhedral_disc(&cone_disc(5, 2.5 * PI), 4)
    }

    pub fn hexagon() -> InstanceFile {
        InstanceFile::mapped_disc(hexagon_counterexample(&FROZEN_HEXAGON).expect("frozen parameters are valid"))
    }

    /// A free centre far from the Fermat point of its three pinned corners.
    pub fn star() -> InstanceFile {
        InstanceFile::graph(graphs::star(
            vec![1.8, 1.2],
            [[0.0, 0.0], [2.0, 0.0], [0.5, 1.5]],
        ))
    }

    pub fn random_graph() -> InstanceFile {
        InstanceFile::graph(graphs::random_disc_graph(1))
    }

    /// Bumpy saddle grid with a vertex sample.
    pub fn saddle_sample() -> InstanceFile {
        let (m, sample) = saddle_instance(0);
        let mut inst = InstanceFile::mapped_disc(m);
        inst.sample = Some(sample);
        inst
    }

    pub fn paraboloid() -> InstanceFile {
        InstanceFile::height_field(hyperbolic_paraboloid(17, 1.0))
    }

    pub fn all() -> Vec<(&'static str, InstanceFile)> {
        vec![
            ("flat.json", flat()),
            ("cone5.json", cone5()),
            ("cone5_wide.json", cone5_wide()),
            ("hexagon.json", hexagon()),
            ("star.json", star()),
            ("random_graph.json", random_graph()),
            ("saddle_sample.json", saddle_sample()),
            ("paraboloid.json", paraboloid()),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphmin::samples;
    use crate::majorization::cone_disc;
    use crate::mesh::builders;

    fn roundtrip(inst: &InstanceFile) {
        let text = inst.to_json();
        let back = parse_instance(&text).unwrap();
        assert_eq!(&back, inst);
        assert_eq!(back.to_json(), text);
    }

    #[test]
    fn payloads_roundtrip() {
        let mut m = InstanceFile::mapped_disc(builders::grid(3, 3));
        m.sample = Some(vec![0, 2, 8]);
        m.tolerances.zero = Some(1e-7);
        roundtrip(&m);
        roundtrip(&InstanceFile::graph(samples::random_disc_graph(3)));
        roundtrip(&InstanceFile::height_field(crate::fields::hyperbolic_paraboloid(5, 1.0)));
        roundtrip(&InstanceFile::polyhedral_disc(&cone_disc(5, 5.0), 4));
    }

    #[test]
    fn disc_spec_rebuilds_the_disc() {
        let w = cone_disc(6, 7.0);
        assert_eq!(DiscSpec::from_disc(&w).build().unwrap(), w);
    }

    #[test]
    fn bad_triangle_index_names_the_field() {
        let mut m = builders::grid(3, 3);
        m.triangles[3][1] = 9;
        let d = validate(&InstanceFile::mapped_disc(m));
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].path, "payload.triangles[3][1]");
    }

    #[test]
    fn negative_tolerance() {
        let mut m = InstanceFile::mapped_disc(builders::grid(3, 3));
        m.tolerances.angle = Some(-1e-6);
        let d = validate(&m);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].path, "tolerances.angle");
    }

    #[test]
    fn syntax_errors_carry_position() {
        let d = parse_instance("{\n  \"version\": 1,\n  \"target\": }").unwrap_err();
        assert_eq!(d.len(), 1);
        assert!(d[0].path.starts_with("line 3 column"), "{}", d[0].path);
        let d = parse_instance("{\"version\": 1}").unwrap_err();
        assert!(d[0].message.contains("missing field"));
    }

    #[test]
    fn target_mismatch() {
        let mut m = InstanceFile::mapped_disc(builders::grid(3, 3));
        m.target = TargetDecl::Euclidean { dim: 2 };
        let d = validate(&m);
        assert_eq!(d.len(), 9);
        assert_eq!(d[0].path, "payload.images[0]");
        let mut w = InstanceFile::polyhedral_disc(&cone_disc(5, 5.0), 4);
        w.target = TargetDecl::Euclidean { dim: 2 };
        assert_eq!(validate(&w)[0].path, "target");
    }
}
