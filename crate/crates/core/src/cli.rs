//! The `catmin` command line: one subcommand per module operation, JSON
//! reports on stdout, exit code 0 for PASS, 1 for FAIL and 2 for bad input.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::fields::{
    convergence_study, hyperbolic_paraboloid, laplacian, perturbation_evidence, solve_field_system, FieldError,
    HeightFieldPatch,
};
use crate::graphmin::{relax, GraphInTarget};
use crate::induced::{length_pseudometric, ordering_chain};
use crate::io::{parse_instance, InstanceFile, Payload, TargetDecl, ToleranceBlock};
use crate::majorization::glue::glue_disc;
use crate::majorization::{boundary_and_area, cat0_certificate, thin_triangle_test, PolyhedralDisc, DEFAULT_TOL_ANGLE};
use crate::mesh::{dist, MappedDisc};
use crate::pipeline::{run_key_lemma, KeyLemmaConfig};
use crate::saddle::{hexagon_counterexample, is_saddle_pl, shorten_by_rotation, FROZEN_HEXAGON, HEXAGON_ROTATION};
use crate::surface::PolyhedralTarget;
use crate::svg;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

/// Relative `--in` paths that do not exist are also looked up here.
pub const FIXTURES_ENV: &str = "CATMIN_FIXTURES";

#[derive(Parser, Debug)]
#[command(name = "catmin", version, about = "Metric-minimizing discs in CAT(0) spaces")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Instance file (JSON).
    #[arg(long = "in", global = true)]
    pub input: Option<PathBuf>,
    /// Where to write the JSON output.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Edge subdivision for length matrices, or the number of grids in a
    /// field convergence study.
    #[arg(long, global = true, default_value_t = 1)]
    pub refine: usize,
    /// Write an SVG figure here.
    #[arg(long, global = true)]
    pub svg: Option<PathBuf>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub tol_geo: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub tol_descent: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub tol_angle: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub tol_zero: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub tol_key: Option<f64>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Length, intrinsic and connecting pseudometrics and their ordering.
    Metrics,
    /// Relax a graph to a locally minimal one and certify it.
    MinimizeGraph {
        #[arg(long, default_value_t = 20_000)]
        max_iter: usize,
    },
    /// Relax a graph and glue its faces into a disc retract.
    BuildDisc {
        #[arg(long, default_value_t = 20_000)]
        max_iter: usize,
        /// Glue the graph as given.
        #[arg(long)]
        no_relax: bool,
    },
    /// Angle-sum certificate and thin-triangle sampling for a disc.
    CheckCat0 {
        #[arg(long, default_value_t = 200)]
        samples: usize,
    },
    /// Build W, p and q from a mapped disc and a vertex sample.
    KeyLemma {
        #[arg(long, default_value_t = 2_000)]
        pairs: usize,
        #[arg(long, default_value_t = 4)]
        steiner: usize,
    },
    /// Plane-separation test for a piecewise linear disc in R^3.
    CheckSaddle {
        #[arg(long, default_value_t = 200)]
        planes: usize,
    },
    /// The hexagon saddle disc and its shortening by rotation.
    Counterexample {
        #[arg(long, default_value_t = HEXAGON_ROTATION, allow_negative_numbers = true)]
        angle: f64,
    },
    /// Solve for the four fields on a height-field patch.
    SolveFields {
        /// Grid size of the default patch when no --in is given.
        #[arg(long, default_value_t = 33)]
        grid: usize,
    },
    /// Energy under random perturbations of a patch.
    Perturb {
        #[arg(long, default_value_t = 33)]
        grid: usize,
        #[arg(long, default_value_t = 100)]
        trials: usize,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Metrics => "metrics",
            Command::MinimizeGraph { .. } => "minimize-graph",
            Command::BuildDisc { .. } => "build-disc",
            Command::CheckCat0 { .. } => "check-cat0",
            Command::KeyLemma { .. } => "key-lemma",
            Command::CheckSaddle { .. } => "check-saddle",
            Command::Counterexample { .. } => "counterexample",
            Command::SolveFields { .. } => "solve-fields",
            Command::Perturb { .. } => "perturb",
        }
    }
}

/// Input problem, reported as `path: message` lines with exit code 2.
#[derive(Debug)]
pub struct InputError(pub Vec<String>);

impl InputError {
    fn one(msg: impl Into<String>) -> Self {
        InputError(vec![msg.into()])
    }
}

struct Outcome {
    pass: bool,
    report: Value,
    /// Instance written by `--out` instead of the report.
    artifact: Option<InstanceFile>,
    figure: Option<String>,
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("report serializes")
}

pub fn resolve_input(path: &Path) -> PathBuf {
    if path.exists() || path.is_absolute() {
        return path.to_path_buf();
    }
    match std::env::var_os(FIXTURES_ENV) {
        Some(dir) => {
            let alt = Path::new(&dir).join(path);
            if alt.exists() {
                alt
            } else {
                path.to_path_buf()
            }
        }
        None => path.to_path_buf(),
    }
}

pub fn load_instance(path: &Path) -> Result<InstanceFile, InputError> {
    let path = resolve_input(path);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| InputError::one(format!("{}: {e}", path.display())))?;
    parse_instance(&text).map_err(|d| InputError(d.iter().map(|d| format!("{}: {d}", path.display())).collect()))
}

fn tolerances(common: &Common, file: &ToleranceBlock) -> Result<ToleranceBlock, InputError> {
    let flags = ToleranceBlock {
        geo: common.tol_geo,
        descent: common.tol_descent,
        angle: common.tol_angle,
        zero: common.tol_zero,
        key_lemma: common.tol_key,
    };
    let bad: Vec<String> = flags
        .entries()
        .iter()
        .filter_map(|&(name, v)| {
            let t = v?;
            (!(t.is_finite() && t > 0.0)).then(|| {
                let flag = if name == "key_lemma" { "key".to_string() } else { name.to_string() };
                format!("--tol-{flag}: must be positive and finite, found {t}")
            })
        })
        .collect();
    if !bad.is_empty() {
        return Err(InputError(bad));
    }
    Ok(file.overridden_by(&flags))
}

fn wrong_payload(command: &str, wanted: &str, inst: &InstanceFile) -> InputError {
    InputError::one(format!(
        "payload: {command} needs a {wanted} payload, found {}",
        inst.payload.kind()
    ))
}

fn require_input(common: &Common) -> Result<InstanceFile, InputError> {
    match &common.input {
        Some(p) => load_instance(p),
        None => Err(InputError::one("--in: an instance file is required")),
    }
}

fn mapped_disc_of(command: &str, inst: &InstanceFile) -> Result<MappedDisc, InputError> {
    match &inst.payload {
        Payload::MappedDisc(m) => Ok(m.clone()),
        _ => Err(wrong_payload(command, "mapped_disc", inst)),
    }
}

fn graph_of(command: &str, inst: &InstanceFile) -> Result<GraphInTarget, InputError> {
    match &inst.payload {
        Payload::Graph(g) => Ok(g.clone()),
        _ => Err(wrong_payload(command, "graph", inst)),
    }
}

fn patch_of(command: &str, common: &Common, grid: usize) -> Result<(HeightFieldPatch, ToleranceBlock), InputError> {
    match &common.input {
        None => {
            if grid < 4 {
                return Err(InputError::one(format!("--grid: need at least 4 nodes per side, found {grid}")));
            }
            Ok((hyperbolic_paraboloid(grid, 1.0), tolerances(common, &ToleranceBlock::default())?))
        }
        Some(p) => {
            let inst = load_instance(p)?;
            let tol = tolerances(common, &inst.tolerances)?;
            match inst.payload {
                Payload::HeightField(s) => Ok((s, tol)),
                _ => Err(wrong_payload(command, "height_field", &inst)),
            }
        }
    }
}

fn input_error<E: std::fmt::Display>(e: E) -> InputError {
    InputError::one(format!("payload: {e}"))
}

fn metrics(common: &Common) -> Result<Outcome, InputError> {
    let inst = require_input(common)?;
    let m = mapped_disc_of("metrics", &inst)?;
    let tol = tolerances(common, &inst.tolerances)?;
    let r = ordering_chain(&m, tol.zero_tol()).map_err(input_error)?;
    let mut report = json!({ "ordering": to_value(&r) });
    if common.refine > 1 {
        let fine = length_pseudometric(&m, common.refine).map_err(input_error)?;
        report["length_refined"] = json!({ "refine": common.refine, "matrix": to_value(&fine) });
    }
    Ok(Outcome {
        pass: r.pass,
        report,
        artifact: None,
        figure: Some(svg::domain_svg(&m, None)),
    })
}

fn minimize_graph(common: &Common, max_iter: usize) -> Result<Outcome, InputError> {
    let inst = require_input(common)?;
    let g = graph_of("minimize-graph", &inst)?;
    let tol = tolerances(common, &inst.tolerances)?;
    let (out, cert) = relax(&g, tol.relax(), max_iter);
    let report = json!({
        "length_before": g.total_length(),
        "length_after": out.total_length(),
        "worst_descent": cert.worst_descent(),
        "worst_residual": cert.worst_residual(),
        "min_angle_sum": if cert.angle_sums.is_empty() { Value::Null } else { json!(cert.min_angle_sum()) },
        "certificate": to_value(&cert),
    });
    let figure = svg::graph_svg(&out);
    let mut artifact = InstanceFile::graph(out);
    artifact.target = inst.target.clone();
    artifact.tolerances = inst.tolerances.clone();
    Ok(Outcome {
        pass: cert.valid,
        report,
        artifact: Some(artifact),
        figure: Some(figure),
    })
}

fn build_disc(common: &Common, max_iter: usize, no_relax: bool) -> Result<Outcome, InputError> {
    let inst = require_input(common)?;
    let g = graph_of("build-disc", &inst)?;
    let tol = tolerances(common, &inst.tolerances)?;
    let (g, cert) = if no_relax {
        (g, None)
    } else {
        let (out, cert) = relax(&g, tol.relax(), max_iter);
        (out, Some(cert))
    };
    let w = glue_disc(&g).map_err(input_error)?;
    let cat0 = cat0_certificate(&w.disc, tol.angle.unwrap_or(DEFAULT_TOL_ANGLE));
    let ba = boundary_and_area(&w.disc);
    let relaxed = cert.as_ref().map_or(true, |c| c.valid);
    let report = json!({
        "relax_valid": cert.as_ref().map(|c| c.valid),
        "relax_iterations": cert.as_ref().map(|c| c.iterations),
        "vertices": w.disc.vertex_count,
        "triangles": w.disc.triangles.len(),
        "segments": w.disc.segment_edges().len(),
        "cat0": to_value(&cat0),
        "boundary_and_area": to_value(&ba),
    });
    Ok(Outcome {
        pass: relaxed && cat0.pass && ba.isoperimetric,
        report,
        artifact: Some(InstanceFile::polyhedral_disc(&w.disc, 4)),
        figure: Some(svg::disc_layout_svg(&w.disc)),
    })
}

/// The flat disc with the image lengths of the mesh edges.
fn induced_disc(m: &MappedDisc) -> Result<PolyhedralDisc, InputError> {
    m.validate().map_err(input_error)?;
    PolyhedralDisc::from_triangles(m.vertex_count(), &m.triangles, |a, b| dist(&m.images[a], &m.images[b]))
        .map_err(input_error)
}

fn check_cat0(common: &Common, samples: usize) -> Result<Outcome, InputError> {
    let inst = require_input(common)?;
    let tol = tolerances(common, &inst.tolerances)?;
    let (w, steiner) = match (&inst.payload, &inst.target) {
        (Payload::PolyhedralDisc(spec), TargetDecl::Polyhedral { steiner }) => {
            (spec.build().map_err(input_error)?, *steiner)
        }
        (Payload::MappedDisc(m), _) => (induced_disc(m)?, 4),
        _ => return Err(wrong_payload("check-cat0", "polyhedral_disc or mapped_disc", &inst)),
    };
    let cert = cat0_certificate(&w, tol.angle.unwrap_or(DEFAULT_TOL_ANGLE));
    let thin = if w.triangles.is_empty() && w.edges.is_empty() {
        None
    } else {
        Some(thin_triangle_test(&PolyhedralTarget::new(w.clone(), steiner.max(1)), samples, common.seed))
    };
    let thin_ok = thin.as_ref().map_or(true, |t| t.positive_violations == 0);
    let report = json!({
        "certificate": to_value(&cert),
        "thin_triangles": thin.as_ref().map(to_value),
        "steiner": steiner,
    });
    Ok(Outcome {
        pass: cert.pass && thin_ok,
        report,
        artifact: None,
        figure: Some(svg::disc_layout_svg(&w)),
    })
}

fn key_lemma(common: &Common, pairs: usize, steiner: usize) -> Result<Outcome, InputError> {
    let inst = require_input(common)?;
    let m = mapped_disc_of("key-lemma", &inst)?;
    let tol = tolerances(common, &inst.tolerances)?;
    let sample = inst.sample.clone().unwrap_or_else(|| m.boundary_loop.clone());
    let d = KeyLemmaConfig::default();
    let config = KeyLemmaConfig {
        steiner: steiner.max(1),
        pairs,
        seed: common.seed,
        tol: tol.key_lemma.unwrap_or(d.tol),
        relax_tol: tol.relax(),
        max_sweeps: d.max_sweeps,
    };
    let r = run_key_lemma(&m, &sample, &config).map_err(input_error)?;
    let ba = boundary_and_area(&r.w.disc);
    let report = json!({
        "sample": r.sample,
        "split_off": r.split_off,
        "p": r.p,
        "w_vertices": r.w.disc.vertex_count,
        "w_triangles": r.w.disc.triangles.len(),
        "w_boundary_and_area": to_value(&ba),
        "config": to_value(&config),
        "report": to_value(&r.report),
    });
    let figure = svg::domain_svg(&m, r.gamma.as_ref().map(|g| &g.graph));
    Ok(Outcome {
        pass: r.report.pass,
        report,
        artifact: None,
        figure: Some(figure),
    })
}

fn check_saddle(common: &Common, planes: usize) -> Result<Outcome, InputError> {
    let inst = require_input(common)?;
    let m = mapped_disc_of("check-saddle", &inst)?;
    let r = is_saddle_pl(&m, planes, common.seed).map_err(input_error)?;
    Ok(Outcome {
        pass: r.is_saddle(),
        report: json!({ "saddle": to_value(&r) }),
        artifact: None,
        figure: Some(svg::domain_svg(&m, None)),
    })
}

fn counterexample(common: &Common, angle: f64) -> Result<Outcome, InputError> {
    let m = hexagon_counterexample(&FROZEN_HEXAGON).map_err(input_error)?;
    let saddle = is_saddle_pl(&m, 200, common.seed).map_err(input_error)?;
    let (_, shortening) = shorten_by_rotation(&m, angle).map_err(|e| InputError::one(format!("--angle: {e}")))?;
    let report = json!({
        "params": to_value(&FROZEN_HEXAGON),
        "saddle": to_value(&saddle),
        "shortening": to_value(&shortening),
        "pareto_decrease": shortening.is_pareto_decrease(1e-4),
    });
    let figure = svg::domain_svg(&m, None);
    Ok(Outcome {
        pass: saddle.is_saddle() && shortening.is_pareto_decrease(1e-4),
        report,
        artifact: Some(InstanceFile::mapped_disc(m)),
        figure: Some(figure),
    })
}

// positivity loss is a verdict; everything else means the patch is unusable
fn field_outcome(e: FieldError) -> Result<Outcome, InputError> {
    match e {
        FieldError::Positivity { .. } => Ok(Outcome {
            pass: false,
            report: json!({ "error": e.to_string() }),
            artifact: None,
            figure: None,
        }),
        _ => Err(input_error(e)),
    }
}

fn solve_fields(common: &Common, grid: usize) -> Result<Outcome, InputError> {
    let (s, _) = patch_of("solve-fields", common, grid)?;
    if common.input.is_none() && common.refine > 1 {
        // convergence on the default saddle with halved spacing
        let patches: Vec<HeightFieldPatch> = (0..common.refine)
            .map(|k| hyperbolic_paraboloid((grid - 1) * (1 << k) + 1, 1.0))
            .collect();
        let rows = match convergence_study(&patches) {
            Ok(rows) => rows,
            Err(e) => return field_outcome(e),
        };
        let orders_ok = rows.iter().filter_map(|r| r.order).all(|o| (1.5..=2.5).contains(&o));
        let lambda_ok = rows.iter().all(|r| r.min_lambda > 0.0);
        return Ok(Outcome {
            pass: orders_ok && lambda_ok,
            report: json!({ "convergence": to_value(&rows) }),
            artifact: None,
            figure: None,
        });
    }
    let v = match solve_field_system(&s) {
        Ok(v) => v,
        Err(e) => return field_outcome(e),
    };
    let residual = laplacian(&s, &v).map_err(input_error)?.max_norm();
    let min_lambda = v.min_lambda();
    Ok(Outcome {
        pass: min_lambda > 0.0,
        report: json!({
            "h": s.h,
            "residual": residual,
            "min_lambda": min_lambda,
            "lambda": v.lambda,
        }),
        artifact: None,
        figure: None,
    })
}

fn perturb(common: &Common, grid: usize, trials: usize) -> Result<Outcome, InputError> {
    let (s, _) = patch_of("perturb", common, grid)?;
    let v = match solve_field_system(&s) {
        Ok(v) => v,
        Err(e) => return field_outcome(e),
    };
    let r = perturbation_evidence(&s, &v, trials, common.seed).map_err(input_error)?;
    Ok(Outcome {
        pass: r.pass,
        report: json!({
            "h": s.h,
            "min_lambda": v.min_lambda(),
            "perturbation": to_value(&r),
        }),
        artifact: None,
        figure: None,
    })
}

fn execute(cli: &Cli) -> Result<Outcome, InputError> {
    let c = &cli.common;
    if c.refine == 0 {
        return Err(InputError::one("--refine: must be at least 1"));
    }
    match &cli.command {
        Command::Metrics => metrics(c),
        Command::MinimizeGraph { max_iter } => minimize_graph(c, *max_iter),
        Command::BuildDisc { max_iter, no_relax } => build_disc(c, *max_iter, *no_relax),
        Command::CheckCat0 { samples } => check_cat0(c, *samples),
        Command::KeyLemma { pairs, steiner } => key_lemma(c, *pairs, *steiner),
        Command::CheckSaddle { planes } => check_saddle(c, *planes),
        Command::Counterexample { angle } => counterexample(c, *angle),
        Command::SolveFields { grid } => solve_fields(c, *grid),
        Command::Perturb { grid, trials } => perturb(c, *grid, *trials),
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), InputError> {
    std::fs::write(path, text).map_err(|e| InputError::one(format!("{}: {e}", path.display())))
}

/// Runs one command; `args` includes the program name.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(stderr, "{e}");
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_PASS };
        }
    };
    let name = cli.command.name();
    let fail = |stderr: &mut dyn Write, e: InputError| {
        for line in e.0 {
            let _ = writeln!(stderr, "catmin {name}: {line}");
        }
        EXIT_INPUT
    };
    let outcome = match execute(&cli) {
        Ok(o) => o,
        Err(e) => return fail(stderr, e),
    };
    let verdict = if outcome.pass { "PASS" } else { "FAIL" };
    let report = json!({
        "command": name,
        "verdict": verdict,
        "seed": cli.common.seed,
        "result": outcome.report,
    });
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    if let Some(path) = &cli.common.out {
        let body = match &outcome.artifact {
            Some(inst) => inst.to_json(),
            None => text.clone(),
        };
        if let Err(e) = write_file(path, &body) {
            return fail(stderr, e);
        }
    }
    if let Some(path) = &cli.common.svg {
        match &outcome.figure {
            Some(fig) => {
                if let Err(e) = write_file(path, fig) {
                    return fail(stderr, e);
                }
            }
            None => {
                let _ = writeln!(stderr, "catmin {name}: no figure for this command, --svg ignored");
            }
        }
    }
    let _ = stdout.write_all(text.as_bytes());
    let _ = writeln!(stderr, "catmin {name}: {verdict}");
    if outcome.pass {
        EXIT_PASS
    } else {
        EXIT_FAIL
    }
}
