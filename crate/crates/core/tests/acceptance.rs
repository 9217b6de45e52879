//! The ten acceptance criteria. Each test prints one `PASS`/`FAIL` line to
//! the real stdout (not the captured one) and then asserts.

use std::f64::consts::PI;
use std::io::Write;
use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::Instant;

use catmin::fields::{
    convergence_study, hyperbolic_paraboloid, perturbation_evidence, solve_field_system, CONVEXITY_SAMPLES,
};
use catmin::graphmin::{descent_direction, relax, samples::random_disc_graph, GraphInTarget, Tolerances};
use catmin::induced::{connecting_pseudometric, length_pseudometric, ordering_chain, samples::random_disc};
use catmin::io::{parse_instance, InstanceFile, Payload, TargetDecl};
use catmin::majorization::glue::glue_disc;
use catmin::majorization::{
    boundary_and_area, cat0_certificate, epsilon_net, thin_triangle_test, PolyhedralDisc, DEFAULT_TOL_ANGLE,
};
use catmin::mesh::{builders, dist, MappedDisc};
use catmin::metric::PseudometricMatrix;
use catmin::pipeline::{run_key_lemma, samples::saddle_instance, KeyLemmaConfig, KeyLemmaResult};
use catmin::saddle::{
    hexagon_counterexample, is_saddle_pl, shorten_by_rotation, FROZEN_HEXAGON, HEXAGON_ROTATION,
    SHORTENING_REFINEMENT,
};
use catmin::surface::PolyhedralTarget;
use minilp::{ComparisonOp, LinearExpr, OptimizationDirection, Problem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(n: usize, name: &str, pass: bool, started: Instant, detail: String) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let line = format!(
        "acceptance {n:>2} {name:<28} {verdict}  ({:.1} s) {detail}\n",
        started.elapsed().as_secs_f64()
    );
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).unwrap();
    out.flush().unwrap();
}

fn fixture(name: &str) -> InstanceFile {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name);
    let text = std::fs::read_to_string(&path).unwrap();
    parse_instance(&text).unwrap_or_else(|d| panic!("{name}: {d:?}"))
}

// relaxed graphs of criterion 3, shared with 6 and 7
fn relaxed_graphs() -> &'static Vec<(GraphInTarget, catmin::graphmin::MinimizationCertificate)> {
    static CELL: OnceLock<Vec<(GraphInTarget, catmin::graphmin::MinimizationCertificate)>> = OnceLock::new();
    CELL.get_or_init(|| {
        (0..50)
            .map(|seed| relax(&random_disc_graph(seed), Tolerances::default(), 20_000))
            .collect()
    })
}

// key-lemma runs of criterion 5, shared with 6 and 7
fn key_lemma_runs() -> &'static Vec<KeyLemmaResult> {
    static CELL: OnceLock<Vec<KeyLemmaResult>> = OnceLock::new();
    CELL.get_or_init(|| {
        (0..20)
            .map(|seed| {
                let (m, sample) = saddle_instance(seed);
                let config = KeyLemmaConfig {
                    pairs: 10_000,
                    seed,
                    ..Default::default()
                };
                run_key_lemma(&m, &sample, &config).unwrap()
            })
            .collect()
    })
}

/// Every W produced in these tests: glued relaxed graphs and key-lemma discs.
fn produced_discs() -> Vec<PolyhedralDisc> {
    let mut out: Vec<PolyhedralDisc> = relaxed_graphs()
        .iter()
        .map(|(g, _)| glue_disc(g).unwrap().disc)
        .collect();
    out.extend(key_lemma_runs().iter().map(|r| r.w.disc.clone()));
    out
}

#[test]
fn c01_ordering_chain() {
    let t0 = Instant::now();
    let zero_tol = 1e-9;
    let mut worst: f64 = f64::NEG_INFINITY;
    let mut failed = Vec::new();
    let mut largest = 0;
    for seed in 0..50 {
        let m = random_disc(seed);
        largest = largest.max(m.vertex_count());
        let r = ordering_chain(&m, zero_tol).unwrap();
        // the chain recomputed here from the parts
        let a = r.intrinsic.max_excess_over(&r.length);
        let b = r.connecting.lower.max_excess_over(&r.intrinsic);
        worst = worst.max(a).max(b);
        if !r.pass || a > r.slack || b > r.slack || r.slack != 1e-9 + zero_tol {
            failed.push(seed);
        }
    }
    let pass = failed.is_empty() && largest <= 30;
    report(
        1,
        "ordering chain",
        pass,
        t0,
        format!("50 discs, <= {largest} vertices, worst excess {worst:.2e}"),
    );
    assert!(pass, "failed seeds {failed:?}");
}

/// Minimum image diameter of a connected vertex set containing both
/// endpoints, by enumerating every vertex subset.
fn connecting_by_subsets(m: &MappedDisc) -> PseudometricMatrix {
    let n = m.vertex_count();
    let mut nbr = vec![0u32; n];
    for t in &m.triangles {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            nbr[a] |= 1 << b;
            nbr[b] |= 1 << a;
        }
    }
    let mut best = vec![vec![f64::INFINITY; n]; n];
    for (v, row) in best.iter_mut().enumerate() {
        row[v] = 0.0;
    }
    for set in 1u32..(1 << n) {
        // flood fill from the lowest member
        let mut seen = set & set.wrapping_neg();
        loop {
            let mut grow = seen;
            for v in 0..n {
                if seen >> v & 1 == 1 {
                    grow |= nbr[v] & set;
                }
            }
            if grow == seen {
                break;
            }
            seen = grow;
        }
        if seen != set {
            continue;
        }
        let members: Vec<usize> = (0..n).filter(|&v| set >> v & 1 == 1).collect();
        let mut diam: f64 = 0.0;
        for &a in &members {
            for &b in &members {
                diam = diam.max(dist(&m.images[a], &m.images[b]));
            }
        }
        for &a in &members {
            for &b in &members {
                if a != b && diam < best[a][b] {
                    best[a][b] = diam;
                }
            }
        }
    }
    PseudometricMatrix::from_rows(best).unwrap()
}

fn random_small_disc(rng: &mut ChaCha8Rng) -> MappedDisc {
    let m = match rng.gen_range(0..3) {
        0 => {
            let nx = rng.gen_range(2..=4);
            let ny = rng.gen_range(2..=12 / nx);
            builders::grid(nx, ny)
        }
        1 => builders::rings(&[rng.gen_range(3..=11)]),
        _ => builders::hex_patch(1),
    };
    assert!(m.vertex_count() <= 12);
    let dim = rng.gen_range(1..=3);
    // a few repeated image points so that zero distances occur
    let palette: Vec<Vec<f64>> = (0..rng.gen_range(2..=m.vertex_count()))
        .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let images = (0..m.vertex_count())
        .map(|_| palette[rng.gen_range(0..palette.len())].clone())
        .collect();
    m.with_images(images)
}

#[test]
fn c02_connecting_oracle() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut mismatches = 0;
    let mut largest = 0;
    for _ in 0..100 {
        let m = random_small_disc(&mut rng);
        largest = largest.max(m.vertex_count());
        let c = connecting_pseudometric(&m).unwrap();
        let oracle = connecting_by_subsets(&m);
        let n = m.vertex_count();
        let same = c.exact
            && (0..n).all(|i| (0..n).all(|j| c.lower.get(i, j) == oracle.get(i, j) && c.upper.get(i, j) == oracle.get(i, j)));
        if !same {
            mismatches += 1;
        }
    }
    let pass = mismatches == 0;
    report(
        2,
        "connecting metric oracle",
        pass,
        t0,
        format!("100 discs, <= {largest} vertices, {mismatches} mismatches"),
    );
    assert!(pass);
}

#[test]
fn c03_relax_certificate() {
    let t0 = Instant::now();
    let (mut t_max, mut res_max, mut ang_min) = (0.0f64, 0.0f64, f64::INFINITY);
    let mut bad = Vec::new();
    for (seed, (g, cert)) in relaxed_graphs().iter().enumerate() {
        let t = cert.descent.iter().map(|d| d.1).fold(0.0, f64::max);
        // residuals recomputed from the relaxed graph
        let res = (0..g.edges.len())
            .map(|e| g.realized_length(e) - g.edge_length(e))
            .fold(0.0, f64::max);
        let ang = cert.min_angle_sum();
        t_max = t_max.max(t);
        res_max = res_max.max(res);
        ang_min = ang_min.min(ang);
        if !(cert.valid && t <= 1e-8 && res <= 1e-9 && ang >= 2.0 * PI - 1e-6) {
            bad.push(seed);
        }
    }
    let pass = bad.is_empty();
    report(
        3,
        "graph minimization",
        pass,
        t0,
        format!("50 graphs, max t* {t_max:.1e}, max residual {res_max:.1e}, min angle sum {ang_min:.6}"),
    );
    assert!(pass, "failing seeds {bad:?}");
}

/// L1 distance from the origin to the convex hull of `u`, by linear program.
fn hull_distance_l1(u: &[Vec<f64>]) -> f64 {
    let dim = u[0].len();
    let mut p = Problem::new(OptimizationDirection::Minimize);
    let lambda: Vec<_> = u.iter().map(|_| p.add_var(0.0, (0.0, f64::INFINITY))).collect();
    let slack: Vec<_> = (0..dim)
        .map(|_| (p.add_var(1.0, (0.0, f64::INFINITY)), p.add_var(1.0, (0.0, f64::INFINITY))))
        .collect();
    let mut total = LinearExpr::empty();
    for &l in &lambda {
        total.add(l, 1.0);
    }
    p.add_constraint(total, ComparisonOp::Eq, 1.0);
    for (c, &(plus, minus)) in slack.iter().enumerate() {
        let mut row = LinearExpr::empty();
        for (l, v) in lambda.iter().zip(u) {
            row.add(*l, v[c]);
        }
        row.add(plus, 1.0);
        row.add(minus, -1.0);
        p.add_constraint(row, ComparisonOp::Eq, 0.0);
    }
    p.solve().unwrap().objective()
}

#[test]
fn c04_gordan_duality() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let tol = 1e-9;
    let (mut disagree, mut inside) = (0, 0);
    for _ in 0..1000 {
        let dim = rng.gen_range(1..=3);
        let degree = rng.gen_range(1..=8);
        // half the stars lean to one side so that both verdicts occur
        let lean: Vec<f64> = (0..dim).map(|_| rng.gen_range(-0.8..0.8)).collect();
        let bias = if rng.gen_bool(0.5) { 1.0 } else { 0.0 };
        let u: Vec<Vec<f64>> = (0..degree)
            .map(|_| {
                let v: Vec<f64> = (0..dim).map(|c| rng.gen_range(-1.0..1.0) + bias * lean[c]).collect();
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.iter().map(|x| x / n).collect()
            })
            .collect();
        let has_descent = descent_direction(&u).t > tol;
        let zero_in_hull = hull_distance_l1(&u) <= tol;
        inside += zero_in_hull as usize;
        if has_descent == zero_in_hull {
            disagree += 1;
        }
    }
    let pass = disagree == 0;
    report(
        4,
        "Gordan duality",
        pass,
        t0,
        format!("1000 stars, 0 in hull for {inside}, {disagree} disagreements"),
    );
    assert!(pass);
}

#[test]
fn c05_key_lemma() {
    let t0 = Instant::now();
    let runs = key_lemma_runs();
    let (mut contraction, mut shortness, mut allowance) = (f64::NEG_INFINITY, f64::NEG_INFINITY, 0.0f64);
    let mut exact = 0;
    let mut bad = Vec::new();
    for (seed, r) in runs.iter().enumerate() {
        let k = &r.report;
        contraction = contraction.max(k.contraction_excess);
        shortness = shortness.max(k.shortness_excess);
        allowance = allowance.max(k.max_allowance);
        exact += k.exact_pairs;
        // computed W distances are upper bounds within their allowance, so a
        // short q never exceeds them
        let ok = k.contraction_excess <= 1e-6
            && k.shortness_pairs == 10_000
            && k.shortness_violations.is_empty()
            && k.shortness_excess <= 1e-9 * (1.0 + k.max_allowance);
        if !ok {
            bad.push(seed);
        }
    }
    let pass = bad.is_empty();
    report(
        5,
        "key lemma",
        pass,
        t0,
        format!(
            "20 instances x 10^4 pairs, contraction excess {contraction:.1e}, shortness excess {shortness:.1e}, allowance <= {allowance:.1e}, {exact} pairs exact"
        ),
    );
    assert!(pass, "failing seeds {bad:?}");
}

fn polyhedral_fixture(name: &str) -> PolyhedralTarget {
    let inst = fixture(name);
    let (Payload::PolyhedralDisc(spec), TargetDecl::Polyhedral { steiner }) = (&inst.payload, &inst.target) else {
        panic!("{name} is not a polyhedral disc");
    };
    PolyhedralTarget::new(spec.build().unwrap(), *steiner)
}

#[test]
fn c06_cat0_certificates() {
    let t0 = Instant::now();
    let discs = produced_discs();
    let uncertified = discs
        .iter()
        .filter(|w| !cat0_certificate(w, DEFAULT_TOL_ANGLE).pass)
        .count();
    let wide = thin_triangle_test(&polyhedral_fixture("cone5_wide.json"), 10_000, 6);
    let narrow = thin_triangle_test(&polyhedral_fixture("cone5.json"), 10_000, 6);
    let pass = uncertified == 0
        && wide.samples == 10_000
        && wide.positive_violations == 0
        && narrow.samples == 10_000
        && narrow.worst_violation > 0.0;
    report(
        6,
        "CAT(0) certificates",
        pass,
        t0,
        format!(
            "{} discs, {uncertified} uncertified; 5pi/2 cone worst {:.1e}; 3pi/2 cone worst {:.1e} ({} positive)",
            discs.len(),
            wide.worst_violation,
            narrow.worst_violation,
            narrow.positive_violations
        ),
    );
    assert!(pass, "{wide:?} {narrow:?}");
}

#[test]
fn c07_isoperimetric_and_nets() {
    let t0 = Instant::now();
    let discs = produced_discs();
    let (mut iso_bad, mut net_bad, mut nets) = (0, 0, 0);
    let mut ratio: f64 = 0.0;
    for w in &discs {
        let ba = boundary_and_area(w);
        let bound = ba.length * ba.length / (4.0 * PI);
        if ba.area > bound + 1e-9 {
            iso_bad += 1;
        }
        if bound > 0.0 {
            ratio = ratio.max(ba.area / bound);
        }
        if ba.length == 0.0 {
            continue;
        }
        let target = PolyhedralTarget::new(w.clone(), 2);
        for eps in [ba.length / 10.0, ba.length / 20.0] {
            let r = epsilon_net(&target, eps);
            let ell = ba.length / (2.0 * PI);
            let bound = 4.0 * (ell / eps).powi(2) + (10.0 * ell / eps).ceil();
            nets += 1;
            if (r.boundary_points + r.inner_points) as f64 > bound || !r.within_bound {
                net_bad += 1;
            }
        }
    }
    let pass = iso_bad == 0 && net_bad == 0;
    report(
        7,
        "isoperimetric and nets",
        pass,
        t0,
        format!(
            "{} discs, max A/(L^2/4pi) {ratio:.3}, {iso_bad} area failures, {nets} nets, {net_bad} over bound",
            discs.len()
        ),
    );
    assert!(pass);
}

#[test]
fn c08_hexagon_counterexample() {
    let t0 = Instant::now();
    let Payload::MappedDisc(m) = fixture("hexagon.json").payload else {
        panic!("hexagon fixture is not a mapped disc");
    };
    let frozen = m == hexagon_counterexample(&FROZEN_HEXAGON).unwrap();
    let saddle = is_saddle_pl(&m, 200, 8).unwrap().is_saddle();
    let (rotated, r) = shorten_by_rotation(&m, HEXAGON_ROTATION).unwrap();
    // both length matrices recomputed here
    let before = length_pseudometric(&m, SHORTENING_REFINEMENT).unwrap();
    let after = length_pseudometric(&rotated, SHORTENING_REFINEMENT).unwrap();
    let n = m.vertex_count();
    let (mut increase, mut decrease) = (f64::NEG_INFINITY, 0.0f64);
    for i in 0..n {
        for j in 0..n {
            increase = increase.max(after.get(i, j) - before.get(i, j));
            decrease = decrease.max(before.get(i, j) - after.get(i, j));
        }
    }
    let boundary = m
        .boundary_loop
        .iter()
        .all(|&v| m.images[v] == rotated.images[v]);
    let pass = frozen
        && saddle
        && increase <= 1e-12
        && decrease >= 1e-4
        && boundary
        && r.boundary_unchanged
        && r.is_pareto_decrease(1e-4);
    report(
        8,
        "hexagon counterexample",
        pass,
        t0,
        format!("saddle {saddle}, max increase {increase:.1e}, max decrease {decrease:.2e}, boundary fixed {boundary}"),
    );
    assert!(pass);
}

#[test]
fn c09_field_convergence() {
    let t0 = Instant::now();
    let patches: Vec<_> = [17, 33, 65].iter().map(|&n| hyperbolic_paraboloid(n, 1.0)).collect();
    let rows = convergence_study(&patches).unwrap();
    let hs: Vec<f64> = rows.iter().map(|r| r.h).collect();
    let grids_ok = hs
        .iter()
        .zip([1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0])
        .all(|(h, e)| (h - e).abs() < 1e-15);
    let orders: Vec<f64> = rows.iter().filter_map(|r| r.order).collect();
    let decreasing = rows.windows(2).all(|w| w[1].residual < w[0].residual);
    let lambda = rows.iter().map(|r| r.min_lambda).fold(f64::INFINITY, f64::min);
    let pass = grids_ok
        && decreasing
        && orders.len() == 2
        && orders.iter().all(|o| (1.5..=2.5).contains(o))
        && lambda > 0.0;
    report(
        9,
        "field system convergence",
        pass,
        t0,
        format!(
            "residuals {:?}, orders {:?}, min lambda {lambda:.3}",
            rows.iter().map(|r| format!("{:.2e}", r.residual)).collect::<Vec<_>>(),
            orders.iter().map(|o| format!("{o:.2}")).collect::<Vec<_>>()
        ),
    );
    assert!(pass, "{rows:?}");
}

#[test]
fn c10_energy_minimality() {
    let t0 = Instant::now();
    let s = hyperbolic_paraboloid(33, 1.0);
    let v = solve_field_system(&s).unwrap();
    let r = perturbation_evidence(&s, &v, 100, 10).unwrap();
    assert_eq!(CONVEXITY_SAMPLES, [0.25, 0.5, 0.75]);
    let pass = r.trials.len() == 100
        && r.trials.iter().all(|t| t.gain >= -1e-9 && t.convexity_excess <= 1e-9)
        && r.pass;
    report(
        10,
        "energy minimality",
        pass,
        t0,
        format!(
            "100 perturbations, min gain {:.2e}, max convexity excess {:.1e}",
            r.min_gain, r.max_convexity_excess
        ),
    );
    assert!(pass);
}
