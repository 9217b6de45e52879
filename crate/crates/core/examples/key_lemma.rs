//! From a sampled saddle-shaped disc to W with the maps p and q.

use catmin::pipeline::samples::saddle_instance;
use catmin::pipeline::{refinement_study, run_key_lemma, KeyLemmaConfig};

fn main() {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let (m, sample) = saddle_instance(seed);
    println!("mesh: {} vertices; sample {:?}", m.vertex_count(), sample);
    let config = KeyLemmaConfig {
        pairs: 2_000,
        seed,
        ..Default::default()
    };
    let r = run_key_lemma(&m, &sample, &config).unwrap();
    let k = &r.report;
    println!(
        "W: {} vertices, {} triangles; CAT(0) {}, isoperimetric {}",
        r.w.disc.vertex_count,
        r.w.disc.triangles.len(),
        k.cat0,
        k.isoperimetric.isoperimetric
    );
    println!("p contraction excess {:.1e} over {} pairs", k.contraction_excess, k.contraction_pairs);
    println!(
        "q shortness excess {:.1e} over {} pairs ({} exact), boundary error {:.1e}",
        k.shortness_excess, k.shortness_pairs, k.exact_pairs, k.boundary_error
    );
    println!("pass: {}", k.pass);

    // grow the sample with more boundary vertices
    let mut nested = vec![sample.clone()];
    for &v in m.boundary_loop.iter().step_by(3) {
        if !nested.last().unwrap().contains(&v) {
            let mut s = nested.last().unwrap().clone();
            s.push(v);
            nested.push(s);
        }
    }
    nested.truncate(4);
    for row in refinement_study(&m, &nested, &config).unwrap() {
        println!(
            "  sample {:>2}: W has {:>3} vertices, area {:.4}, first-sample shrink {:.4}",
            row.sample_size, row.w_vertices, row.w_area, row.max_shrink
        );
    }
}
