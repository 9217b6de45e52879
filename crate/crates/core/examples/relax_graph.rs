//! Length-minimizing relaxation of a disc graph with pinned boundary.

use catmin::graphmin::samples::random_disc_graph;
use catmin::graphmin::{descent_direction, relax, Tolerances};

fn main() {
    // three unit edges at 120 degrees: no common descent direction
    let u = |a: f64| vec![a.cos(), a.sin()];
    let tau = std::f64::consts::TAU;
    let balanced = descent_direction(&[u(0.0), u(tau / 3.0), u(2.0 * tau / 3.0)]);
    let lopsided = descent_direction(&[u(0.0), u(0.5), u(1.0)]);
    println!("balanced star t* = {:.2e}, lopsided star t* = {:.4}", balanced.t, lopsided.t);

    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let g = random_disc_graph(seed);
    println!(
        "graph {seed}: {} vertices, {} edges, {} pinned, length {:.4}",
        g.vertex_count(),
        g.edges.len(),
        g.pinned.len(),
        g.total_length()
    );
    let (relaxed, cert) = relax(&g, Tolerances::default(), 20_000);
    println!("relaxed length {:.6} after {} sweeps", relaxed.total_length(), cert.iterations);
    for s in cert.log.iter().step_by((cert.log.len() / 6).max(1)) {
        println!("  sweep {:>5}  length {:.6}  worst t* {:.2e}", s.sweep, s.total_length, s.worst_descent);
    }
    println!(
        "certificate valid {}: max t* {:.1e}, max residual {:.1e}, min angle sum {:.6}",
        cert.valid,
        cert.worst_descent(),
        cert.worst_residual(),
        cert.min_angle_sum()
    );
}
