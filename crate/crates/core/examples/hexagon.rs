//! A saddle disc made of ten triangles that is not metric minimizing.

use catmin::saddle::{hexagon_counterexample, is_saddle_pl, shorten_by_rotation, FROZEN_HEXAGON, HEXAGON_ROTATION};

fn main() {
    let m = hexagon_counterexample(&FROZEN_HEXAGON).unwrap();
    println!("{} vertices, {} triangles", m.vertex_count(), m.triangles.len());
    println!("saddle: {}", is_saddle_pl(&m, 500, 0).unwrap().is_saddle());
    for angle in [0.0, HEXAGON_ROTATION / 2.0, HEXAGON_ROTATION, -HEXAGON_ROTATION] {
        let (_, r) = shorten_by_rotation(&m, angle).unwrap();
        println!(
            "rotate {angle:+.3}: max increase {:+.1e}, max decrease {:.2e} at {:?}, boundary fixed {}, pareto {}",
            r.max_increase,
            r.max_decrease,
            r.decrease_pair,
            r.boundary_unchanged,
            r.is_pareto_decrease(1e-4)
        );
    }
}
