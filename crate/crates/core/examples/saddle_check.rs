//! Plane-separation test for piecewise linear discs in R^3.

use catmin::mesh::builders::grid;
use catmin::saddle::{is_saddle_pl, SaddleVerdict};

fn main() {
    let base = grid(6, 6);
    let shapes: [(&str, fn(f64, f64) -> f64); 3] = [
        ("flat", |_, _| 0.0),
        ("saddle", |u, v| u * u - v * v),
        ("cap", |u, v| -(u * u + v * v)),
    ];
    for (name, f) in shapes {
        let images = base
            .vertices
            .iter()
            .map(|&[x, y]| {
                let (u, v) = (2.0 * x - 1.0, 2.0 * y - 1.0);
                vec![u, v, f(u, v)]
            })
            .collect();
        let r = is_saddle_pl(&base.with_images(images), 200, 0).unwrap();
        match r.verdict {
            SaddleVerdict::Saddle => println!("{name}: saddle ({} planes)", r.planes_tested),
            SaddleVerdict::NotSaddle(w) => println!(
                "{name}: not saddle, plane n = {:?} at {:.3} cuts off vertices {:?}",
                w.normal, w.offset, w.component
            ),
        }
    }
}
