//! Glue the faces of a relaxed graph into a polyhedral disc and certify it.

use std::f64::consts::PI;

use catmin::graphmin::samples::random_disc_graph;
use catmin::graphmin::{relax, Tolerances};
use catmin::majorization::glue::glue_disc;
use catmin::majorization::{boundary_and_area, cat0_certificate, cut_vertices, epsilon_net, DEFAULT_TOL_ANGLE};
use catmin::surface::PolyhedralTarget;

fn main() {
    let (g, _) = relax(&random_disc_graph(5), Tolerances::default(), 20_000);
    let glued = glue_disc(&g).unwrap();
    let w = &glued.disc;
    println!(
        "W: {} vertices, {} triangles, {} segment edges, euler {}",
        w.vertex_count,
        w.triangles.len(),
        w.segment_edges().len(),
        w.euler_characteristic()
    );
    let cert = cat0_certificate(w, DEFAULT_TOL_ANGLE);
    println!("CAT(0) certificate {}: min interior angle sum {:?}", cert.pass, cert.min_interior_angle_sum);
    println!("cut vertices {:?}", cut_vertices(w).cut_vertices);

    let ba = boundary_and_area(w);
    println!(
        "boundary {:.4}, area {:.4}, L^2/4pi {:.4}",
        ba.length,
        ba.area,
        ba.length * ba.length / (4.0 * PI)
    );
    let target = PolyhedralTarget::new(w.clone(), 4);
    for k in [10.0, 20.0] {
        let r = epsilon_net(&target, ba.length / k);
        println!(
            "eps = L/{k}: {} + {} net points, bound {:.0}, covering radius {:.4}",
            r.boundary_points, r.inner_points, r.bound, r.covering_radius
        );
    }
}
