//! Geodesics and thin triangles on cones of various total angle.

use std::f64::consts::PI;

use catmin::majorization::{cat0_certificate, cone_disc, thin_triangle_test, DEFAULT_TOL_ANGLE};
use catmin::surface::{PolyhedralTarget, SurfacePoint};
use catmin::target::TargetSpace;

fn main() {
    for (k, total) in [(5, 1.5 * PI), (6, 2.0 * PI), (5, 2.5 * PI)] {
        let w = cone_disc(k, total);
        let t = PolyhedralTarget::new(w.clone(), 16);
        // two rim vertices on either side of the apex
        let (a, b) = (SurfacePoint::Vertex(1), SurfacePoint::Vertex(1 + k / 2));
        let path = t.geodesic(&a, &b);
        let mid = t.geodesic_eval(&a, &b, 0.5);
        let apex_gap = t.distance(&mid, &SurfacePoint::Vertex(0));
        let thin = thin_triangle_test(&t, 2_000, 1);
        println!(
            "total {:.3} pi: cert {}, |ab| = {:.4} (exact {}), midpoint to apex {:.4}, worst thin excess {:.2e}",
            total / PI,
            cat0_certificate(&w, DEFAULT_TOL_ANGLE).pass,
            path.length,
            path.exact,
            apex_gap,
            thin.worst_violation
        );
    }
}
