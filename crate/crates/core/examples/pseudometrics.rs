//! The three induced pseudometrics of a mapped disc and the metric quotient.

use catmin::induced::samples::{capped_annulus, pentagon_pair_collapsed, random_disc};
use catmin::induced::{monotone_light_report, no_bubble_check, ordering_chain};
use catmin::metric::metric_quotient;

fn main() {
    let m = random_disc(7);
    println!("random disc: {} vertices, {} triangles", m.vertex_count(), m.triangles.len());
    let r = ordering_chain(&m, 1e-9).unwrap();
    println!(
        "length >= intrinsic >= connecting: {} (excesses {:.1e}, {:.1e})",
        r.pass, r.intrinsic_over_length, r.connecting_over_intrinsic
    );
    let q = metric_quotient(&r.connecting.lower, 1e-9).unwrap();
    println!("connecting quotient has {} points", q.class_count());

    // two pentagons sharing an almost collapsed vertex pair
    let m = pentagon_pair_collapsed(1e-3);
    let r = ordering_chain(&m, 1e-2).unwrap();
    println!(
        "collapsed pair: length(1,4) = {:.4}, intrinsic(1,4) = {:.4}",
        r.length.get(1, 4),
        r.intrinsic.get(1, 4)
    );
    let ml = monotone_light_report(&m, 1e-2).unwrap();
    println!("monotone {}, light {}", ml.monotone, ml.light);

    let bubbles = no_bubble_check(&capped_annulus(5.0), 0.5).unwrap();
    println!("capped annulus: {} bubble witness(es)", bubbles.len());
    for b in bubbles.iter().take(3) {
        println!("  {b:?}");
    }
}
