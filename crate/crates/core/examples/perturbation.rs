//! Energy of the saddle under random boundary-fixed perturbations.

use catmin::fields::{energy, hyperbolic_paraboloid, perturbation_evidence, solve_field_system};

fn main() {
    let s = hyperbolic_paraboloid(33, 1.0);
    let v = solve_field_system(&s).unwrap();
    println!("E_v(s) = {:.6}", energy(&s, &v).unwrap());
    let r = perturbation_evidence(&s, &v, 40, 1).unwrap();
    for t in r.trials.iter().take(8) {
        println!(
            "  amplitude {:.3}: gain {:+.3e} (first variation {:+.1e}), convexity excess {:+.1e}",
            t.amplitude, t.gain, t.linear, t.convexity_excess
        );
    }
    println!(
        "{} trials: min gain {:.3e}, max convexity excess {:.1e}, pass {}",
        r.trials.len(),
        r.min_gain,
        r.max_convexity_excess,
        r.pass
    );
}
