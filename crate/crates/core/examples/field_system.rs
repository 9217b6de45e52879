//! The four vector fields on a hyperbolic paraboloid and their convergence.

use catmin::fields::{asymptotic_normal_parts, convergence_study, hyperbolic_paraboloid, solve_field_system};

fn main() {
    let s = hyperbolic_paraboloid(17, 1.0);
    let v = solve_field_system(&s).unwrap();
    let normals = asymptotic_normal_parts(&s, &v).unwrap();
    println!("min lambda {:.4}, asymptotic normal parts {:.1e} {:.1e}", v.min_lambda(), normals[0], normals[1]);

    let patches: Vec<_> = [17, 33, 65, 129].iter().map(|&n| hyperbolic_paraboloid(n, 1.0)).collect();
    println!("{:>9} {:>11} {:>8} {:>7}", "h", "residual", "lambda", "order");
    for row in convergence_study(&patches).unwrap() {
        let order = row.order.map_or("-".to_string(), |o| format!("{o:.2}"));
        println!("{:>9.5} {:>11.3e} {:>8.4} {:>7}", row.h, row.residual, row.min_lambda, order);
    }
}
