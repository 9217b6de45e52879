//! SVG figures of a parameter domain, a relaxed graph and its glued disc.

use std::path::PathBuf;

use catmin::graphmin::samples::random_disc_graph;
use catmin::graphmin::{relax, Tolerances};
use catmin::induced::samples::random_disc;
use catmin::majorization::glue::glue_disc;
use catmin::svg::{disc_layout_svg, domain_svg, graph_svg};

fn main() {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(std::env::temp_dir);
    let (g, _) = relax(&random_disc_graph(2), Tolerances::default(), 20_000);
    let w = glue_disc(&g).unwrap();
    for (name, svg) in [
        ("domain.svg", domain_svg(&random_disc(4), None)),
        ("graph.svg", graph_svg(&g)),
        ("disc.svg", disc_layout_svg(&w.disc)),
    ] {
        let path = dir.join(name);
        std::fs::write(&path, svg).unwrap();
        println!("wrote {}", path.display());
    }
}
