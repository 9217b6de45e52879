//! SVG figures: the parameter domain, a graph in it, and the per-face
//! layout of a polyhedral disc.

use std::fmt::Write;

use crate::graphmin::GraphInTarget;
use crate::majorization::PolyhedralDisc;
use crate::mesh::MappedDisc;

const SIZE: f64 = 600.0;
const MARGIN: f64 = 20.0;

enum Item {
    Polygon { pts: Vec<[f64; 2]>, fill: &'static str, stroke: &'static str },
    Line { a: [f64; 2], b: [f64; 2], stroke: &'static str, width: f64 },
    Dot { p: [f64; 2], r: f64, fill: &'static str },
}

#[derive(Default)]
struct Figure {
    items: Vec<Item>,
}

impl Figure {
    fn bounds(&self) -> [f64; 4] {
        let mut b = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
        let mut eat = |p: &[f64; 2]| {
            b[0] = b[0].min(p[0]);
            b[1] = b[1].min(p[1]);
            b[2] = b[2].max(p[0]);
            b[3] = b[3].max(p[1]);
        };
        for it in &self.items {
            match it {
                Item::Polygon { pts, .. } => pts.iter().for_each(&mut eat),
                Item::Line { a, b, .. } => {
                    eat(a);
                    eat(b);
                }
                Item::Dot { p, .. } => eat(p),
            }
        }
        if !b[0].is_finite() {
            return [0.0, 0.0, 1.0, 1.0];
        }
        b
    }

    fn render(&self) -> String {
        let [x0, y0, x1, y1] = self.bounds();
        let span = (x1 - x0).max(y1 - y0).max(1e-12);
        let k = (SIZE - 2.0 * MARGIN) / span;
        // y grows upward in the figure
        let map = |p: &[f64; 2]| (MARGIN + (p[0] - x0) * k, SIZE - MARGIN - (p[1] - y0) * k);
        let mut s = String::new();
        writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
        )
        .unwrap();
        writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
        for it in &self.items {
            match it {
                Item::Polygon { pts, fill, stroke } => {
                    let list: Vec<String> = pts
                        .iter()
                        .map(|p| {
                            let (x, y) = map(p);
                            format!("{x:.2},{y:.2}")
                        })
                        .collect();
                    writeln!(
                        s,
                        r#"<polygon points="{}" fill="{fill}" stroke="{stroke}" stroke-width="0.8"/>"#,
                        list.join(" ")
                    )
                    .unwrap();
                }
                Item::Line { a, b, stroke, width } => {
                    let ((ax, ay), (bx, by)) = (map(a), map(b));
                    writeln!(
                        s,
                        r#"<line x1="{ax:.2}" y1="{ay:.2}" x2="{bx:.2}" y2="{by:.2}" stroke="{stroke}" stroke-width="{width}"/>"#
                    )
                    .unwrap();
                }
                Item::Dot { p, r, fill } => {
                    let (x, y) = map(p);
                    writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="{r}" fill="{fill}"/>"#).unwrap();
                }
            }
        }
        s.push_str("</svg>\n");
        s
    }
}

fn domain_items(fig: &mut Figure, m: &MappedDisc) {
    for t in &m.triangles {
        fig.items.push(Item::Polygon {
            pts: t.iter().map(|&v| m.vertices[v]).collect(),
            fill: "#eef2f7",
            stroke: "#9aa5b1",
        });
    }
    let b = &m.boundary_loop;
    for k in 0..b.len() {
        fig.items.push(Item::Line {
            a: m.vertices[b[k]],
            b: m.vertices[b[(k + 1) % b.len()]],
            stroke: "#1f2933",
            width: 2.0,
        });
    }
}

fn graph_items(fig: &mut Figure, g: &GraphInTarget, params: &[[f64; 2]]) {
    for &[a, b] in &g.edges {
        fig.items.push(Item::Line {
            a: params[a],
            b: params[b],
            stroke: "#c0392b",
            width: 1.6,
        });
    }
    let pinned = g.pinned_mask();
    for (v, p) in params.iter().enumerate() {
        fig.items.push(Item::Dot {
            p: *p,
            r: if pinned[v] { 4.0 } else { 2.5 },
            fill: if pinned[v] { "#1f2933" } else { "#c0392b" },
        });
    }
}

// parameter positions, or the first two target coordinates
fn graph_params(g: &GraphInTarget) -> Vec<[f64; 2]> {
    match &g.params {
        Some(p) => p.clone(),
        None => g
            .points
            .iter()
            .map(|p| [p.first().copied().unwrap_or(0.0), p.get(1).copied().unwrap_or(0.0)])
            .collect(),
    }
}

/// The triangulated parameter domain with the boundary loop in bold and an
/// optional graph drawn over it by its parameter positions (edges as chords).
pub fn domain_svg(m: &MappedDisc, overlay: Option<&GraphInTarget>) -> String {
    let mut fig = Figure::default();
    domain_items(&mut fig, m);
    if let Some(g) = overlay {
        graph_items(&mut fig, g, &graph_params(g));
    }
    fig.render()
}

pub fn graph_svg(g: &GraphInTarget) -> String {
    let mut fig = Figure::default();
    graph_items(&mut fig, g, &graph_params(g));
    fig.render()
}

/// Every comparison triangle of the disc in its own cell of a square grid,
/// all at one scale; segment edges are drawn as bars below the faces.
pub fn disc_layout_svg(w: &PolyhedralDisc) -> String {
    let mut fig = Figure::default();
    let segments = w.segment_edges();
    let cells = w.triangles.len() + segments.len();
    let cols = (cells as f64).sqrt().ceil().max(1.0) as usize;
    let cell = w
        .edges
        .iter()
        .map(|e| e.length)
        .fold(0.0, f64::max)
        .max(1e-9)
        * 1.2;
    let origin = |k: usize| [(k % cols) as f64 * cell, -((k / cols) as f64) * cell];
    for (k, t) in w.triangles.iter().enumerate() {
        let o = origin(k);
        fig.items.push(Item::Polygon {
            pts: t.shape.corners.iter().map(|c| [o[0] + c[0], o[1] + c[1]]).collect(),
            fill: if t.shape.degenerate { "#f7e1d7" } else { "#e3f2e1" },
            stroke: "#2d6a4f",
        });
    }
    for (j, &e) in segments.iter().enumerate() {
        let o = origin(w.triangles.len() + j);
        fig.items.push(Item::Line {
            a: o,
            b: [o[0] + w.edges[e].length, o[1]],
            stroke: "#2d6a4f",
            width: 2.0,
        });
    }
    if cells == 0 {
        fig.items.push(Item::Dot {
            p: [0.0, 0.0],
            r: 4.0,
            fill: "#2d6a4f",
        });
    }
    fig.render()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::majorization::cone_disc;
    use crate::mesh::builders;

    #[test]
    fn figures_are_well_formed() {
        let m = builders::grid(3, 3);
        let s = domain_svg(&m, None);
        assert!(s.starts_with("<svg") && s.ends_with("</svg>\n"));
        assert_eq!(s.matches("<polygon").count(), 8);
        let w = cone_disc(5, 5.0);
        assert_eq!(disc_layout_svg(&w).matches("<polygon").count(), 5);
        assert!(disc_layout_svg(&PolyhedralDisc::point()).contains("<circle"));
    }
}
