//! Minimal deterministic SVG emission: cylinder rectangles, an optional
//! projected-cell strip, and the sweep slope plot.

use std::fmt::Write;

const VIEW: f64 = 800.0;
const STRIP_H: f64 = 48.0;

pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

/// Unit-square rectangles, y flipped so the origin sits bottom-left.
pub fn carpet_svg(rects: &[Rect], strip: Option<(&[bool], u64)>) -> String {
    let height = VIEW + if strip.is_some() { STRIP_H + 12.0 } else { 0.0 };
    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{VIEW}\" height=\"{height}\" viewBox=\"0 0 {VIEW} {height}\">"
    );
    let _ = writeln!(
        out,
        "<rect x=\"0\" y=\"0\" width=\"{VIEW}\" height=\"{VIEW}\" fill=\"white\" stroke=\"#999\"/>"
    );
    for r in rects {
        let x = r.x0 * VIEW;
        let y = (1.0 - r.y1) * VIEW;
        let w = (r.x1 - r.x0) * VIEW;
        let h = (r.y1 - r.y0) * VIEW;
        let _ = writeln!(
            out,
            "<rect x=\"{x:.4}\" y=\"{y:.4}\" width=\"{w:.4}\" height=\"{h:.4}\" fill=\"#2b6cb0\" fill-opacity=\"0.85\"/>"
        );
    }
    if let Some((cells, count)) = strip {
        let _ = writeln!(out, "<!-- marked-cells: {count} -->");
        let y = VIEW + 12.0;
        let w = VIEW / cells.len() as f64;
        for (i, &hit) in cells.iter().enumerate() {
            if hit {
                let x = i as f64 * w;
                let _ = writeln!(
                    out,
                    "<rect x=\"{x:.4}\" y=\"{y:.4}\" width=\"{w:.4}\" height=\"{STRIP_H:.4}\" fill=\"#c53030\"/>"
                );
            }
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Slope-versus-angle polyline.
pub fn sweep_svg(rows: &[(f64, f64)]) -> String {
    let mut out = String::new();
    let (w, h) = (VIEW, 400.0);
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">"
    );
    let _ = writeln!(
        out,
        "<rect x=\"0\" y=\"0\" width=\"{w}\" height=\"{h}\" fill=\"white\" stroke=\"#999\"/>"
    );
    if !rows.is_empty() {
        let pi = std::f64::consts::PI;
        let sx = |theta: f64| theta / pi * (w - 40.0) + 20.0;
        let sy = |slope: f64| h - 20.0 - slope.clamp(0.0, 1.2) / 1.2 * (h - 40.0);
        // Gridline at slope 1.
        let y1 = sy(1.0);
        let _ = writeln!(
            out,
            "<line x1=\"20\" y1=\"{y1:.2}\" x2=\"{:.2}\" y2=\"{y1:.2}\" stroke=\"#ccc\"/>",
            w - 20.0
        );
        let points: Vec<String> = rows
            .iter()
            .map(|&(theta, slope)| format!("{:.3},{:.3}", sx(theta), sy(slope)))
            .collect();
        let _ = writeln!(
            out,
            "<polyline fill=\"none\" stroke=\"#2b6cb0\" stroke-width=\"2\" points=\"{}\"/>",
            points.join(" ")
        );
        for &(theta, slope) in rows {
            let _ = writeln!(
                out,
                "<circle cx=\"{:.3}\" cy=\"{:.3}\" r=\"3\" fill=\"#2b6cb0\"/>",
                sx(theta),
                sy(slope)
            );
        }
    }
    out.push_str("</svg>\n");
    out
}
