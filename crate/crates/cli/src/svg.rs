//! Schematic top-down SVG rendering of a layout file.

use std::fmt::Write as _;

use layoutforge_core::scene::{PLANE_H, PLANE_W};

use crate::artifacts::LayoutFile;

const PALETTE: [&str; 12] = [
    "#8dd3c7", "#ffffb3", "#bebada", "#fb8072", "#80b1d3", "#fdb462", "#b3de69", "#fccde5",
    "#d9d9d9", "#bc80bd", "#ccebc5", "#ffed6f",
];

/// Deterministic byte output: objects are drawn bottom of the stack first
/// (z-order by resting height, ties by name), elevated objects get an inset
/// second border.
pub fn render_svg(file: &LayoutFile) -> String {
    let map = file.boundary.plane_map(PLANE_W, PLANE_H);

    let mut order: Vec<&String> = file.objects.keys().collect();
    order.sort_by(|a, b| {
        let za = file.objects[*a].r#box.min[2];
        let zb = file.objects[*b].r#box.min[2];
        za.partial_cmp(&zb)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.cmp(b))
    });

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{PLANE_W}\" height=\"{PLANE_H}\" viewBox=\"0 0 {PLANE_W} {PLANE_H}\">"
    );
    let _ = writeln!(
        svg,
        "  <rect x=\"0\" y=\"0\" width=\"{PLANE_W}\" height=\"{PLANE_H}\" fill=\"#f7f3e8\" stroke=\"#4a4a4a\" stroke-width=\"2\"/>"
    );

    let mut color_index: Vec<&String> = file.objects.keys().collect();
    color_index.sort();

    for name in order {
        let obj = &file.objects[name];
        let (x0, y0) = map.cm_to_px(obj.r#box.min[0], obj.r#box.min[1]);
        let (x1, y1) = map.cm_to_px(obj.r#box.max[0], obj.r#box.max[1]);
        let (w, h) = (x1 - x0, y1 - y0);
        let color = PALETTE[color_index.iter().position(|n| *n == name).unwrap_or(0) % PALETTE.len()];
        let elevated = obj.r#box.min[2] > file.boundary.surface_z + 1e-9;
        let _ = writeln!(
            svg,
            "  <rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\" fill-opacity=\"0.85\" stroke=\"#333333\" stroke-width=\"1\"/>",
            x0, y0, w, h, color
        );
        if elevated {
            let _ = writeln!(
                svg,
                "  <rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" stroke=\"#333333\" stroke-width=\"1\" stroke-dasharray=\"3 2\"/>",
                x0 + 2.0,
                y0 + 2.0,
                (w - 4.0).max(0.0),
                (h - 4.0).max(0.0)
            );
        }
        let _ = writeln!(
            svg,
            "  <text x=\"{:.2}\" y=\"{:.2}\" font-size=\"9\" font-family=\"sans-serif\" fill=\"#1a1a1a\">{}</text>",
            x0 + 2.0,
            y0 + 10.0,
            escape(name)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
