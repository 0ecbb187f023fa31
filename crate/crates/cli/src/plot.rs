//! Static SVG of latency / SI-SDRi curves.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use css_core::sweep::CurvePoint;

const WIDTH: f64 = 860.0;
const HEIGHT: f64 = 520.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 250.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];
const DASHES: [&str; 4] = ["", "6 3", "2 3", "8 3 2 3"];

fn nice_range(lo: f64, hi: f64) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        return (0.0, 1.0);
    }
    if (hi - lo).abs() < 1e-9 {
        return (lo - 1.0, hi + 1.0);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

/// One polyline per (overlap, window, mode, separator). Colour follows the
/// overlap ratio, dash pattern the window.
pub fn render(points: &[CurvePoint]) -> String {
    let mut curves: BTreeMap<(u64, u64, String, String), Vec<&CurvePoint>> = BTreeMap::new();
    for p in points {
        let key = (
            (p.overlap * 1000.0).round() as u64,
            (p.window_s * 1000.0).round() as u64,
            p.mode.clone(),
            p.separator.clone(),
        );
        curves.entry(key).or_default().push(p);
    }
    let overlaps: Vec<u64> = {
        let mut v: Vec<u64> = curves.keys().map(|k| k.0).collect();
        v.dedup();
        v
    };
    let windows: Vec<u64> = {
        let mut v: Vec<u64> = curves.keys().map(|k| k.1).collect();
        v.sort_unstable();
        v.dedup();
        v
    };

    let (x0, x1) = nice_range(
        points.iter().map(|p| p.latency_s).fold(0.0, f64::min),
        points.iter().map(|p| p.latency_s).fold(f64::NEG_INFINITY, f64::max),
    );
    let (y0, y1) = nice_range(
        points.iter().map(|p| p.mean_sisdri_db).fold(f64::INFINITY, f64::min),
        points.iter().map(|p| p.mean_sisdri_db).fold(f64::NEG_INFINITY, f64::max),
    );
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * plot_w;
    let sy = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    for i in 0..=5 {
        let fx = x0 + (x1 - x0) * f64::from(i) / 5.0;
        let fy = y0 + (y1 - y0) * f64::from(i) / 5.0;
        let (px, py) = (sx(fx), sy(fy));
        let _ = writeln!(
            svg,
            r##"<line x1="{px:.1}" y1="{TOP}" x2="{px:.1}" y2="{:.1}" stroke="#ddd"/><text x="{px:.1}" y="{:.1}" text-anchor="middle">{fx:.2}</text>"##,
            TOP + plot_h,
            TOP + plot_h + 16.0
        );
        let _ = writeln!(
            svg,
            r##"<line x1="{LEFT}" y1="{py:.1}" x2="{:.1}" y2="{py:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{fy:.1}</text>"##,
            LEFT + plot_w,
            LEFT - 6.0,
            py + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">algorithmic latency (s)</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        svg,
        r#"<text transform="translate(18 {:.1}) rotate(-90)" text-anchor="middle">mean SI-SDRi (dB)</text>"#,
        TOP + plot_h / 2.0
    );

    for (row, ((ov, win, mode, sep), pts)) in curves.iter().enumerate() {
        let color = PALETTE[overlaps.iter().position(|o| o == ov).unwrap_or(0) % PALETTE.len()];
        let dash = DASHES[windows.iter().position(|w| w == win).unwrap_or(0) % DASHES.len()];
        let mut pts = pts.clone();
        pts.sort_by(|a, b| a.latency_s.total_cmp(&b.latency_s));
        let coords: Vec<String> = pts
            .iter()
            .map(|p| format!("{:.1},{:.1}", sx(p.latency_s), sy(p.mean_sisdri_db)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5" stroke-dasharray="{dash}"/>"#,
            coords.join(" ")
        );
        for c in &coords {
            let (cx, cy) = c.split_once(',').unwrap_or(("0", "0"));
            let _ = writeln!(svg, r#"<circle cx="{cx}" cy="{cy}" r="2.5" fill="{color}"/>"#);
        }
        let ly = TOP + 8.0 + 16.0 * row as f64;
        let lx = LEFT + plot_w + 12.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="1.5" stroke-dasharray="{dash}"/><text x="{:.1}" y="{:.1}">{}% W={}s {mode} {sep}</text>"#,
            lx + 24.0,
            lx + 30.0,
            ly + 4.0,
            *ov as f64 / 10.0,
            *win as f64 / 1000.0,
        );
    }
    svg.push_str("</svg>\n");
    svg
}
