//! Static overlay figures: target vs re-simulated R and T over wavelength.

use std::fmt::Write as _;

use prism_core::{Spectrum, WavelengthGrid};

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;

/// `wavelength_nm,target_R,predicted_R,target_T,predicted_T`, full precision.
pub fn overlay_csv(grid: &WavelengthGrid, target: &Spectrum, predicted: &Spectrum) -> String {
    let mut out = String::from("wavelength_nm,target_R,predicted_R,target_T,predicted_T\n");
    for (i, w) in grid.points().iter().enumerate() {
        let _ = writeln!(
            out,
            "{w},{},{},{},{}",
            target.reflectance()[i],
            predicted.reflectance()[i],
            target.transmittance()[i],
            predicted.transmittance()[i]
        );
    }
    out
}

fn polyline(out: &mut String, xs: &[f64], ys: &[f64], x: impl Fn(f64) -> f64, y: impl Fn(f64) -> f64, style: &str) {
    let pts: Vec<String> = xs.iter().zip(ys).map(|(a, b)| format!("{:.2},{:.2}", x(*a), y(*b))).collect();
    let _ = writeln!(out, r#"<polyline fill="none" {style} points="{}"/>"#, pts.join(" "));
}

/// SVG figure with target curves in black and predictions in colour
/// (solid R, dashed T).
pub fn overlay_svg(title: &str, grid: &WavelengthGrid, target: &Spectrum, predicted: &Spectrum) -> String {
    let (w0, w1) = (grid.first(), grid.last());
    let x = |w: f64| LEFT + (w - w0) / (w1 - w0) * (W - LEFT - RIGHT);
    let y = |v: f64| TOP + (1.0 - v.clamp(0.0, 1.0)) * (H - TOP - BOTTOM);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="18" text-anchor="middle">{}</text>"#, W / 2.0, escape(title));
    for k in 0..=5 {
        let v = k as f64 / 5.0;
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" x2="{x2}" y1="{yv:.2}" y2="{yv:.2}" stroke="#ddd"/><text x="{tx}" y="{ty:.2}" text-anchor="end">{v:.1}</text>"##,
            x2 = W - RIGHT,
            yv = y(v),
            tx = LEFT - 6.0,
            ty = y(v) + 4.0
        );
    }
    let mut tick = (w0 / 100.0).ceil() * 100.0;
    while tick <= w1 + 1e-9 {
        let _ = writeln!(
            s,
            r##"<line x1="{0:.2}" x2="{0:.2}" y1="{TOP}" y2="{1}" stroke="#ddd"/><text x="{0:.2}" y="{2}" text-anchor="middle">{tick}</text>"##,
            x(tick),
            H - BOTTOM,
            H - BOTTOM + 16.0
        );
        tick += 100.0;
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">wavelength (nm)</text>"#,
        (LEFT + W - RIGHT) / 2.0,
        H - 12.0
    );
    let ws = grid.points();
    polyline(&mut s, ws, target.reflectance(), x, y, r#"stroke="black" stroke-width="2""#);
    polyline(&mut s, ws, target.transmittance(), x, y, r#"stroke="black" stroke-width="2" stroke-dasharray="6 4""#);
    polyline(&mut s, ws, predicted.reflectance(), x, y, r#"stroke="crimson" stroke-width="1.5""#);
    polyline(&mut s, ws, predicted.transmittance(), x, y, r#"stroke="royalblue" stroke-width="1.5" stroke-dasharray="6 4""#);
    let legend = [
        ("black", "", "target R"),
        ("black", "6 4", "target T"),
        ("crimson", "", "re-simulated R"),
        ("royalblue", "6 4", "re-simulated T"),
    ];
    for (i, (colour, dash, label)) in legend.iter().enumerate() {
        let ly = TOP + 12.0 + 16.0 * i as f64;
        let lx = W - RIGHT - 150.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" x2="{}" y1="{ly}" y2="{ly}" stroke="{colour}" stroke-width="2" stroke-dasharray="{dash}"/><text x="{}" y="{}">{label}</text>"#,
            lx + 24.0,
            lx + 30.0,
            ly + 4.0
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
