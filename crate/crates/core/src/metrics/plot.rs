//! SVG and CSV renderings of steerability curves.

use std::fmt::Write as _;

use super::curve::SteerabilityCurve;
use crate::persona::Direction;

const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 320.0;
const MARGIN_L: f64 = 56.0;
const MARGIN_R: f64 = 16.0;
const MARGIN_T: f64 = 32.0;
const MARGIN_B: f64 = 44.0;

fn colour(direction: Direction) -> &'static str {
    match direction {
        Direction::Positive => "#2e7d32",
        Direction::Negative => "#c62828",
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Both directions of one dimension on shared axes: index in [-1, 1] against
/// steering budget, with ±1 std bands.
pub fn curve_svg(dimension: &str, curves: &[&SteerabilityCurve]) -> String {
    let ks = curves.iter().flat_map(|c| c.points.iter().map(|p| p.k));
    let k_min = ks.clone().min().unwrap_or(0) as f64;
    let k_max = ks.max().unwrap_or(1) as f64;
    let span = if k_max > k_min { k_max - k_min } else { 1.0 };
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let sx = |k: f64| MARGIN_L + (k - k_min) / span * plot_w;
    let sy = |v: f64| MARGIN_T + (1.0 - v.clamp(-1.0, 1.0)) / 2.0 * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="18" text-anchor="middle" font-size="13">{}</text>"#,
        WIDTH / 2.0,
        escape(dimension)
    );
    for tick in [-1.0, -0.5, 0.0, 0.5, 1.0] {
        let y = sy(tick);
        let stroke = if tick == 0.0 { "#888" } else { "#e0e0e0" };
        let _ = writeln!(
            svg,
            r#"<line x1="{MARGIN_L}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{stroke}"/>"#,
            WIDTH - MARGIN_R
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{tick:.1}</text>"#,
            MARGIN_L - 6.0,
            y + 4.0
        );
    }
    let mut ticks: Vec<usize> = curves.iter().flat_map(|c| c.points.iter().map(|p| p.k)).collect();
    ticks.sort_unstable();
    ticks.dedup();
    for k in &ticks {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{k}</text>"#,
            sx(*k as f64),
            HEIGHT - MARGIN_B + 16.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">steering budget k</text>"#,
        MARGIN_L + plot_w / 2.0,
        HEIGHT - 8.0
    );
    let _ = writeln!(
        svg,
        r#"<text transform="translate(14 {:.2}) rotate(-90)" text-anchor="middle">steerability index</text>"#,
        MARGIN_T + plot_h / 2.0
    );

    for curve in curves {
        if curve.points.is_empty() {
            continue;
        }
        let c = colour(curve.direction);
        let upper = curve
            .points
            .iter()
            .map(|p| format!("{:.2},{:.2}", sx(p.k as f64), sy(p.mean + p.std)));
        let lower = curve
            .points
            .iter()
            .rev()
            .map(|p| format!("{:.2},{:.2}", sx(p.k as f64), sy(p.mean - p.std)));
        let band: Vec<String> = upper.chain(lower).collect();
        let _ = writeln!(
            svg,
            r#"<polygon points="{}" fill="{c}" fill-opacity="0.15" stroke="none"/>"#,
            band.join(" ")
        );
        let line: Vec<String> = curve
            .points
            .iter()
            .map(|p| format!("{:.2},{:.2}", sx(p.k as f64), sy(p.mean)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{c}" stroke-width="2"><title>{}</title></polyline>"#,
            line.join(" "),
            curve.direction
        );
        for p in &curve.points {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{c}"/>"#,
                sx(p.k as f64),
                sy(p.mean)
            );
        }
    }
    let legend_y = MARGIN_T + 8.0;
    for (i, d) in Direction::BOTH.iter().enumerate() {
        let x = WIDTH - MARGIN_R - 90.0;
        let y = legend_y + 14.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{}" stroke-width="2"/><text x="{}" y="{}">{d}</text>"#,
            x + 16.0,
            colour(*d),
            x + 20.0,
            y + 4.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// `dimension,direction,k,mean,std` rows.
pub fn curves_csv<'a>(curves: impl IntoIterator<Item = &'a SteerabilityCurve>) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["dimension", "direction", "k", "mean", "std"])?;
    for c in curves {
        for p in &c.points {
            w.write_record([
                c.dimension.clone(),
                c.direction.to_string(),
                p.k.to_string(),
                format!("{:.6}", p.mean),
                format!("{:.6}", p.std),
            ])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
