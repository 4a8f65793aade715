//! Static SVG plots: line charts over categories or a numeric axis, and heatmaps.

use std::fmt::Write as _;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 60.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

pub struct Series {
    pub name: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-300 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn header(svg: &mut String, title: &str, w: f64, h: f64) {
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        w / 2.0,
        escape(title)
    );
}

/// Line chart. With `categories`, x positions are indices into it and labelled by name.
pub fn line_chart(title: &str, y_label: &str, series: &[Series], categories: Option<&[String]>) -> String {
    let mut svg = String::new();
    header(&mut svg, title, WIDTH, HEIGHT);
    let (x0, x1) = match categories {
        Some(c) => (-0.5, c.len() as f64 - 0.5),
        None => range(series.iter().flat_map(|s| s.x.iter().copied())),
    };
    let (y0, y1) = range(series.iter().flat_map(|s| s.y.iter().copied()));
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let _ = writeln!(
        svg,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
    for i in 0..=4 {
        let y = y0 + (y1 - y0) * i as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="end">{:.3e}</text>"#,
            MARGIN - 4.0,
            py(y) + 4.0,
            y
        );
    }
    match categories {
        Some(cats) => {
            for (i, c) in cats.iter().enumerate() {
                let x = px(i as f64);
                let _ = writeln!(
                    svg,
                    r#"<text x="{x}" y="{}" text-anchor="end" transform="rotate(-35 {x} {})">{}</text>"#,
                    HEIGHT - MARGIN + 14.0,
                    HEIGHT - MARGIN + 14.0,
                    escape(c)
                );
            }
        }
        None => {
            for i in 0..=4 {
                let x = x0 + (x1 - x0) * i as f64 / 4.0;
                let _ = writeln!(
                    svg,
                    r#"<text x="{}" y="{}" text-anchor="middle">{:.3e}</text>"#,
                    px(x),
                    HEIGHT - MARGIN + 16.0,
                    x
                );
            }
        }
    }
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{}" transform="rotate(-90 16 {})" text-anchor="middle">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    );

    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let points: Vec<String> = s
            .x
            .iter()
            .zip(&s.y)
            .filter(|(_, y)| y.is_finite())
            .map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            points.join(" ")
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            WIDTH - MARGIN + 6.0,
            MARGIN + 14.0 * (k as f64 + 1.0),
            escape(&s.name)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Heatmap of `values[row][col]`, white (minimum) to dark red (maximum).
pub fn heatmap(title: &str, rows: &[String], cols: &[String], values: &[Vec<f64>]) -> String {
    let cell_w = 80.0;
    let cell_h = 22.0;
    let left = 150.0;
    let top = 60.0;
    let w = left + cell_w * cols.len() as f64 + 20.0;
    let h = top + cell_h * rows.len() as f64 + 20.0;
    let mut svg = String::new();
    header(&mut svg, title, w, h);
    let (lo, hi) = range(values.iter().flatten().copied());
    for (j, c) in cols.iter().enumerate() {
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            left + cell_w * (j as f64 + 0.5),
            top - 8.0,
            escape(c)
        );
    }
    for (i, r) in rows.iter().enumerate() {
        let y = top + cell_h * i as f64;
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            left - 6.0,
            y + cell_h * 0.7,
            escape(r)
        );
        for (j, &v) in values[i].iter().enumerate() {
            let t = ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
            let g = (255.0 * (1.0 - t)).round() as u8;
            let red = (255.0 - 100.0 * t).round() as u8;
            let _ = writeln!(
                svg,
                r##"<rect x="{}" y="{y}" width="{cell_w}" height="{cell_h}" fill="#{red:02x}{g:02x}{g:02x}" stroke="white"/>"##,
                left + cell_w * j as f64
            );
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" text-anchor="middle" font-size="10">{v:.4}</text>"#,
                left + cell_w * (j as f64 + 0.5),
                y + cell_h * 0.7
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}
