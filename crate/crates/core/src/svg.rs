//! Trajectory plots as plain SVG text. Output depends only on the inputs, so
//! files can be compared byte for byte.

use std::fmt::Write as _;

pub const PLANNED_COLOR: &str = "#1f4fd8";
pub const ACTUAL_COLOR: &str = "#d62728";
const PLANT_COLOR: &str = "#9bc995";

/// Map-frame data for one plot, in metres.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlotData {
    pub title: String,
    pub planned: Vec<(f64, f64)>,
    pub actual: Vec<(f64, f64)>,
    /// Plant centres and radii drawn underneath.
    pub plants: Vec<(f64, f64, f64)>,
}

/// Largest 1/2/5 x 10^k not above `target`.
pub fn nice_length(target: f64) -> f64 {
    if !(target > 0.0) || !target.is_finite() {
        return 1.0;
    }
    let base = 10f64.powf(target.log10().floor());
    [5.0, 2.0, 1.0]
        .into_iter()
        .map(|m| m * base)
        .find(|&l| l <= target)
        .unwrap_or(base)
}

struct Frame {
    min: (f64, f64),
    max_y: f64,
    scale: f64,
    margin: f64,
}

impl Frame {
    fn px(&self, p: (f64, f64)) -> (f64, f64) {
        (
            self.margin + (p.0 - self.min.0) * self.scale,
            self.margin + (self.max_y - p.1) * self.scale,
        )
    }
}

pub fn render(data: &PlotData) -> String {
    const WIDTH: f64 = 800.0;
    const MARGIN: f64 = 40.0;
    const FOOTER: f64 = 70.0;

    let mut min = (f64::INFINITY, f64::INFINITY);
    let mut max = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let pts = data
        .planned
        .iter()
        .chain(&data.actual)
        .copied()
        .chain(data.plants.iter().flat_map(|&(x, y, r)| [(x - r, y - r), (x + r, y + r)]));
    for (x, y) in pts {
        min = (min.0.min(x), min.1.min(y));
        max = (max.0.max(x), max.1.max(y));
    }
    if !min.0.is_finite() {
        min = (0.0, 0.0);
        max = (1.0, 1.0);
    }
    let span = ((max.0 - min.0).max(1e-9), (max.1 - min.1).max(1e-9));
    let scale = (WIDTH - 2.0 * MARGIN) / span.0;
    let plot_h = span.1 * scale;
    let height = plot_h + 2.0 * MARGIN + FOOTER;
    let f = Frame {
        min,
        max_y: max.1,
        scale,
        margin: MARGIN,
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH:.0}" height="{height:.0}" viewBox="0 0 {WIDTH:.0} {height:.0}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{MARGIN:.0}" y="24" font-family="sans-serif" font-size="16">{}</text>"#,
        escape(&data.title)
    );

    let _ = writeln!(s, r#"<g id="plants" fill="{PLANT_COLOR}" stroke="none">"#);
    for &(x, y, r) in &data.plants {
        let (cx, cy) = f.px((x, y));
        let _ = writeln!(s, r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="{:.2}"/>"#, r * scale);
    }
    let _ = writeln!(s, "</g>");

    if !data.actual.is_empty() {
        let mut d = String::new();
        for (i, &p) in data.actual.iter().enumerate() {
            let (x, y) = f.px(p);
            let _ = write!(d, "{}{x:.2},{y:.2}", if i == 0 { "M" } else { " L" });
        }
        let _ = writeln!(
            s,
            r#"<path id="trajectory" d="{d}" fill="none" stroke="{ACTUAL_COLOR}" stroke-width="1.5"/>"#
        );
    }

    let _ = writeln!(s, r#"<g id="planned" fill="{PLANNED_COLOR}">"#);
    for &p in &data.planned {
        let (x, y) = f.px(p);
        let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="4"/>"#);
    }
    let _ = writeln!(s, "</g>");

    // legend and scale bar sit under the plot
    let base = MARGIN + plot_h + 30.0;
    let _ = writeln!(s, r#"<g id="legend" font-family="sans-serif" font-size="13">"#);
    let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{PLANNED_COLOR}"/>"#, MARGIN + 6.0, base);
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">planned waypoints</text>"#, MARGIN + 16.0, base + 4.0);
    let _ = writeln!(
        s,
        r#"<line x1="{:.2}" y1="{base:.2}" x2="{:.2}" y2="{base:.2}" stroke="{ACTUAL_COLOR}" stroke-width="2"/>"#,
        MARGIN + 170.0,
        MARGIN + 190.0
    );
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">actual trajectory</text>"#, MARGIN + 196.0, base + 4.0);
    let _ = writeln!(s, "</g>");

    let bar = nice_length(0.25 * span.0);
    let (x0, x1) = (WIDTH - MARGIN - bar * scale, WIDTH - MARGIN);
    let _ = writeln!(s, r#"<g id="scale" font-family="sans-serif" font-size="13">"#);
    let _ = writeln!(
        s,
        r#"<line x1="{x0:.2}" y1="{base:.2}" x2="{x1:.2}" y2="{base:.2}" stroke="black" stroke-width="3"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{} m</text>"#,
        0.5 * (x0 + x1),
        base + 20.0,
        bar
    );
    let _ = writeln!(s, "</g>");
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
