//! Minimal deterministic SVG rendering: scatter panels and line charts.
//!
//! Output depends only on the input data. Coordinates are printed with two
//! decimals and colors come from a fixed palette indexed by class.

use std::fmt::Write;

/// One color per class index, then a neutral color for unlabelled points.
pub const PALETTE: [&str; 4] = ["#d62728", "#1f77b4", "#7f7f7f", "#2ca02c"];
pub const UNLABELLED: &str = "#9467bd";
/// Colors for line series, cycled in order.
pub const SERIES_COLORS: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

const PANEL_W: f64 = 320.0;
const PANEL_H: f64 = 320.0;
const MARGIN: f64 = 40.0;
const TITLE_H: f64 = 24.0;

#[derive(Clone, Debug, Default)]
pub struct ScatterPanel {
    pub title: String,
    pub points: Vec<(f64, f64, Option<usize>)>,
}

#[derive(Clone, Debug, Default)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Copy, Debug)]
struct Bounds {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Bounds {
    fn of(points: impl Iterator<Item = (f64, f64)>) -> Self {
        let mut b = Bounds {
            x0: f64::INFINITY,
            x1: f64::NEG_INFINITY,
            y0: f64::INFINITY,
            y1: f64::NEG_INFINITY,
        };
        for (x, y) in points.filter(|(x, y)| x.is_finite() && y.is_finite()) {
            b.x0 = b.x0.min(x);
            b.x1 = b.x1.max(x);
            b.y0 = b.y0.min(y);
            b.y1 = b.y1.max(y);
        }
        if !b.x0.is_finite() {
            return Bounds {
                x0: 0.0,
                x1: 1.0,
                y0: 0.0,
                y1: 1.0,
            };
        }
        let pad = |lo: f64, hi: f64| {
            let span = if hi > lo { hi - lo } else { 1.0 };
            (lo - 0.05 * span, hi + 0.05 * span)
        };
        let (x0, x1) = pad(b.x0, b.x1);
        let (y0, y1) = pad(b.y0, b.y1);
        Bounds { x0, x1, y0, y1 }
    }

    fn map(&self, x: f64, y: f64, ox: f64, oy: f64, w: f64, h: f64) -> (f64, f64) {
        (
            ox + (x - self.x0) / (self.x1 - self.x0) * w,
            oy + h - (y - self.y0) / (self.y1 - self.y0) * h,
        )
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn header(out: &mut String, w: f64, h: f64) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        out,
        r#"<rect width="{w:.0}" height="{h:.0}" fill="white"/>"#
    );
}

fn axes(out: &mut String, b: &Bounds, ox: f64, oy: f64, w: f64, h: f64) {
    let _ = writeln!(
        out,
        r##"<rect x="{ox:.2}" y="{oy:.2}" width="{w:.2}" height="{h:.2}" fill="none" stroke="#333"/>"##
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}">{:.2}</text>"#,
        ox,
        oy + h + 14.0,
        b.x0
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{:.2}</text>"#,
        ox + w,
        oy + h + 14.0,
        b.x1
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{:.2}</text>"#,
        ox - 4.0,
        oy + h,
        b.y0
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{:.2}</text>"#,
        ox - 4.0,
        oy + 10.0,
        b.y1
    );
}

/// Side-by-side scatter panels, each with its own axis range.
pub fn scatter_svg(panels: &[ScatterPanel]) -> String {
    let n = panels.len().max(1) as f64;
    let (w, h) = (
        n * (PANEL_W + MARGIN) + MARGIN,
        PANEL_H + 2.0 * MARGIN + TITLE_H,
    );
    let mut out = String::new();
    header(&mut out, w, h);
    for (i, panel) in panels.iter().enumerate() {
        let ox = MARGIN + i as f64 * (PANEL_W + MARGIN);
        let oy = MARGIN + TITLE_H;
        let b = Bounds::of(panel.points.iter().map(|&(x, y, _)| (x, y)));
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="13">{}</text>"#,
            ox,
            MARGIN,
            escape(&panel.title)
        );
        axes(&mut out, &b, ox, oy, PANEL_W, PANEL_H);
        for &(x, y, label) in &panel.points {
            if !(x.is_finite() && y.is_finite()) {
                continue;
            }
            let (px, py) = b.map(x, y, ox, oy, PANEL_W, PANEL_H);
            let color = label.map_or(UNLABELLED, |l| PALETTE[l % PALETTE.len()]);
            let _ = writeln!(
                out,
                r#"<circle cx="{px:.2}" cy="{py:.2}" r="1.8" fill="{color}" fill-opacity="0.7"/>"#
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

/// One line chart with a legend.
pub fn line_svg(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let legend_w = 150.0;
    let (w, h) = (
        PANEL_W * 1.5 + 2.0 * MARGIN + legend_w,
        PANEL_H + 2.0 * MARGIN + TITLE_H,
    );
    let (pw, ph) = (PANEL_W * 1.5, PANEL_H);
    let (ox, oy) = (MARGIN + 10.0, MARGIN + TITLE_H);
    let b = Bounds::of(series.iter().flat_map(|s| s.points.iter().copied()));
    let mut out = String::new();
    header(&mut out, w, h);
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" font-size="13">{}</text>"#,
        ox,
        MARGIN,
        escape(title)
    );
    axes(&mut out, &b, ox, oy, pw, ph);
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        ox + pw / 2.0,
        oy + ph + 28.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" transform="rotate(-90 {:.2} {:.2})">{}</text>"#,
        ox - 30.0,
        oy + ph / 2.0,
        ox - 30.0,
        oy + ph / 2.0,
        escape(y_label)
    );
    for (i, s) in series.iter().enumerate() {
        let color = SERIES_COLORS[i % SERIES_COLORS.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| {
                let (px, py) = b.map(x, y, ox, oy, pw, ph);
                format!("{px:.2},{py:.2}")
            })
            .collect();
        if !pts.is_empty() {
            let _ = writeln!(
                out,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                pts.join(" ")
            );
        }
        let ly = oy + 14.0 * i as f64;
        let lx = ox + pw + 14.0;
        let _ = writeln!(
            out,
            r#"<rect x="{lx:.2}" y="{:.2}" width="10" height="10" fill="{color}"/>"#,
            ly - 9.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{ly:.2}">{}</text>"#,
            lx + 14.0,
            escape(&s.name)
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_inputs_render_axes() {
        let s = line_svg("t", "x", "y", &[]);
        assert!(s.starts_with("<svg") && s.ends_with("</svg>\n"));
        assert!(s.contains("<rect"));
        assert!(!s.contains("<polyline"));
        let p = scatter_svg(&[ScatterPanel {
            title: "empty".into(),
            points: vec![],
        }]);
        assert!(!p.contains("<circle"));
    }

    #[test]
    fn scatter_uses_one_color_per_class() {
        let panel = ScatterPanel {
            title: "a<b".into(),
            points: (0..8)
                .map(|i| (i as f64, (i * i) as f64, Some(i % 4)))
                .collect(),
        };
        let s = scatter_svg(&[panel.clone()]);
        for c in PALETTE {
            assert!(s.contains(c), "{c}");
        }
        assert!(s.contains("a&lt;b"));
        assert_eq!(s, scatter_svg(&[panel]));
    }

    #[test]
    fn constant_series_keeps_finite_coordinates() {
        let s = line_svg(
            "flat",
            "epoch",
            "loss",
            &[Series {
                name: "d1".into(),
                points: vec![(0.0, 1.0), (1.0, 1.0)],
            }],
        );
        assert!(!s.contains("NaN") && !s.contains("inf"));
    }
}
