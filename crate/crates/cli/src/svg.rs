//! Minimal line charts as standalone SVG.
//!
//! The y axis always spans [0, 1]; the x axis spans the data. Coordinates are
//! written in shortest round-trip form, so [`value_x`] and [`value_y`]
//! recover each plotted value up to floating-point rounding.

use std::fmt::Write;

pub const WIDTH: f64 = 720.0;
pub const HEIGHT: f64 = 420.0;
pub const LEFT: f64 = 70.0;
pub const RIGHT: f64 = 150.0;
pub const TOP: f64 = 40.0;
pub const BOTTOM: f64 = 60.0;
pub const PLOT_W: f64 = WIDTH - LEFT - RIGHT;
pub const PLOT_H: f64 = HEIGHT - TOP - BOTTOM;

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub markers: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Dashed horizontal line at this y value.
    pub reference: Option<f64>,
}

/// Data range of the x axis; a single x value is widened by one unit.
pub fn x_range(series: &[Series]) -> (f64, f64) {
    let xs = series.iter().flat_map(|s| s.points.iter().map(|p| p.0));
    let (lo, hi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
    if lo < hi {
        (lo, hi)
    } else {
        (lo - 1.0, lo + 1.0)
    }
}

pub fn pixel_x(x: f64, (lo, hi): (f64, f64)) -> f64 {
    LEFT + (x - lo) / (hi - lo) * PLOT_W
}

pub fn pixel_y(y: f64) -> f64 {
    TOP + (1.0 - y) * PLOT_H
}

pub fn value_x(px: f64, (lo, hi): (f64, f64)) -> f64 {
    lo + (px - LEFT) / PLOT_W * (hi - lo)
}

pub fn value_y(py: f64) -> f64 {
    1.0 - (py - TOP) / PLOT_H
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn tick_label(v: f64, span: f64) -> String {
    if span >= 10.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

pub fn render(chart: &Chart) -> String {
    let range = x_range(&chart.series);
    let mut s = String::new();
    let w = &mut s;
    let _ = writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(w, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        w,
        r#"<text class="title" x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        LEFT + PLOT_W / 2.0,
        escape(&chart.title)
    );

    let (x0, x1, y0, y1) = (LEFT, LEFT + PLOT_W, TOP, TOP + PLOT_H);
    let _ = writeln!(w, r#"<g class="axes" stroke="black" fill="none">"#);
    let _ = writeln!(w, r#"<line x1="{x0}" y1="{y1}" x2="{x1}" y2="{y1}"/>"#);
    let _ = writeln!(w, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}"/>"#);
    let _ = writeln!(w, "</g>");
    let _ = writeln!(w, r#"<g class="ticks" fill="black">"#);
    for i in 0..=5 {
        let v = i as f64 / 5.0;
        let py = pixel_y(v);
        let _ = writeln!(
            w,
            r#"<line x1="{}" y1="{py}" x2="{x0}" y2="{py}" stroke="black"/><text x="{}" y="{}" text-anchor="end">{v:.1}</text>"#,
            x0 - 5.0,
            x0 - 8.0,
            py + 4.0
        );
        let xv = range.0 + v * (range.1 - range.0);
        let px = pixel_x(xv, range);
        let _ = writeln!(
            w,
            r#"<line x1="{px}" y1="{y1}" x2="{px}" y2="{}" stroke="black"/><text x="{px}" y="{}" text-anchor="middle">{}</text>"#,
            y1 + 5.0,
            y1 + 18.0,
            tick_label(xv, range.1 - range.0)
        );
    }
    let _ = writeln!(w, "</g>");
    let _ = writeln!(
        w,
        r#"<text class="x-label" x="{}" y="{}" text-anchor="middle">{}</text>"#,
        LEFT + PLOT_W / 2.0,
        HEIGHT - 18.0,
        escape(&chart.x_label)
    );
    let _ = writeln!(
        w,
        r#"<text class="y-label" x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">{1}</text>"#,
        TOP + PLOT_H / 2.0,
        escape(&chart.y_label)
    );

    if let Some(r) = chart.reference {
        let py = pixel_y(r);
        let _ = writeln!(
            w,
            r##"<line class="reference" x1="{x0}" y1="{py}" x2="{x1}" y2="{py}" stroke="#555555" stroke-dasharray="6 4"/>"##
        );
        let _ = writeln!(w, r##"<text x="{}" y="{}" fill="#555555">{r}</text>"##, x1 + 4.0, py + 4.0);
    }

    for (i, series) in chart.series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(w, r#"<g class="series" data-name="{}">"#, escape(&series.name));
        let pts: Vec<String> = series
            .points
            .iter()
            .map(|&(x, y)| format!("{},{}", pixel_x(x, range), pixel_y(y)))
            .collect();
        let _ = writeln!(
            w,
            r#"<polyline class="line" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        if series.markers {
            for &(x, y) in &series.points {
                let _ = writeln!(
                    w,
                    r#"<circle class="marker" cx="{}" cy="{}" r="3" fill="{color}"/>"#,
                    pixel_x(x, range),
                    pixel_y(y)
                );
            }
        }
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let _ = writeln!(
            w,
            r#"<line class="legend" x1="{0}" y1="{ly}" x2="{1}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{2}" y="{3}">{4}</text>"#,
            x1 + 10.0,
            x1 + 30.0,
            x1 + 35.0,
            ly + 4.0,
            escape(&series.name)
        );
        let _ = writeln!(w, "</g>");
    }
    let _ = writeln!(w, "</svg>");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chart(points: Vec<(f64, f64)>, reference: Option<f64>) -> Chart {
        Chart {
            title: "t".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            series: vec![Series {
                name: "a & b".into(),
                points,
                markers: true,
            }],
            reference,
        }
    }

    #[test]
    fn transforms_invert() {
        let range = (3.0, 97.0);
        for x in [3.0, 10.5, 97.0] {
            assert!((value_x(pixel_x(x, range), range) - x).abs() < 1e-12);
        }
        for y in [0.0, 0.05, 0.731, 1.0] {
            assert!((value_y(pixel_y(y)) - y).abs() < 1e-12);
        }
    }

    #[test]
    fn single_point_range_is_widened() {
        let c = chart(vec![(5.0, 0.5)], None);
        assert_eq!(x_range(&c.series), (4.0, 6.0));
    }

    #[test]
    fn structure() {
        let svg = render(&chart(vec![(1.0, 1.0), (2.0, 1.0)], Some(0.05)));
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches(r#"class="marker""#).count(), 2);
        assert_eq!(svg.matches(r#"class="reference""#).count(), 1);
        assert!(svg.contains("a &amp; b"));
        // p = 1 sits above the reference line (smaller pixel y)
        assert!(pixel_y(1.0) < pixel_y(0.05));
    }
}
