//! Minimal static SVG line and scatter plots.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 60.0;
const COLOURS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

pub struct Series<'a> {
    pub label: &'a str,
    pub points: &'a [(f64, f64)],
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
    equal_aspect: bool,
}

impl Frame {
    fn fit(points: impl Iterator<Item = (f64, f64)>, equal_aspect: bool) -> Self {
        let (mut x, mut y) = ((f64::INFINITY, f64::NEG_INFINITY), (f64::INFINITY, f64::NEG_INFINITY));
        for (px, py) in points.filter(|p| p.0.is_finite() && p.1.is_finite()) {
            x = (x.0.min(px), x.1.max(px));
            y = (y.0.min(py), y.1.max(py));
        }
        if !x.0.is_finite() {
            x = (0.0, 1.0);
            y = (0.0, 1.0);
        }
        let pad = |r: (f64, f64)| {
            let span = r.1 - r.0;
            let p = if span > 0.0 { 0.05 * span } else { r.0.abs().max(1.0) * 0.05 };
            (r.0 - p, r.1 + p)
        };
        let (mut x, mut y) = (pad(x), pad(y));
        if equal_aspect {
            let half = 0.5 * (x.1 - x.0).max(y.1 - y.0);
            let (cx, cy) = (0.5 * (x.0 + x.1), 0.5 * (y.0 + y.1));
            x = (cx - half, cx + half);
            y = (cy - half, cy + half);
        }
        Self { x, y, equal_aspect }
    }

    fn plot_width(&self) -> f64 {
        if self.equal_aspect {
            HEIGHT - 2.0 * MARGIN
        } else {
            WIDTH - 2.0 * MARGIN
        }
    }

    fn map(&self, p: (f64, f64)) -> (f64, f64) {
        let w = self.plot_width();
        let h = HEIGHT - 2.0 * MARGIN;
        (
            MARGIN + (p.0 - self.x.0) / (self.x.1 - self.x.0) * w,
            HEIGHT - MARGIN - (p.1 - self.y.0) / (self.y.1 - self.y.0) * h,
        )
    }
}

fn header(out: &mut String, title: &str, x_label: &str, y_label: &str, frame: &Frame) {
    let w = frame.plot_width();
    let h = HEIGHT - 2.0 * MARGIN;
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{w}" height="{h}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(out, r#"<text x="{}" y="30" text-anchor="middle" font-size="14">{}</text>"#, MARGIN + w / 2.0, escape(title));
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        MARGIN + w / 2.0,
        HEIGHT - 15.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="15" y="{}" text-anchor="middle" transform="rotate(-90 15 {})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    );
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let xv = frame.x.0 + f * (frame.x.1 - frame.x.0);
        let yv = frame.y.0 + f * (frame.y.1 - frame.y.0);
        let (px, _) = frame.map((xv, frame.y.0));
        let (_, py) = frame.map((frame.x.0, yv));
        let _ = writeln!(
            out,
            r#"<text x="{px:.1}" y="{}" text-anchor="middle">{}</text>"#,
            HEIGHT - MARGIN + 16.0,
            tick(xv)
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{py:.1}" text-anchor="end" dominant-baseline="middle">{}</text>"#,
            MARGIN - 4.0,
            tick(yv)
        );
    }
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn legend(out: &mut String, series: &[Series]) {
    if series.len() < 2 {
        return;
    }
    for (k, s) in series.iter().enumerate() {
        let y = MARGIN + 16.0 + 16.0 * k as f64;
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{y}" fill="{}">{}</text>"#,
            MARGIN + 8.0,
            COLOURS[k % COLOURS.len()],
            escape(s.label)
        );
    }
}

pub fn line_plot(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let frame = Frame::fit(series.iter().flat_map(|s| s.points.iter().copied()), false);
    let mut out = String::new();
    header(&mut out, title, x_label, y_label, &frame);
    for (k, s) in series.iter().enumerate() {
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|&p| {
                let (x, y) = frame.map(p);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
            COLOURS[k % COLOURS.len()],
            pts.join(" ")
        );
    }
    legend(&mut out, series);
    out.push_str("</svg>\n");
    out
}

/// Scatter with equal axis scales.
pub fn scatter_plot(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let frame = Frame::fit(series.iter().flat_map(|s| s.points.iter().copied()), true);
    let mut out = String::new();
    header(&mut out, title, x_label, y_label, &frame);
    for (k, s) in series.iter().enumerate() {
        for &p in s.points.iter().filter(|p| p.0.is_finite() && p.1.is_finite()) {
            let (x, y) = frame.map(p);
            let _ = writeln!(
                out,
                r#"<circle cx="{x:.2}" cy="{y:.2}" r="2" fill="{}"/>"#,
                COLOURS[k % COLOURS.len()]
            );
        }
    }
    legend(&mut out, series);
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plots_are_well_formed() {
        let pts = [(0.0, 1.0), (1.0, 2.0), (2.0, 0.5)];
        let svg = line_plot("t", "x", "y", &[Series { label: "a", points: &pts }]);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert_eq!(svg.matches("<polyline").count(), 1);
        let svg = scatter_plot("t", "x", "y", &[Series { label: "a", points: &pts }]);
        assert_eq!(svg.matches("<circle").count(), 3);
    }

    #[test]
    fn empty_and_degenerate_input() {
        let svg = line_plot("t", "x", "y", &[Series { label: "a", points: &[] }]);
        assert!(svg.contains("<polyline"));
        let svg = scatter_plot("t", "x", "y", &[Series { label: "a", points: &[(1.0, 1.0)] }]);
        assert!(!svg.contains("NaN"));
    }
}
