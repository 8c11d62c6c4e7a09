//! Minimal static SVG figures with deterministic text output.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;
const TICKS: usize = 5;

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
    out: String,
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    padded(lo, hi)
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Frame {
    fn new(x: (f64, f64), y: (f64, f64), title: &str, xlabel: &str, ylabel: &str) -> Self {
        let mut f = Frame {
            x,
            y,
            out: String::new(),
        };
        let _ = writeln!(
            f.out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(f.out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            f.out,
            r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            WIDTH / 2.0,
            esc(title)
        );
        let (x0, y0, x1, y1) = (LEFT, HEIGHT - BOTTOM, WIDTH - RIGHT, TOP);
        let _ = writeln!(
            f.out,
            r#"<path d="M{x0:.2},{y1:.2} L{x0:.2},{y0:.2} L{x1:.2},{y0:.2}" fill="none" stroke="black"/>"#
        );
        for i in 0..=TICKS {
            let t = i as f64 / TICKS as f64;
            let xv = x.0 + t * (x.1 - x.0);
            let yv = y.0 + t * (y.1 - y.0);
            let (px, py) = (f.px(xv), f.py(yv));
            let _ = writeln!(
                f.out,
                r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{xv:.2}</text>"#,
                y0 + 18.0
            );
            let _ = writeln!(
                f.out,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{yv:.3}</text>"#,
                x0 - 6.0,
                py + 4.0
            );
        }
        let _ = writeln!(
            f.out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            (x0 + x1) / 2.0,
            HEIGHT - 12.0,
            esc(xlabel)
        );
        let _ = writeln!(
            f.out,
            r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
            (y0 + y1) / 2.0,
            (y0 + y1) / 2.0,
            esc(ylabel)
        );
        f
    }

    fn px(&self, v: f64) -> f64 {
        LEFT + (v - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, v: f64) -> f64 {
        HEIGHT - BOTTOM - (v - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - TOP - BOTTOM)
    }

    fn polyline(&mut self, pts: &[(f64, f64)], style: &str) {
        let d: Vec<String> = pts
            .iter()
            .filter(|(a, b)| a.is_finite() && b.is_finite())
            .enumerate()
            .map(|(i, &(a, b))| {
                format!("{}{:.2},{:.2}", if i == 0 { 'M' } else { 'L' }, self.px(a), self.py(b))
            })
            .collect();
        if !d.is_empty() {
            let _ = writeln!(self.out, r#"<path d="{}" fill="none" {style}/>"#, d.join(" "));
        }
    }

    fn vline(&mut self, x: f64) {
        let px = self.px(x);
        let _ = writeln!(
            self.out,
            r#"<path d="M{px:.2},{:.2} L{px:.2},{:.2}" stroke="gray" stroke-dasharray="6,4"/>"#,
            TOP,
            HEIGHT - BOTTOM
        );
    }

    fn hline(&mut self, y: f64) {
        let py = self.py(y);
        let _ = writeln!(
            self.out,
            r#"<path d="M{LEFT:.2},{py:.2} L{:.2},{py:.2}" stroke="lightgray"/>"#,
            WIDTH - RIGHT
        );
    }

    fn dot(&mut self, x: f64, y: f64) {
        if x.is_finite() && y.is_finite() {
            let _ = writeln!(
                self.out,
                r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="steelblue"/>"#,
                self.px(x),
                self.py(y)
            );
        }
    }

    fn finish(mut self) -> String {
        self.out.push_str("</svg>\n");
        self.out
    }
}

/// Point estimates with a 95% band and a dashed line at `marker`.
pub fn path_plot(
    title: &str,
    x: &[f64],
    estimate: &[f64],
    lower: &[f64],
    upper: &[f64],
    marker: f64,
    labels: (&str, &str),
) -> String {
    let xr = range(x.iter().copied().chain([marker]));
    let yr = range(lower.iter().chain(upper).chain(estimate).copied().chain([0.0]));
    let mut f = Frame::new(xr, yr, title, labels.0, labels.1);
    f.hline(0.0);
    f.vline(marker);
    let band = |v: &[f64]| x.iter().copied().zip(v.iter().copied()).collect::<Vec<_>>();
    f.polyline(&band(lower), r#"stroke="gray" stroke-dasharray="3,3""#);
    f.polyline(&band(upper), r#"stroke="gray" stroke-dasharray="3,3""#);
    f.polyline(&band(estimate), r#"stroke="black" stroke-width="2""#);
    for (a, b) in x.iter().zip(estimate) {
        f.dot(*a, *b);
    }
    f.finish()
}

/// A fitted line `intercept + slope·x` drawn over `[from, to]`.
#[derive(Debug, Clone, Copy)]
pub struct Segment {
    pub from: f64,
    pub to: f64,
    pub intercept: f64,
    pub slope: f64,
}

/// Scatter of points, fitted segments and a dashed line at `marker`.
pub fn scatter_plot(
    title: &str,
    points: &[(f64, f64)],
    segments: &[Segment],
    marker: f64,
    labels: (&str, &str),
) -> String {
    let xr = range(points.iter().map(|p| p.0).chain([marker]));
    let yr = range(points.iter().map(|p| p.1));
    let mut f = Frame::new(xr, yr, title, labels.0, labels.1);
    f.vline(marker);
    for &(a, b) in points {
        f.dot(a, b);
    }
    for s in segments {
        let pts = [
            (s.from, s.intercept + s.slope * s.from),
            (s.to, s.intercept + s.slope * s.to),
        ];
        f.polyline(&pts, r#"stroke="firebrick" stroke-width="2""#);
    }
    f.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svg_is_well_formed_and_stable() {
        let a = path_plot("t", &[-1.0, 0.0, 1.0], &[0.0, 0.5, 0.8], &[0.0, 0.3, 0.5], &[0.0, 0.7, 1.1], -0.5, ("x", "y"));
        let b = path_plot("t", &[-1.0, 0.0, 1.0], &[0.0, 0.5, 0.8], &[0.0, 0.3, 0.5], &[0.0, 0.7, 1.1], -0.5, ("x", "y"));
        assert_eq!(a, b);
        assert!(a.starts_with("<svg") && a.ends_with("</svg>\n"));
        assert!(a.contains("stroke-dasharray=\"6,4\""));
    }
}
