//! Minimal hand-rolled SVG line charts: axes with 1-2-5 ticks, gridlines,
//! one polyline per series, and a legend.

use std::path::Path;

use aif_core::Result;

pub const PALETTE: [&str; 6] =
    ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

pub struct Series {
    pub label: String,
    pub color: &'static str,
    pub dashed: bool,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(label: &str, color: &'static str, points: Vec<(f64, f64)>) -> Self {
        Series { label: label.to_string(), color, dashed: false, points }
    }

    pub fn dashed(label: &str, color: &'static str, points: Vec<(f64, f64)>) -> Self {
        Series { label: label.to_string(), color, dashed: true, points }
    }
}

pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

const W: f64 = 760.0;
const H: f64 = 480.0;
const ML: f64 = 72.0; // left margin
const MR: f64 = 24.0;
const MT: f64 = 48.0;
const MB: f64 = 56.0;

/// Largest 1-2-5 step that yields at most ~8 ticks over `span`.
fn tick_step(span: f64) -> f64 {
    let raw = span / 6.0;
    let mag = 10f64.powf(raw.abs().log10().floor());
    for mult in [1.0, 2.0, 5.0] {
        if mag * mult >= raw {
            return mag * mult;
        }
    }
    mag * 10.0
}

fn fmt_tick(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    let a = x.abs();
    if a >= 100_000.0 || a < 0.001 {
        format!("{x:.1e}")
    } else if a >= 10.0 {
        format!("{x:.0}")
    } else if a >= 0.1 {
        format!("{x:.2}")
    } else {
        format!("{x:.3}")
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Chart {
    pub fn render(&self) -> String {
        // Data bounds over finite points only.
        let mut xmin = f64::INFINITY;
        let mut xmax = f64::NEG_INFINITY;
        let mut ymin = f64::INFINITY;
        let mut ymax = f64::NEG_INFINITY;
        for s in &self.series {
            for &(x, y) in &s.points {
                if x.is_finite() && y.is_finite() {
                    xmin = xmin.min(x);
                    xmax = xmax.max(x);
                    ymin = ymin.min(y);
                    ymax = ymax.max(y);
                }
            }
        }
        if !xmin.is_finite() {
            xmin = 0.0;
            xmax = 1.0;
            ymin = 0.0;
            ymax = 1.0;
        }
        if xmax - xmin < 1e-12 {
            xmin -= 0.5;
            xmax += 0.5;
        }
        if ymax - ymin < 1e-12 {
            ymin -= 0.5;
            ymax += 0.5;
        }
        let ypad = 0.06 * (ymax - ymin);
        ymin -= ypad;
        ymax += ypad;

        let px = |x: f64| ML + (x - xmin) / (xmax - xmin) * (W - ML - MR);
        let py = |y: f64| H - MB - (y - ymin) / (ymax - ymin) * (H - MT - MB);

        let mut out = String::new();
        out.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
             viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\">\n"
        ));
        out.push_str(&format!(
            "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n"
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">{}</text>\n",
            W / 2.0,
            esc(&self.title)
        ));

        // Gridlines + ticks.
        let xstep = tick_step(xmax - xmin);
        let ystep = tick_step(ymax - ymin);
        let mut t = (xmin / xstep).ceil() * xstep;
        while t <= xmax + 1e-9 * xstep {
            let x = px(t);
            out.push_str(&format!(
                "<line x1=\"{x:.1}\" y1=\"{MT}\" x2=\"{x:.1}\" y2=\"{:.1}\" stroke=\"#ddd\"/>\n",
                H - MB
            ));
            out.push_str(&format!(
                "<text x=\"{x:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"11\">{}</text>\n",
                H - MB + 18.0,
                fmt_tick(t)
            ));
            t += xstep;
        }
        let mut t = (ymin / ystep).ceil() * ystep;
        while t <= ymax + 1e-9 * ystep {
            let y = py(t);
            out.push_str(&format!(
                "<line x1=\"{ML}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"#ddd\"/>\n",
                W - MR
            ));
            out.push_str(&format!(
                "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\" font-size=\"11\">{}</text>\n",
                ML - 6.0,
                y + 4.0,
                fmt_tick(t)
            ));
            t += ystep;
        }

        // Axes.
        out.push_str(&format!(
            "<line x1=\"{ML}\" y1=\"{MT}\" x2=\"{ML}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
            H - MB
        ));
        out.push_str(&format!(
            "<line x1=\"{ML}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
            H - MB,
            W - MR,
            H - MB
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"13\">{}</text>\n",
            (ML + W - MR) / 2.0,
            H - 12.0,
            esc(&self.x_label)
        ));
        out.push_str(&format!(
            "<text x=\"16\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"13\" \
             transform=\"rotate(-90 16 {:.1})\">{}</text>\n",
            (MT + H - MB) / 2.0,
            (MT + H - MB) / 2.0,
            esc(&self.y_label)
        ));

        // Series.
        for s in &self.series {
            let pts: Vec<String> = s
                .points
                .iter()
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .map(|&(x, y)| format!("{:.1},{:.1}", px(x), py(y)))
                .collect();
            if pts.is_empty() {
                continue;
            }
            let dash = if s.dashed { " stroke-dasharray=\"6,4\"" } else { "" };
            if pts.len() == 1 {
                let (x, y) = pts[0].split_once(',').map(|(a, b)| (a.to_string(), b.to_string())).unwrap();
                out.push_str(&format!(
                    "<circle cx=\"{x}\" cy=\"{y}\" r=\"3\" fill=\"{}\"/>\n",
                    s.color
                ));
            } else {
                out.push_str(&format!(
                    "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.6\"{dash}/>\n",
                    pts.join(" "),
                    s.color
                ));
            }
        }

        // Legend (top-right inside the plot area).
        for (i, s) in self.series.iter().enumerate() {
            let y = MT + 14.0 + 18.0 * i as f64;
            let x = W - MR - 170.0;
            let dash = if s.dashed { " stroke-dasharray=\"6,4\"" } else { "" };
            out.push_str(&format!(
                "<line x1=\"{x:.1}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"{}\" \
                 stroke-width=\"1.6\"{dash}/>\n",
                x + 24.0,
                s.color
            ));
            out.push_str(&format!(
                "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\">{}</text>\n",
                x + 30.0,
                y + 4.0,
                esc(&s.label)
            ));
        }
        out.push_str("</svg>\n");
        out
    }
}

pub fn write_chart(path: &Path, chart: &Chart) -> Result<()> {
    std::fs::write(path, chart.render())?;
    Ok(())
}

/// Thin every series to at most `max_points` by keeping every k-th point
/// (always keeping the last); long training traces stay readable.
pub fn thin(points: Vec<(f64, f64)>, max_points: usize) -> Vec<(f64, f64)> {
    if points.len() <= max_points || max_points < 2 {
        return points;
    }
    let k = points.len().div_ceil(max_points);
    let last = *points.last().unwrap();
    let mut out: Vec<(f64, f64)> = points.into_iter().step_by(k).collect();
    if out.last() != Some(&last) {
        out.push(last);
    }
    out
}
