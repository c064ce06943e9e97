//! Minimal SVG line charts: series, shaded bands, dashed markers.

use std::fmt::Write as _;

pub struct Series {
    pub label: String,
    pub color: &'static str,
    pub points: Vec<(f64, f64)>,
    /// Optional `(x, lo, hi)` band drawn under the line.
    pub band: Vec<(f64, f64, f64)>,
}

pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Vertical dashed lines at these x values.
    pub markers: Vec<f64>,
    /// Horizontal dashed lines at these y values.
    pub levels: Vec<f64>,
}

const W: f64 = 800.0;
const H: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;

pub const BLUE: &str = "#1f5fa8";
pub const ORANGE: &str = "#d9661f";
pub const GREY: &str = "#555555";

fn bounds(chart: &Chart) -> (f64, f64, f64, f64) {
    let mut xs = vec![];
    let mut ys = vec![];
    for s in &chart.series {
        xs.extend(s.points.iter().map(|p| p.0));
        ys.extend(s.points.iter().map(|p| p.1));
        ys.extend(s.band.iter().flat_map(|b| [b.1, b.2]));
    }
    xs.extend(&chart.markers);
    ys.extend(&chart.levels);
    let fin = |v: &Vec<f64>| v.iter().copied().filter(|x| x.is_finite()).collect::<Vec<_>>();
    let (xs, ys) = (fin(&xs), fin(&ys));
    let lo = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (mut x0, mut x1, mut y0, mut y1) = (lo(&xs), hi(&xs), lo(&ys), hi(&ys));
    if !x0.is_finite() {
        (x0, x1) = (0.0, 1.0);
    }
    if !y0.is_finite() {
        (y0, y1) = (0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let pad = 0.05 * (y1 - y0);
    (x0, x1, y0 - pad, y1 + pad)
}

fn ticks(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let raw = (hi - lo) / n as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = vec![];
    while t <= hi + 1e-9 * step {
        out.push(t);
        t += step;
    }
    out
}

fn fmt_tick(v: f64) -> String {
    if v.abs() >= 1000.0 || v == v.trunc() {
        format!("{v:.0}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Chart {
    pub fn render(&self) -> String {
        let (x0, x1, y0, y1) = bounds(self);
        let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * (W - LEFT - RIGHT);
        let py = |y: f64| H - BOTTOM - (y - y0) / (y1 - y0) * (H - TOP - BOTTOM);
        let mut s = String::new();
        let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#);
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, W / 2.0, escape(&self.title));
        let (bx0, by0, bx1, by1) = (LEFT, TOP, W - RIGHT, H - BOTTOM);
        let _ = writeln!(s, r#"<rect x="{bx0}" y="{by0}" width="{}" height="{}" fill="none" stroke="black"/>"#, bx1 - bx0, by1 - by0);
        for t in ticks(x0, x1, 8) {
            let _ = writeln!(s, r#"<line x1="{0:.2}" y1="{by1}" x2="{0:.2}" y2="{1}" stroke="black"/><text x="{0:.2}" y="{2}" text-anchor="middle">{3}</text>"#, px(t), by1 + 5.0, by1 + 18.0, fmt_tick(t));
        }
        for t in ticks(y0, y1, 6) {
            let _ = writeln!(s, r#"<line x1="{0}" y1="{1:.2}" x2="{bx0}" y2="{1:.2}" stroke="black"/><text x="{2}" y="{3:.2}" text-anchor="end">{4}</text>"#, bx0 - 5.0, py(t), bx0 - 8.0, py(t) + 4.0, fmt_tick(t));
        }
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (bx0 + bx1) / 2.0, H - 15.0, escape(&self.x_label));
        let _ = writeln!(s, r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">{1}</text>"#, (by0 + by1) / 2.0, escape(&self.y_label));

        for series in &self.series {
            if series.band.len() > 1 {
                let mut d = String::new();
                for (i, b) in series.band.iter().enumerate() {
                    let _ = write!(d, "{}{:.2},{:.2} ", if i == 0 { "M" } else { "L" }, px(b.0), py(b.2));
                }
                for b in series.band.iter().rev() {
                    let _ = write!(d, "L{:.2},{:.2} ", px(b.0), py(b.1));
                }
                let _ = writeln!(s, r#"<path d="{}Z" fill="{}" fill-opacity="0.2" stroke="none"/>"#, d, series.color);
            }
        }
        for (k, series) in self.series.iter().enumerate() {
            let pts: Vec<String> = series.points.iter().filter(|p| p.1.is_finite()).map(|p| format!("{:.2},{:.2}", px(p.0), py(p.1))).collect();
            let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#, pts.join(" "), series.color);
            if series.points.len() <= 20 {
                for p in series.points.iter().filter(|p| p.1.is_finite()) {
                    let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{}"/>"#, px(p.0), py(p.1), series.color);
                }
            }
            let ly = TOP + 16.0 + 18.0 * k as f64;
            let _ = writeln!(s, r#"<line x1="{0}" y1="{ly}" x2="{1}" y2="{ly}" stroke="{2}" stroke-width="3"/><text x="{3}" y="{4}">{5}</text>"#, bx1 - 150.0, bx1 - 125.0, series.color, bx1 - 120.0, ly + 4.0, escape(&series.label));
        }
        for &m in &self.markers {
            let _ = writeln!(s, r#"<line x1="{0:.2}" y1="{by0}" x2="{0:.2}" y2="{by1}" stroke="{GREY}" stroke-dasharray="6,4"/>"#, px(m));
        }
        for &l in &self.levels {
            let _ = writeln!(s, r#"<line x1="{bx0}" y1="{0:.2}" x2="{bx1}" y2="{0:.2}" stroke="{GREY}" stroke-dasharray="2,3"/>"#, py(l));
        }
        s.push_str("</svg>\n");
        s
    }
}
