//! Minimal static SVG charts: box plots and line plots. Output is a pure
//! function of the input, so regenerated files are byte-identical.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

pub fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Five-number summary with 1.5 IQR whiskers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxStats {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub low: f64,
    pub high: f64,
}

/// Linear-interpolation quantile of sorted data (type 7).
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl BoxStats {
    pub fn from_samples(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let (q1, median, q3) = (quantile(&v, 0.25), quantile(&v, 0.5), quantile(&v, 0.75));
        let iqr = q3 - q1;
        let low = v.iter().copied().find(|&x| x >= q1 - 1.5 * iqr).unwrap_or(v[0]);
        let high = v.iter().rev().copied().find(|&x| x <= q3 + 1.5 * iqr).unwrap_or(v[v.len() - 1]);
        Some(BoxStats { q1, median, q3, low, high })
    }

    /// Summary of integer values given as `counts[k]` occurrences of `k`.
    pub fn from_histogram(counts: &[usize]) -> Option<Self> {
        let v: Vec<f64> = counts.iter().enumerate().flat_map(|(k, &c)| std::iter::repeat_n(k as f64, c)).collect();
        Self::from_samples(&v)
    }
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - TOP - BOTTOM)
    }
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title));
}

fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(1e-12);
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0].iter().map(|m| m * mag).find(|s| span / s <= 6.0).unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * span {
        out.push(if t.abs() < 1e-12 * span { 0.0 } else { t });
        t += step;
    }
    out
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.to_string() }
}

fn axes(out: &mut String, f: &Frame, xlabel: &str, ylabel: &str, xticks: bool) {
    let (l, r, t, b) = (LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM);
    let _ = writeln!(out, r#"<rect x="{l}" y="{t}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#, r - l, b - t);
    for v in nice_ticks(f.y0, f.y1) {
        let y = f.py(v);
        let _ = writeln!(out, r##"<line x1="{:.1}" y1="{y:.1}" x2="{l}" y2="{y:.1}" stroke="black"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##, l - 4.0, l - 6.0, y + 4.0, fmt_tick(v));
    }
    if xticks {
        for v in nice_ticks(f.x0, f.x1) {
            let x = f.px(v);
            let _ = writeln!(out, r##"<line x1="{x:.1}" y1="{b}" x2="{x:.1}" y2="{:.1}" stroke="black"/><text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"##, b + 4.0, b + 18.0, fmt_tick(v));
        }
    }
    let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, (l + r) / 2.0, HEIGHT - 12.0, escape(xlabel));
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        (t + b) / 2.0,
        (t + b) / 2.0,
        escape(ylabel)
    );
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if hi - lo < 1e-12 {
        (lo - 1.0, hi + 1.0)
    } else {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

/// One box per labelled category.
pub fn boxplot_svg(title: &str, ylabel: &str, boxes: &[(String, BoxStats)], reference: Option<f64>) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let lo = boxes.iter().map(|(_, b)| b.low).chain(reference).fold(f64::INFINITY, f64::min);
    let hi = boxes.iter().map(|(_, b)| b.high).chain(reference).fold(f64::NEG_INFINITY, f64::max);
    let (y0, y1) = if lo.is_finite() { padded(lo, hi) } else { (0.0, 1.0) };
    let f = Frame { x0: 0.0, x1: boxes.len().max(1) as f64, y0, y1 };
    axes(&mut out, &f, "", ylabel, false);
    if let Some(r) = reference {
        let y = f.py(r);
        let _ = writeln!(out, r#"<line x1="{LEFT}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="gray" stroke-dasharray="4 3"/>"#, WIDTH - RIGHT);
    }
    for (i, (label, b)) in boxes.iter().enumerate() {
        let c = f.px(i as f64 + 0.5);
        let w = 0.3 * (f.px(1.0) - f.px(0.0));
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            out,
            r#"<line x1="{c:.1}" y1="{:.1}" x2="{c:.1}" y2="{:.1}" stroke="black"/><line x1="{c:.1}" y1="{:.1}" x2="{c:.1}" y2="{:.1}" stroke="black"/>"#,
            f.py(b.high),
            f.py(b.q3),
            f.py(b.q1),
            f.py(b.low)
        );
        let _ = writeln!(
            out,
            r#"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="{color}" fill-opacity="0.35" stroke="{color}"/>"#,
            c - w,
            f.py(b.q3),
            2.0 * w,
            (f.py(b.q1) - f.py(b.q3)).max(0.5)
        );
        let _ = writeln!(out, r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="black" stroke-width="2"/>"#, c - w, f.py(b.median), c + w, f.py(b.median));
        let _ = writeln!(out, r#"<text x="{c:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, HEIGHT - BOTTOM + 18.0, escape(label));
    }
    out.push_str("</svg>\n");
    out
}

pub struct Series {
    pub name: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// Polylines sharing one pair of axes; `limits` fixes (x0, x1, y0, y1).
pub fn line_svg(title: &str, xlabel: &str, ylabel: &str, series: &[Series], limits: Option<(f64, f64, f64, f64)>, diagonal: bool) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let (x0, x1, y0, y1) = limits.unwrap_or_else(|| {
        let xs = series.iter().flat_map(|s| s.x.iter().copied());
        let ys = series.iter().flat_map(|s| s.y.iter().copied());
        let (xl, xh) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        let (yl, yh) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        let (xl, xh) = if xl.is_finite() { (xl, xh.max(xl + 1e-12)) } else { (0.0, 1.0) };
        let (yl, yh) = if yl.is_finite() { padded(yl, yh) } else { (0.0, 1.0) };
        (xl, xh, yl, yh)
    });
    let f = Frame { x0, x1, y0, y1 };
    axes(&mut out, &f, xlabel, ylabel, true);
    if diagonal {
        let _ = writeln!(
            out,
            r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="gray" stroke-dasharray="4 3"/>"#,
            f.px(x0.max(y0)),
            f.py(x0.max(y0)),
            f.px(x1.min(y1)),
            f.py(x1.min(y1))
        );
    }
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut pts = String::new();
        for (x, y) in s.x.iter().zip(&s.y) {
            let _ = write!(pts, "{:.1},{:.1} ", f.px(*x), f.py(*y));
        }
        let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, pts.trim_end());
        let ly = TOP + 14.0 + 18.0 * i as f64;
        let lx = WIDTH - RIGHT + 10.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            lx + 18.0,
            lx + 22.0,
            ly + 4.0,
            escape(&s.name)
        );
    }
    out.push_str("</svg>\n");
    out
}
