//! Static SVG line and scatter plots.

use std::fmt::Write;

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    /// Draw markers instead of a polyline.
    pub markers: bool,
}

impl Series {
    pub fn line(name: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Series { name: name.into(), points, markers: false }
    }

    pub fn scatter(name: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Series { name: name.into(), points, markers: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plot {
    /// File stem under `plots/`.
    pub name: String,
    pub title: String,
    pub xlabel: String,
    pub ylabel: String,
    pub logx: bool,
    pub logy: bool,
    pub series: Vec<Series>,
}

impl Plot {
    pub fn new(name: impl Into<String>, title: impl Into<String>, xlabel: &str, ylabel: &str) -> Self {
        Plot {
            name: name.into(),
            title: title.into(),
            xlabel: xlabel.into(),
            ylabel: ylabel.into(),
            logx: false,
            logy: false,
            series: Vec::new(),
        }
    }

    pub fn loglog(mut self) -> Self {
        self.logx = true;
        self.logy = true;
        self
    }

    pub fn with(mut self, s: Series) -> Self {
        self.series.push(s);
        self
    }
}

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn ticks(lo: f64, hi: f64, log: bool) -> Vec<(f64, String)> {
    if log {
        let (a, b) = (lo.floor() as i64, hi.ceil() as i64);
        return (a..=b)
            .map(|k| k as f64)
            .filter(|&k| k >= lo - 1e-9 && k <= hi + 1e-9)
            .map(|k| (k, format!("1e{k}")))
            .collect();
    }
    let span = hi - lo;
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|&s| s >= raw).unwrap_or(10.0 * mag);
    let digits = (-step.log10().floor()).max(0.0) as usize;
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last)
        .map(|k| {
            let x = k as f64 * step;
            (x, format!("{x:.digits$}"))
        })
        .collect()
}

fn range(vals: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return None;
    }
    if hi - lo < 1e-12 * lo.abs().max(1.0) {
        let pad = 0.5 * lo.abs().max(1.0);
        return Some((lo - pad, hi + pad));
    }
    let pad = 0.04 * (hi - lo);
    Some((lo - pad, hi + pad))
}

/// Renders the plot as a standalone SVG document. Points that are not
/// finite, or not positive on a log axis, are skipped.
pub fn render(p: &Plot) -> String {
    let tx = |x: f64| if p.logx { x.log10() } else { x };
    let ty = |y: f64| if p.logy { y.log10() } else { y };
    let ok = |&(x, y): &(f64, f64)| x.is_finite() && y.is_finite() && (!p.logx || x > 0.0) && (!p.logy || y > 0.0);
    let pts: Vec<Vec<(f64, f64)>> = p
        .series
        .iter()
        .map(|s| s.points.iter().filter(|q| ok(q)).map(|&(x, y)| (tx(x), ty(y))).collect())
        .collect();
    let (x0, x1) = range(pts.iter().flatten().map(|q| q.0)).unwrap_or((0.0, 1.0));
    let (y0, y1) = range(pts.iter().flatten().map(|q| q.1)).unwrap_or((0.0, 1.0));
    let (pw, ph) = (W - LEFT - RIGHT, H - TOP - BOTTOM);
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, LEFT + pw / 2.0, esc(&p.title));
    let _ = writeln!(s, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    for (v, label) in ticks(x0, x1, p.logx) {
        let x = sx(v);
        let _ = writeln!(s, r##"<line x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{}" stroke="#ddd"/>"##, TOP + ph);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{}" text-anchor="middle">{label}</text>"#, TOP + ph + 16.0);
    }
    for (v, label) in ticks(y0, y1, p.logy) {
        let y = sy(v);
        let _ = writeln!(s, r##"<line x1="{LEFT}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#ddd"/>"##, LEFT + pw);
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{label}</text>"#, LEFT - 6.0, y + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, H - 12.0, esc(&p.xlabel));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#,
        TOP + ph / 2.0,
        esc(&p.ylabel)
    );
    for (i, (series, q)) in p.series.iter().zip(&pts).enumerate() {
        let c = COLORS[i % COLORS.len()];
        if series.markers {
            for &(x, y) in q {
                let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{c}"/>"#, sx(x), sy(y));
            }
        } else if !q.is_empty() {
            let path: Vec<String> = q.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
            let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{c}" stroke-width="1.5"/>"#, path.join(" "));
        }
        let ly = TOP + 14.0 + 18.0 * i as f64;
        let lx = LEFT + pw + 12.0;
        let _ = writeln!(s, r#"<rect x="{lx}" y="{}" width="12" height="4" fill="{c}"/>"#, ly - 6.0);
        let _ = writeln!(s, r#"<text x="{}" y="{ly}">{}</text>"#, lx + 18.0, esc(&series.name));
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_series_and_skips_bad_points() {
        let p = Plot::new("t", "a < b", "x", "y")
            .loglog()
            .with(Series::line("one", vec![(1.0, 1.0), (10.0, 100.0), (-1.0, 5.0)]))
            .with(Series::scatter("two", vec![(2.0, 3.0), (f64::NAN, 1.0)]));
        let s = render(&p);
        assert!(s.starts_with("<svg") && s.ends_with("</svg>\n"));
        assert!(s.contains("a &lt; b"));
        assert_eq!(s.matches("<polyline").count(), 1);
        assert_eq!(s.matches("<circle").count(), 1);
        assert!(s.contains(">1e1<"));
    }

    #[test]
    fn degenerate_ranges() {
        let s = render(&Plot::new("t", "flat", "x", "y").with(Series::line("c", vec![(0.0, 2.0), (1.0, 2.0)])));
        assert!(!s.contains("NaN"));
        let s = render(&Plot::new("t", "empty", "x", "y"));
        assert!(s.contains("</svg>"));
    }
}
