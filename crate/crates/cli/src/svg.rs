//! Minimal SVG line plots and heat-tile images.

use std::fmt::Write;

use hdl_core::Heatmap;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 440.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 150.0;
const MARGIN_T: f64 = 36.0;
const MARGIN_B: f64 = 52.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

pub struct Plot<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    /// Flip the y axis so larger values are drawn lower (image convention).
    pub invert_y: bool,
    pub x_range: Option<(f64, f64)>,
    pub y_range: Option<(f64, f64)>,
}

fn extent(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
        return (lo - pad, hi + pad);
    }
    (lo, hi)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Plot<'_> {
    pub fn render(&self, series: &[Series]) -> String {
        let all = || series.iter().flat_map(|s| s.points.iter());
        let (x0, x1) = self.x_range.unwrap_or_else(|| extent(all().map(|p| p.0)));
        let (y0, y1) = self.y_range.unwrap_or_else(|| extent(all().map(|p| p.1)));
        let pw = WIDTH - MARGIN_L - MARGIN_R;
        let ph = HEIGHT - MARGIN_T - MARGIN_B;
        let sx = |x: f64| MARGIN_L + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| {
            let t = (y - y0) / (y1 - y0);
            if self.invert_y {
                MARGIN_T + t * ph
            } else {
                MARGIN_T + (1.0 - t) * ph
            }
        };

        let mut s = String::new();
        writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
        )
        .unwrap();
        writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
        writeln!(
            s,
            r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
            MARGIN_L + pw / 2.0,
            escape(self.title)
        )
        .unwrap();
        writeln!(
            s,
            r#"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw:.1}" height="{ph:.1}" fill="none" stroke="black"/>"#
        )
        .unwrap();

        for k in 0..=4 {
            let t = k as f64 / 4.0;
            let xv = x0 + t * (x1 - x0);
            let yv = y0 + t * (y1 - y0);
            let (px, py) = (sx(xv), sy(yv));
            writeln!(
                s,
                r##"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="#888"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
                MARGIN_T + ph,
                MARGIN_T + ph + 5.0,
                MARGIN_T + ph + 18.0,
                tick(xv)
            )
            .unwrap();
            writeln!(
                s,
                r##"<line x1="{:.2}" y1="{py:.2}" x2="{MARGIN_L}" y2="{py:.2}" stroke="#888"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
                MARGIN_L - 5.0,
                MARGIN_L - 8.0,
                py + 4.0,
                tick(yv)
            )
            .unwrap();
        }
        writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            MARGIN_L + pw / 2.0,
            HEIGHT - 12.0,
            escape(self.x_label)
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
            MARGIN_T + ph / 2.0,
            MARGIN_T + ph / 2.0,
            escape(self.y_label)
        )
        .unwrap();

        for (k, ser) in series.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            let pts: Vec<String> = ser
                .points
                .iter()
                .filter(|p| p.0.is_finite() && p.1.is_finite())
                .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                .collect();
            writeln!(
                s,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                pts.join(" ")
            )
            .unwrap();
            let ly = MARGIN_T + 14.0 * k as f64 + 8.0;
            let lx = WIDTH - MARGIN_R + 10.0;
            writeln!(
                s,
                r#"<line x1="{lx}" y1="{ly}" x2="{:.1}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"#,
                lx + 18.0,
                lx + 22.0,
                ly + 4.0,
                escape(&ser.name)
            )
            .unwrap();
        }
        s.push_str("</svg>\n");
        s
    }
}

fn tick(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e5).contains(&a) {
        format!("{v:.1e}")
    } else {
        let t = format!("{v:.3}");
        let t = t.trim_end_matches('0').trim_end_matches('.');
        if t == "-0" { "0".into() } else { t.to_string() }
    }
}

/// One grayscale tile per pixel, black at the maximum.
pub fn heat_tiles(h: &Heatmap, title: &str, tile: f64) -> String {
    let (lo, hi) = (h.min_value(), h.max_value());
    let span = if hi > lo { hi - lo } else { 1.0 };
    let w = h.cols() as f64 * tile;
    let ht = h.rows() as f64 * tile + 24.0;
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{ht}" font-family="sans-serif" font-size="11">"#
    )
    .unwrap();
    writeln!(s, r#"<text x="2" y="14">{}</text>"#, escape(title)).unwrap();
    for i in 0..h.rows() {
        for j in 0..h.cols() {
            let level = 255 - ((h.get(i, j) - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8;
            writeln!(
                s,
                r#"<rect x="{}" y="{}" width="{tile}" height="{tile}" fill="rgb({level},{level},{level})"/>"#,
                j as f64 * tile,
                24.0 + i as f64 * tile
            )
            .unwrap();
        }
    }
    s.push_str("</svg>\n");
    s
}
