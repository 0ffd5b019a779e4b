//! Static SVG rendering of `e_mean` against `k` on a logarithmic y axis.

use std::fmt::Write;

use crate::error::{CliError, CliResult};
use crate::output::Series;

const WIDTH: f64 = 820.0;
const HEIGHT: f64 = 500.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 200.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
        .replace('\'', "&apos;")
}

struct Frame {
    k_min: f64,
    k_max: f64,
    decade_min: i32,
    decade_max: i32,
}

impl Frame {
    fn x(&self, k: f64) -> f64 {
        LEFT + (k - self.k_min) / (self.k_max - self.k_min) * (WIDTH - LEFT - RIGHT)
    }

    fn y(&self, v: f64) -> f64 {
        let span = (self.decade_max - self.decade_min) as f64;
        TOP + (self.decade_max as f64 - v.log10()) / span * (HEIGHT - TOP - BOTTOM)
    }
}

fn frame(series: &[Series]) -> CliResult<Frame> {
    let mut k_min = f64::INFINITY;
    let mut k_max = f64::NEG_INFINITY;
    let mut v_min = f64::INFINITY;
    let mut v_max = f64::NEG_INFINITY;
    for s in series {
        for (&k, &v) in s.k.iter().zip(&s.e_mean) {
            if !k.is_finite() {
                return Err(CliError::Data(format!("{}: non-finite k", s.label)));
            }
            k_min = k_min.min(k);
            k_max = k_max.max(k);
            if v > 0.0 && v.is_finite() {
                v_min = v_min.min(v);
                v_max = v_max.max(v);
            }
        }
    }
    if !v_min.is_finite() {
        return Err(CliError::Data(
            "no positive e_mean values to plot on a log axis".into(),
        ));
    }
    if k_max <= k_min {
        k_max = k_min + 1.0;
    }
    let decade_min = v_min.log10().floor() as i32;
    let mut decade_max = v_max.log10().ceil() as i32;
    if decade_max <= decade_min {
        decade_max = decade_min + 1;
    }
    Ok(Frame {
        k_min,
        k_max,
        decade_min,
        decade_max,
    })
}

/// One polyline per series; non-positive values are left out.
pub fn render_svg(series: &[Series]) -> CliResult<String> {
    if series.is_empty() {
        return Err(CliError::Data("nothing to plot".into()));
    }
    let f = frame(series)?;
    let mut s = String::new();
    let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM);
    writeln!(
        s,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">
<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>
<text x="{:.1}" y="22" text-anchor="middle" font-size="15">mean tracking error</text>"#,
        (x0 + x1) / 2.0
    )
    .unwrap();

    writeln!(s, r##"<g stroke="#dddddd" stroke-width="1">"##).unwrap();
    for p in f.decade_min..=f.decade_max {
        let y = f.y(10f64.powi(p));
        writeln!(
            s,
            r#"<line x1="{x0:.1}" y1="{y:.2}" x2="{x1:.1}" y2="{y:.2}"/>"#
        )
        .unwrap();
    }
    writeln!(s, "</g>").unwrap();
    writeln!(
        s,
        r#"<path d="M{x0:.1},{y0:.1} L{x0:.1},{y1:.1} L{x1:.1},{y1:.1}" fill="none" stroke="black"/>"#
    )
    .unwrap();
    for p in f.decade_min..=f.decade_max {
        let y = f.y(10f64.powi(p));
        writeln!(
            s,
            r#"<text x="{:.1}" y="{:.2}" text-anchor="end">1e{p}</text>"#,
            x0 - 6.0,
            y + 4.0
        )
        .unwrap();
    }
    for i in 0..=5 {
        let k = f.k_min + (f.k_max - f.k_min) * i as f64 / 5.0;
        let x = f.x(k);
        writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{y1:.1}" x2="{x:.2}" y2="{:.1}" stroke="black"/><text x="{x:.2}" y="{:.1}" text-anchor="middle">{}</text>"#,
            y1 + 5.0,
            y1 + 20.0,
            k.round()
        )
        .unwrap();
    }
    writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">k</text>
<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">e_mean (log scale)</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 15.0,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    )
    .unwrap();

    for (i, series) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let points: Vec<String> = series
            .k
            .iter()
            .zip(&series.e_mean)
            .filter(|(_, v)| **v > 0.0 && v.is_finite())
            .map(|(&k, &v)| format!("{:.2},{:.2}", f.x(k), f.y(v)))
            .collect();
        let label = escape(&series.label);
        writeln!(
            s,
            r#"<polyline class="series" data-label="{label}" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            points.join(" ")
        )
        .unwrap();
        let ly = y0 + 10.0 + 20.0 * i as f64;
        writeln!(
            s,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{label}</text>"#,
            x1 + 15.0,
            x1 + 40.0,
            x1 + 46.0,
            ly + 4.0
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    Ok(s)
}
