//! Deterministic SVG 1.1 charts. All coordinates are written with two
//! decimals so output bytes depend only on the input values.

use std::fmt::Write;

use crate::classic::SensitivitySummary;
use crate::error::{Error, Result};
use crate::report::diagnose::{CurveDiagnostics, CurveFlag};
use crate::sensitivity::AlphaCurve;

const PALETTE: [&str; 10] =
    ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"];

fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

pub(crate) fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for ch in text.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Short tick label: integers without decimals, otherwise up to 3 significant digits.
fn tick_label(v: f64) -> String {
    if v == v.round() && v.abs() < 1e6 {
        format!("{v:.0}")
    } else if v.abs() >= 0.01 && v.abs() < 1e4 {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.2e}")
    }
}

/// Rounds `max` up to a 1/2/5 multiple of a power of ten.
fn nice_ceiling(max: f64) -> f64 {
    if !(max > 0.0) || !max.is_finite() {
        return 1.0;
    }
    let mag = 10f64.powf(max.log10().floor());
    for m in [1.0, 2.0, 2.5, 5.0, 10.0] {
        if m * mag >= max {
            return m * mag;
        }
    }
    10.0 * mag
}

struct Frame {
    left: f64,
    top: f64,
    width: f64,
    height: f64,
}

impl Frame {
    fn bottom(&self) -> f64 {
        self.top + self.height
    }
    fn right(&self) -> f64 {
        self.left + self.width
    }
}

fn header(out: &mut String, width: u32, height: u32, title: &str) {
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8" standalone="no"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, "<title>{}</title>", escape(title));
    let _ = writeln!(out, r#"<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>"#);
}

fn axes(out: &mut String, f: &Frame) {
    let _ = writeln!(
        out,
        r#"<path d="M {:.2} {:.2} L {:.2} {:.2} L {:.2} {:.2}" fill="none" stroke="black" stroke-width="1"/>"#,
        f.left,
        f.top,
        f.left,
        f.bottom(),
        f.right(),
        f.bottom()
    );
}

fn y_ticks(out: &mut String, f: &Frame, y_max: f64) {
    for t in 0..=5 {
        let v = y_max * t as f64 / 5.0;
        let y = f.bottom() - f.height * t as f64 / 5.0;
        let _ = writeln!(
            out,
            r##"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd" stroke-width="1"/>"##,
            f.left,
            f.right()
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            f.left - 6.0,
            y + 4.0,
            tick_label(v)
        );
    }
}

fn short_flag(d: &CurveDiagnostics) -> Option<&'static str> {
    if d.has(CurveFlag::Irrelevant) {
        Some("irrelevant")
    } else if d.has(CurveFlag::LinearLike) {
        Some("linear-like")
    } else if d.has(CurveFlag::LocalizedHighSensitivity) {
        Some("localized")
    } else {
        None
    }
}

/// Polyline vertices of each curve in SVG coordinates, in curve order.
pub(crate) fn curve_layout(
    curves: &[AlphaCurve],
    frame_left: f64,
    frame_top: f64,
    w: f64,
    h: f64,
) -> (Vec<Vec<(f64, f64)>>, f64) {
    let lo = curves.iter().flat_map(|c| c.alphas()).fold(f64::INFINITY, f64::min);
    let hi = curves.iter().flat_map(|c| c.alphas()).fold(f64::NEG_INFINITY, f64::max);
    let y_max = nice_ceiling(
        curves
            .iter()
            .flat_map(|c| c.values().chain(std::iter::once(c.asymptote)))
            .filter(|v| v.is_finite())
            .fold(0.0, f64::max),
    );
    let (l0, l1) = (lo.ln(), hi.ln());
    let span = if l1 > l0 { l1 - l0 } else { 1.0 };
    let x = |a: f64| if l1 > l0 { frame_left + w * (a.ln() - l0) / span } else { frame_left + w / 2.0 };
    let y = |v: f64| frame_top + h - h * v / y_max;
    let paths = curves.iter().map(|c| c.points.iter().map(|&(a, v)| (x(a), y(v))).collect()).collect();
    (paths, y_max)
}

/// Parses the `points` attribute of each `<polyline>` in a document
/// written by [`render_alpha_curves`].
pub fn polyline_points(svg: &str) -> Vec<Vec<(f64, f64)>> {
    svg.lines()
        .filter(|l| l.starts_with("<polyline"))
        .filter_map(|l| {
            let start = l.find("points=\"")? + 8;
            let end = start + l[start..].find('"')?;
            Some(
                l[start..end]
                    .split_whitespace()
                    .filter_map(|pair| {
                        let (a, b) = pair.split_once(',')?;
                        Some((a.parse().ok()?, b.parse().ok()?))
                    })
                    .collect(),
            )
        })
        .collect()
}

/// Alpha-curve chart: log-scaled alpha axis, one polyline per variable,
/// a marker column at the right for each `ms^inf` and a legend.
pub fn render_alpha_curves(curves: &[AlphaCurve], diagnostics: &[CurveDiagnostics]) -> Result<String> {
    if curves.is_empty() || curves.iter().any(|c| c.points.is_empty()) {
        return Err(Error::EmptyInput);
    }
    let frame = Frame { left: 70.0, top: 40.0, width: 520.0, height: 360.0 };
    let (paths, y_max) = curve_layout(curves, frame.left, frame.top, frame.width, frame.height);
    let y_of = |v: f64| frame.bottom() - frame.height * v / y_max;
    let mut out = String::new();
    header(&mut out, 820, 460, "alpha-curves");
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="14">alpha-mean sensitivity by variable</text>"#,
        frame.left + frame.width / 2.0
    );
    y_ticks(&mut out, &frame, y_max);

    // alpha ticks on the grid points that are integers (log scale)
    let mut ticks: Vec<(f64, f64)> = Vec::new();
    for (&(a, _), &(x, _)) in curves[0].points.iter().zip(&paths[0]) {
        if a == a.round() && ticks.last().is_none_or(|&(_, px)| x - px > 18.0) {
            ticks.push((a, x));
        }
    }
    for (a, x) in ticks {
        let _ = writeln!(
            out,
            r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black" stroke-width="1"/>"#,
            frame.bottom(),
            frame.bottom() + 5.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            frame.bottom() + 18.0,
            tick_label(a)
        );
    }
    axes(&mut out, &frame);
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">alpha (log scale)</text>"#,
        frame.left + frame.width / 2.0,
        frame.bottom() + 38.0
    );
    let _ = writeln!(
        out,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">ms^alpha</text>"#,
        frame.top + frame.height / 2.0,
        frame.top + frame.height / 2.0
    );

    for (i, (c, pts)) in curves.iter().zip(&paths).enumerate() {
        let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="2"><title>{}</title></polyline>"#,
            coords.join(" "),
            color(i),
            escape(&c.label())
        );
    }

    // detached asymptote markers
    let mx = frame.right() + 30.0;
    let _ = writeln!(
        out,
        r##"<line x1="{mx:.2}" y1="{:.2}" x2="{mx:.2}" y2="{:.2}" stroke="#999999" stroke-dasharray="3,3" stroke-width="1"/>"##,
        frame.top,
        frame.bottom()
    );
    let _ = writeln!(out, r#"<text x="{mx:.2}" y="{:.2}" text-anchor="middle">inf</text>"#, frame.bottom() + 18.0);
    for (i, c) in curves.iter().enumerate() {
        let y = y_of(c.asymptote);
        let _ = writeln!(
            out,
            r#"<path d="M {:.2} {y:.2} L {mx:.2} {:.2} L {:.2} {y:.2} L {mx:.2} {:.2} Z" fill="{}"><title>{} ms^inf = {}</title></path>"#,
            mx - 5.0,
            y - 5.0,
            mx + 5.0,
            y + 5.0,
            color(i),
            escape(&c.label()),
            tick_label(c.asymptote)
        );
    }

    let lx = mx + 30.0;
    for (i, c) in curves.iter().enumerate() {
        let y = frame.top + 10.0 + 20.0 * i as f64;
        let flag = diagnostics.iter().find(|d| d.variable == c.variable).and_then(short_flag);
        let label = match flag {
            Some(f) => format!("{} ({f})", c.label()),
            None => c.label(),
        };
        let _ = writeln!(
            out,
            r#"<line x1="{lx:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{}" stroke-width="2"/>"#,
            lx + 18.0,
            color(i)
        );
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, lx + 24.0, y + 4.0, escape(&label));
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Two panels: `(s_avg, s_sd)` scatter with labels, and an `s_sq` bar chart.
pub fn render_sensitivity_plots(summaries: &[SensitivitySummary]) -> Result<String> {
    if summaries.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut out = String::new();
    header(&mut out, 900, 440, "classic sensitivity summaries");

    // scatter
    let sc = Frame { left: 70.0, top: 40.0, width: 340.0, height: 340.0 };
    let x_lo = summaries.iter().map(|s| s.s_avg).fold(0.0, f64::min);
    let x_hi = summaries.iter().map(|s| s.s_avg).fold(0.0, f64::max);
    let x_lo = if x_lo < 0.0 { -nice_ceiling(-x_lo) } else { 0.0 };
    let x_hi = if x_hi > 0.0 {
        nice_ceiling(x_hi)
    } else if x_lo < 0.0 {
        0.0
    } else {
        1.0
    };
    let y_max = nice_ceiling(summaries.iter().map(|s| s.s_sd).fold(0.0, f64::max));
    let sx = |v: f64| sc.left + sc.width * (v - x_lo) / (x_hi - x_lo);
    let sy = |v: f64| sc.bottom() - sc.height * v / y_max;
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="14">mean vs standard deviation</text>"#,
        sc.left + sc.width / 2.0
    );
    y_ticks(&mut out, &sc, y_max);
    for t in 0..=4 {
        let v = x_lo + (x_hi - x_lo) * t as f64 / 4.0;
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            sx(v),
            sc.bottom() + 18.0,
            tick_label(v)
        );
    }
    axes(&mut out, &sc);
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">S avg</text>"#,
        sc.left + sc.width / 2.0,
        sc.bottom() + 38.0
    );
    let _ = writeln!(
        out,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">S sd</text>"#,
        sc.top + sc.height / 2.0,
        sc.top + sc.height / 2.0
    );
    for (i, s) in summaries.iter().enumerate() {
        let (x, y) = (sx(s.s_avg), sy(s.s_sd));
        let _ = writeln!(
            out,
            r#"<circle cx="{x:.2}" cy="{y:.2}" r="4" fill="{}"><title>{}</title></circle>"#,
            color(i),
            escape(&s.label_name())
        );
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, x + 6.0, y - 6.0, escape(&s.label_name()));
    }

    // bars
    let bf = Frame { left: 530.0, top: 40.0, width: 340.0, height: 340.0 };
    let b_max = nice_ceiling(summaries.iter().map(|s| s.s_sq).fold(0.0, f64::max));
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="14">root mean square</text>"#,
        bf.left + bf.width / 2.0
    );
    y_ticks(&mut out, &bf, b_max);
    let slot = bf.width / summaries.len() as f64;
    for (i, s) in summaries.iter().enumerate() {
        let h = bf.height * s.s_sq / b_max;
        let x = bf.left + slot * i as f64 + slot * 0.15;
        let _ = writeln!(
            out,
            r#"<rect x="{x:.2}" y="{:.2}" width="{:.2}" height="{h:.2}" fill="{}"><title>{} S sq = {}</title></rect>"#,
            bf.bottom() - h,
            slot * 0.7,
            color(i),
            escape(&s.label_name()),
            tick_label(s.s_sq)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            x + slot * 0.35,
            bf.bottom() + 18.0,
            escape(&s.label_name())
        );
    }
    axes(&mut out, &bf);
    out.push_str("</svg>\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(variable: usize, v: f64) -> AlphaCurve {
        AlphaCurve { variable, name: None, output: 0, points: vec![(1.0, v), (2.0, v), (4.0, v)], asymptote: v }
    }

    #[test]
    fn flat_curve_is_horizontal_with_level_marker() {
        let svg = render_alpha_curves(&[flat(0, 2.0)], &[]).unwrap();
        let lines = polyline_points(&svg);
        assert_eq!(lines.len(), 1);
        let ys: Vec<f64> = lines[0].iter().map(|p| p.1).collect();
        assert!(ys.iter().all(|&y| y == ys[0]));
        let marker = format!("{:.2}", ys[0]);
        assert!(svg.lines().any(|l| l.starts_with("<path d=\"M") && l.contains(&format!(" {marker} L"))));
    }

    #[test]
    fn empty_inputs_are_rejected() {
        assert!(matches!(render_alpha_curves(&[], &[]), Err(Error::EmptyInput)));
        assert!(matches!(render_sensitivity_plots(&[]), Err(Error::EmptyInput)));
    }

    #[test]
    fn names_are_escaped() {
        let mut c = flat(0, 1.0);
        c.name = Some("a<b&c".into());
        let svg = render_alpha_curves(&[c], &[]).unwrap();
        assert!(svg.contains("a&lt;b&amp;c"));
        assert!(!svg.contains("a<b"));
    }

    #[test]
    fn tick_labels() {
        assert_eq!(tick_label(2.0), "2");
        assert_eq!(tick_label(1.25), "1.25");
        assert_eq!(tick_label(0.0831), "0.083");
        assert_eq!(nice_ceiling(39.0), 50.0);
        assert_eq!(nice_ceiling(2.0), 2.0);
        assert_eq!(nice_ceiling(0.0), 1.0);
    }
}
