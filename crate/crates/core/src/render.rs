//! Deterministic SVG output for scenes, roadmaps, paths and histograms.

use std::fmt::Write as _;

use crate::roadmap::Roadmap;
use crate::scalar::Real;
use crate::types::{ImageSize, ImageState, PlannedPath, Scene};

pub const EDGE_COLOR: &str = "#b8b8b8";
pub const PATH_COLOR: &str = "#2ca02c";
pub const OBSTACLE_FILL: &str = "#f2d024";
pub const MARGIN_COLOR: &str = "#7b3fa0";
pub const TRAJECTORY_COLOR: &str = "#1f77b4";

/// Everything that can appear in one picture.
#[derive(Debug, Clone, Copy)]
pub struct Layers<'a, T> {
    pub image_size: ImageSize,
    pub scene: Option<&'a Scene<T>>,
    pub roadmap: Option<&'a Roadmap<T>>,
    pub path: Option<&'a PlannedPath<T>>,
    pub trajectory: Option<&'a [ImageState<T>]>,
}

impl<'a, T> Layers<'a, T> {
    pub fn new(image_size: ImageSize) -> Self {
        Self {
            image_size,
            scene: None,
            roadmap: None,
            path: None,
            trajectory: None,
        }
    }
}

fn f<T: Real>(x: T) -> String {
    fmt_num(x.to_f64_lossy())
}

fn fmt_num(x: f64) -> String {
    let s = format!("{x:.2}");
    if s == "-0.00" {
        "0.00".to_string()
    } else {
        s
    }
}

/// Interpolates from blue at `t = 0` to red at `t = 1`.
fn state_color(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let r = (40.0 + 200.0 * t).round() as u8;
    let b = (220.0 - 180.0 * t).round() as u8;
    format!("#{r:02x}50{b:02x}")
}

fn polyline_points<T: Real>(s: &ImageState<T>) -> String {
    s.keypoints
        .iter()
        .map(|k| format!("{},{}", f(k.u), f(k.v)))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn render_svg<T: Real>(layers: &Layers<'_, T>) -> String {
    let (w, h) = (layers.image_size.width, layers.image_size.height);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(
        out,
        r##"<rect class="frame" x="0" y="0" width="{w}" height="{h}" fill="#ffffff" stroke="#000000"/>"##
    );
    if let Some(scene) = layers.scene {
        let margin = scene.safety_margin.to_f64_lossy();
        for poly in &scene.obstacles {
            let pts = poly
                .vertices
                .iter()
                .map(|k| format!("{},{}", f(k.u), f(k.v)))
                .collect::<Vec<_>>()
                .join(" ");
            if margin > 0.0 {
                let _ = writeln!(
                    out,
                    r#"<polygon class="margin" points="{pts}" fill="none" stroke="{MARGIN_COLOR}" stroke-width="{}" stroke-linejoin="round" stroke-opacity="0.6"/>"#,
                    fmt_num(2.0 * margin)
                );
            }
            let _ = writeln!(
                out,
                r#"<polygon class="obstacle" points="{pts}" fill="{OBSTACLE_FILL}" stroke="none"/>"#
            );
        }
    }
    if let Some(rm) = layers.roadmap {
        let _ = writeln!(out, r#"<g class="roadmap" stroke="{EDGE_COLOR}" stroke-width="0.5">"#);
        for e in &rm.edges {
            let (Some(a), Some(b)) = (rm.nodes[e.a].end_effector(), rm.nodes[e.b].end_effector()) else {
                continue;
            };
            let dash = if e.checked && !e.valid { r#" stroke-dasharray="2,2""# } else { "" };
            let _ = writeln!(
                out,
                r#"<line x1="{}" y1="{}" x2="{}" y2="{}"{dash}/>"#,
                f(a.u),
                f(a.v),
                f(b.u),
                f(b.v)
            );
        }
        let _ = writeln!(out, "</g>");
    }
    if let Some(path) = layers.path {
        let n = path.states.len();
        for (i, s) in path.states.iter().enumerate() {
            let t = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
            let _ = writeln!(
                out,
                r#"<polyline class="chain" points="{}" fill="none" stroke="{}" stroke-width="2"/>"#,
                polyline_points(s),
                state_color(t)
            );
        }
        let ee = path
            .states
            .iter()
            .filter_map(|s| s.end_effector())
            .map(|k| format!("{},{}", f(k.u), f(k.v)))
            .collect::<Vec<_>>()
            .join(" ");
        let _ = writeln!(
            out,
            r#"<polyline class="path" points="{ee}" fill="none" stroke="{PATH_COLOR}" stroke-width="3"/>"#
        );
    }
    if let Some(traj) = layers.trajectory {
        let ee = traj
            .iter()
            .filter_map(|s| s.end_effector())
            .map(|k| format!("{},{}", f(k.u), f(k.v)))
            .collect::<Vec<_>>()
            .join(" ");
        let _ = writeln!(
            out,
            r#"<polyline class="trajectory" points="{ee}" fill="none" stroke="{TRAJECTORY_COLOR}" stroke-width="1.5"/>"#
        );
    }
    legend(&mut out, layers);
    out.push_str("</svg>\n");
    out
}

fn legend<T: Real>(out: &mut String, layers: &Layers<'_, T>) {
    let mut items: Vec<(&str, &str)> = Vec::new();
    if layers.scene.is_some_and(|s| !s.obstacles.is_empty()) {
        items.push((OBSTACLE_FILL, "obstacle"));
        items.push((MARGIN_COLOR, "safety margin"));
    }
    if layers.roadmap.is_some() {
        items.push((EDGE_COLOR, "roadmap edge"));
    }
    if layers.path.is_some() {
        items.push((PATH_COLOR, "planned path"));
    }
    if layers.trajectory.is_some() {
        items.push((TRAJECTORY_COLOR, "executed"));
    }
    if items.is_empty() {
        return;
    }
    let _ = writeln!(out, r#"<g class="legend" font-family="sans-serif" font-size="11">"#);
    for (i, (color, label)) in items.iter().enumerate() {
        let y = 14 + 16 * i;
        let _ = writeln!(
            out,
            r#"<rect x="8" y="{}" width="10" height="10" fill="{color}"/><text x="22" y="{}">{label}</text>"#,
            y - 9,
            y
        );
    }
    let _ = writeln!(out, "</g>");
}

/// One histogram series: label, colour and sample values.
pub struct Series<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub values: &'a [f64],
}

/// Bin edges shared by all series, `bins` equal-width bins over the pooled range.
pub fn histogram_edges(series: &[Series<'_>], bins: usize) -> Vec<f64> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for s in series {
        for &v in s.values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if !lo.is_finite() {
        return vec![0.0, 1.0];
    }
    if hi <= lo {
        hi = lo + 1.0;
    }
    let bins = bins.max(1);
    (0..=bins).map(|i| lo + (hi - lo) * i as f64 / bins as f64).collect()
}

/// Normalized counts (fractions summing to one) of `values` over `edges`.
pub fn histogram_counts(values: &[f64], edges: &[f64]) -> Vec<f64> {
    let bins = edges.len() - 1;
    let mut counts = vec![0.0; bins];
    let (lo, hi) = (edges[0], edges[bins]);
    for &v in values {
        let i = (((v - lo) / (hi - lo)) * bins as f64).floor();
        let i = (i.max(0.0) as usize).min(bins - 1);
        counts[i] += 1.0;
    }
    let total = values.len().max(1) as f64;
    counts.iter().map(|c| c / total).collect()
}

/// Overlaid step histograms.
pub fn render_histogram_svg(title: &str, x_label: &str, series: &[Series<'_>], bins: usize) -> String {
    let (w, h) = (640.0, 400.0);
    let (left, right, top, bottom) = (60.0, 20.0, 40.0, 50.0);
    let edges = histogram_edges(series, bins);
    let counts: Vec<Vec<f64>> = series.iter().map(|s| histogram_counts(s.values, &edges)).collect();
    let ymax = counts.iter().flatten().cloned().fold(0.0f64, f64::max).max(1e-12);
    let (x0, x1) = (edges[0], edges[edges.len() - 1]);
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * (w - left - right);
    let sy = |y: f64| h - bottom - y / ymax * (h - top - bottom);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(out, r##"<rect x="0" y="0" width="{w}" height="{h}" fill="#ffffff"/>"##);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="22" font-family="sans-serif" font-size="14" text-anchor="middle">{title}</text>"#,
        fmt_num(w / 2.0)
    );
    let _ = writeln!(
        out,
        r##"<line x1="{left}" y1="{}" x2="{}" y2="{}" stroke="#000000"/>"##,
        fmt_num(h - bottom),
        fmt_num(w - right),
        fmt_num(h - bottom)
    );
    let _ = writeln!(
        out,
        r##"<line x1="{left}" y1="{top}" x2="{left}" y2="{}" stroke="#000000"/>"##,
        fmt_num(h - bottom)
    );
    for i in 0..=4 {
        let x = x0 + (x1 - x0) * i as f64 / 4.0;
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="10" text-anchor="middle">{}</text>"#,
            fmt_num(sx(x)),
            fmt_num(h - bottom + 14.0),
            fmt_num(x)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">{x_label}</text>"#,
        fmt_num(w / 2.0),
        fmt_num(h - 12.0)
    );
    for (s, c) in series.iter().zip(&counts) {
        let mut pts = vec![format!("{},{}", fmt_num(sx(x0)), fmt_num(sy(0.0)))];
        for (i, &v) in c.iter().enumerate() {
            pts.push(format!("{},{}", fmt_num(sx(edges[i])), fmt_num(sy(v))));
            pts.push(format!("{},{}", fmt_num(sx(edges[i + 1])), fmt_num(sy(v))));
        }
        pts.push(format!("{},{}", fmt_num(sx(x1)), fmt_num(sy(0.0))));
        let _ = writeln!(
            out,
            r#"<polyline class="series" points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
            pts.join(" "),
            s.color
        );
    }
    for (i, s) in series.iter().enumerate() {
        let y = top + 12.0 + 16.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<rect x="{}" y="{}" width="10" height="10" fill="{}"/><text x="{}" y="{}" font-family="sans-serif" font-size="11">{}</text>"#,
            fmt_num(w - right - 130.0),
            fmt_num(y - 9.0),
            s.color,
            fmt_num(w - right - 116.0),
            fmt_num(y),
            s.label
        );
    }
    out.push_str("</svg>\n");
    out
}
