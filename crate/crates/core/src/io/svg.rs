//! Minimal SVG 1.1 emission for heatmaps and curve plots.
//!
//! Heatmap color scale: values are normalized to `[0, 1]` over the field's
//! range (a constant field maps to 0.5) and sent through a fixed
//! viridis-like ramp interpolated linearly between five control points:
//!
//! | t    | rgb             |
//! |------|-----------------|
//! | 0.00 | ( 68,   1,  84) |
//! | 0.25 | ( 59,  82, 139) |
//! | 0.50 | ( 33, 145, 140) |
//! | 0.75 | ( 94, 201,  98) |
//! | 1.00 | (253, 231,  37) |
//!
//! Heatmap rows render bottom-up: row 0 of the field is the lowest row of
//! pixels, matching grid conventions elsewhere in the crate.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const RAMP: [(f64, [f64; 3]); 5] = [
    (0.00, [68.0, 1.0, 84.0]),
    (0.25, [59.0, 82.0, 139.0]),
    (0.50, [33.0, 145.0, 140.0]),
    (0.75, [94.0, 201.0, 98.0]),
    (1.00, [253.0, 231.0, 37.0]),
];

fn ramp_color(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let mut rgb = RAMP[0].1;
    for pair in RAMP.windows(2) {
        let (t0, c0) = pair[0];
        let (t1, c1) = pair[1];
        if t >= t0 && t <= t1 {
            let f = if t1 == t0 { 0.0 } else { (t - t0) / (t1 - t0) };
            rgb = [
                c0[0] + f * (c1[0] - c0[0]),
                c0[1] + f * (c1[1] - c0[1]),
                c0[2] + f * (c1[2] - c0[2]),
            ];
        }
    }
    format!("#{:02x}{:02x}{:02x}", rgb[0].round() as u8, rgb[1].round() as u8, rgb[2].round() as u8)
}

/// One plotted series.
#[derive(Debug, Clone)]
pub struct CurveSeries {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Renders a `[ny, nx]` field as a colored-cell heatmap.
pub fn svg_heatmap_string(field: &Tensor<f64>, title: &str) -> Result<String> {
    let (ny, nx) = field.dims2()?;
    if !field.all_finite() {
        return Err(Error::parameter("heatmap field contains NaN or infinite values"));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in field.data() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let cell = (480.0 / nx.max(ny) as f64).max(2.0);
    let (width, height) = (nx as f64 * cell, ny as f64 * cell);
    let header_h = 24.0;
    let mut svg = String::new();
    svg.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0}\" height=\"{:.0}\" viewBox=\"0 0 {:.0} {:.0}\">\n",
        width,
        height + header_h,
        width,
        height + header_h
    ));
    svg.push_str(&format!(
        "<text x=\"4\" y=\"16\" font-family=\"monospace\" font-size=\"12\">{} [{} .. {}]</text>\n",
        escape(title),
        super::csvout::fmt_f64(lo),
        super::csvout::fmt_f64(hi)
    ));
    for i in 0..ny {
        for j in 0..nx {
            let v = field.at2(i, j);
            let t = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
            // Row 0 at the bottom.
            let y = header_h + (ny - 1 - i) as f64 * cell;
            svg.push_str(&format!(
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\"/>\n",
                j as f64 * cell,
                y,
                cell,
                cell,
                ramp_color(t)
            ));
        }
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn write_svg_heatmap(field: &Tensor<f64>, title: &str, path: &Path) -> Result<()> {
    fs::write(path, svg_heatmap_string(field, title)?)?;
    Ok(())
}

/// Renders labeled series as polylines with axes, ticks, and a legend.
pub fn svg_curves_string(
    series: &[CurveSeries],
    title: &str,
    x_label: &str,
    y_label: &str,
) -> Result<String> {
    if series.is_empty() || series.iter().all(|s| s.points.is_empty()) {
        return Err(Error::parameter("nothing to plot"));
    }
    for s in series {
        if s.points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::parameter(format!("series `{}` contains non-finite points", s.label)));
        }
    }
    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for s in series {
        for &(x, y) in &s.points {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    if y1 == y0 {
        y1 = y0 + 1.0;
    }
    let (w, h) = (640.0, 480.0);
    let (ml, mr, mt, mb) = (60.0, 20.0, 36.0, 48.0);
    let sx = |x: f64| ml + (x - x0) / (x1 - x0) * (w - ml - mr);
    let sy = |y: f64| h - mb - (y - y0) / (y1 - y0) * (h - mt - mb);

    let mut svg = String::new();
    svg.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.0} {h:.0}\">\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{:.0}\" y=\"20\" font-family=\"monospace\" font-size=\"14\">{}</text>\n",
        ml,
        escape(title)
    ));
    // Axes.
    svg.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
        h - mb,
        w - mr,
        h - mb
    ));
    svg.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
        h - mb
    ));
    for i in 0..=4 {
        let fx = x0 + (x1 - x0) * i as f64 / 4.0;
        let fy = y0 + (y1 - y0) * i as f64 / 4.0;
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"monospace\" font-size=\"10\" text-anchor=\"middle\">{:.3}</text>\n",
            sx(fx),
            h - mb + 16.0,
            fx
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"monospace\" font-size=\"10\" text-anchor=\"end\">{:.3}</text>\n",
            ml - 6.0,
            sy(fy) + 3.0,
            fy
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"monospace\" font-size=\"11\" text-anchor=\"middle\">{}</text>\n",
        (ml + w - mr) / 2.0,
        h - 10.0,
        escape(x_label)
    ));
    svg.push_str(&format!(
        "<text x=\"14\" y=\"{:.1}\" font-family=\"monospace\" font-size=\"11\" text-anchor=\"middle\" transform=\"rotate(-90 14 {:.1})\">{}</text>\n",
        (mt + h - mb) / 2.0,
        (mt + h - mb) / 2.0,
        escape(y_label)
    ));
    for (si, s) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        let pts: Vec<String> =
            s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            color,
            pts.join(" ")
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"monospace\" font-size=\"11\" fill=\"{}\">{}</text>\n",
            w - mr - 150.0,
            mt + 14.0 * si as f64,
            color,
            escape(&s.label)
        ));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn write_svg_curves(
    series: &[CurveSeries],
    title: &str,
    x_label: &str,
    y_label: &str,
    path: &Path,
) -> Result<()> {
    fs::write(path, svg_curves_string(series, title, x_label, y_label)?)?;
    Ok(())
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Minimal well-formedness scan: one root element, all tags closed.
    pub(crate) fn assert_well_formed(svg: &str) {
        assert!(svg.starts_with("<?xml"));
        let mut stack: Vec<String> = Vec::new();
        let mut roots = 0;
        for raw in svg.split('<').skip(1) {
            let tag_end = raw.find('>').expect("unclosed tag");
            let tag = &raw[..tag_end];
            if let Some(name) = tag.strip_prefix('/') {
                assert_eq!(stack.pop().as_deref(), Some(name.trim()), "mismatched close");
            } else if tag.starts_with('?') || tag.ends_with('/') {
                // declaration or self-closing
            } else {
                let name = tag.split_whitespace().next().unwrap().to_string();
                if stack.is_empty() {
                    roots += 1;
                }
                stack.push(name);
            }
        }
        assert!(stack.is_empty(), "unclosed tags: {stack:?}");
        assert_eq!(roots, 1, "exactly one root element");
    }

    #[test]
    fn constant_field_is_single_color_and_well_formed() {
        let field = Tensor::full(&[3, 3], 0.7);
        let svg = svg_heatmap_string(&field, "constant").unwrap();
        assert_well_formed(&svg);
        let fills: std::collections::HashSet<&str> = svg
            .match_indices("fill=\"#")
            .map(|(i, _)| &svg[i + 6..i + 13])
            .collect();
        assert_eq!(fills.len(), 1, "one color for a constant field: {fills:?}");
    }

    #[test]
    fn distinct_values_get_distinct_fills() {
        let field = Tensor::new(&[2, 2], vec![0.0, 0.25, 0.5, 1.0]).unwrap();
        let svg = svg_heatmap_string(&field, "2x2").unwrap();
        assert_well_formed(&svg);
        let rects = svg.matches("<rect").count();
        assert_eq!(rects, 4);
        let fills: std::collections::HashSet<&str> = svg
            .match_indices("fill=\"#")
            .map(|(i, _)| &svg[i + 6..i + 13])
            .collect();
        assert_eq!(fills.len(), 4);
    }

    #[test]
    fn nan_field_is_rejected() {
        let field = Tensor::new(&[1, 2], vec![0.0, f64::NAN]).unwrap();
        assert!(matches!(
            svg_heatmap_string(&field, "bad"),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn curves_render_and_validate() {
        let series = vec![
            CurveSeries { label: "a".into(), points: vec![(0.0, 0.0), (0.5, 0.4), (1.0, 1.0)] },
            CurveSeries { label: "b".into(), points: vec![(0.0, 0.2), (1.0, 0.6)] },
        ];
        let svg = svg_curves_string(&series, "roc", "fpr", "tpr").unwrap();
        assert_well_formed(&svg);
        assert_eq!(svg.matches("<polyline").count(), 2);
    }
}
