//! Plain-text SVG charts: behavior Gantt rows and row-normalized heatmaps.

use std::fmt::Write;

use crate::metrics::GanttSegment;

const PALETTE: [&str; 12] =
    ["#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac", "#86bcb6", "#d37295"];
const TECHNICAL_FILL: &str = "#d9d9d9";

pub fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

/// One Gantt row per stream. Colors follow the order of `codes`; codes
/// flagged by `is_technical` are drawn grey.
pub struct GanttRow<'a> {
    pub label: &'a str,
    pub segments: &'a [GanttSegment],
}

pub fn gantt_svg(title: &str, rows: &[GanttRow<'_>], codes: &[String], is_technical: impl Fn(&str) -> bool) -> String {
    let (left, top, row_h, width) = (120.0, 40.0, 24.0, 800.0);
    let t0 = rows.iter().flat_map(|r| r.segments.first()).map(|s| s.start).fold(f64::INFINITY, f64::min);
    let t1 = rows.iter().flat_map(|r| r.segments.last()).map(|s| s.end).fold(f64::NEG_INFINITY, f64::max);
    let span = if t1 > t0 { t1 - t0 } else { 1.0 };
    let t0 = if t0.is_finite() { t0 } else { 0.0 };
    let legend_y = top + row_h * rows.len() as f64 + 20.0;
    let height = legend_y + 20.0 * (codes.len() as f64 / 6.0).ceil().max(1.0) + 10.0;
    let color = |code: &str| -> &str {
        if is_technical(code) {
            return TECHNICAL_FILL;
        }
        codes.iter().position(|c| c == code).map_or("#000000", |i| PALETTE[i % PALETTE.len()])
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{height}" viewBox="0 0 {} {height}">"#,
        left + width + 20.0,
        left + width + 20.0
    );
    let _ = writeln!(s, r#"<text x="{left}" y="20" font-family="sans-serif" font-size="14">{}</text>"#, escape(title));
    for (r, row) in rows.iter().enumerate() {
        let y = top + r as f64 * row_h;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">{}</text>"#,
            left - 6.0,
            y + row_h * 0.65,
            escape(row.label)
        );
        for seg in row.segments {
            let x = left + (seg.start - t0) / span * width;
            let w = (seg.end - seg.start) / span * width;
            let _ = writeln!(
                s,
                r#"<rect class="segment" x="{x:.3}" y="{:.3}" width="{w:.3}" height="{:.3}" fill="{}"><title>{} {}-{}</title></rect>"#,
                y + 2.0,
                row_h - 4.0,
                color(&seg.code),
                escape(&seg.code),
                seg.start,
                seg.end
            );
        }
    }
    for (i, code) in codes.iter().enumerate() {
        let x = left + (i % 6) as f64 * 130.0;
        let y = legend_y + (i / 6) as f64 * 20.0;
        let _ = writeln!(s, r#"<rect class="legend" x="{x}" y="{}" width="12" height="12" fill="{}"/>"#, y - 10.0, color(code));
        let _ = writeln!(s, r#"<text x="{}" y="{y}" font-family="sans-serif" font-size="11">{}</text>"#, x + 16.0, escape(code));
    }
    s.push_str("</svg>\n");
    s
}

/// Heatmap of a square matrix whose rows are probability vectors; rows
/// without data are left blank.
pub fn heatmap_svg(title: &str, codes: &[String], rows: &[Option<Vec<f64>>]) -> String {
    let cell = 44.0;
    let (left, top) = (70.0, 60.0);
    let n = codes.len() as f64;
    let (w, h) = (left + cell * n + 20.0, top + cell * n + 20.0);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<text x="10" y="20" font-family="sans-serif" font-size="14">{}</text>"#, escape(title));
    for (j, code) in codes.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
            left + cell * (j as f64 + 0.5),
            top - 8.0,
            escape(code)
        );
    }
    for (i, (code, row)) in codes.iter().zip(rows).enumerate() {
        let y = top + cell * i as f64;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="end">{}</text>"#,
            left - 6.0,
            y + cell * 0.6,
            escape(code)
        );
        let Some(row) = row else { continue };
        for (j, v) in row.iter().enumerate() {
            let x = left + cell * j as f64;
            let shade = (255.0 * (1.0 - v.clamp(0.0, 1.0))).round() as u8;
            let ink = if *v > 0.5 { "#ffffff" } else { "#000000" };
            let _ = writeln!(
                s,
                r##"<rect class="cell" x="{x}" y="{y}" width="{cell}" height="{cell}" fill="#{shade:02x}{shade:02x}ff" stroke="#ffffff"/>"##
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="10" text-anchor="middle" fill="{ink}">{v:.2}</text>"#,
                x + cell / 2.0,
                y + cell * 0.6
            );
        }
    }
    s.push_str("</svg>\n");
    s
}
