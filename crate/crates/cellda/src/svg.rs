//! Static SVG renderings of class maps and cell maps.

use std::fmt::Write;

use cellda_core::diagnostics::{cutoff_coord, CellStatus, CellmapRow, ClassmapRow, AXIS_MAX};

/// `|stdres|` at which cell-map colors are fully saturated.
pub const SATURATION: f64 = 6.0;

const PALETTE: [&str; 8] = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666"];

fn class_color(g: usize) -> &'static str {
    if g == 0 {
        "#000000"
    } else {
        PALETTE[(g - 1) % PALETTE.len()]
    }
}

/// Class map of the cases whose given label is `class`: distance axis on x,
/// PAC on y. Triangles mark cases with a flagged cell; the fill shows the
/// predicted class and class-0 cases get a black outline.
pub fn classmap_svg(rows: &[ClassmapRow], class: usize, class_name: &str) -> String {
    let (w, h) = (520.0, 420.0);
    let (left, right, top, bottom) = (60.0, 20.0, 40.0, 50.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let px = |x: f64| left + x / AXIS_MAX * pw;
    let py = |y: f64| top + (1.0 - y) * ph;

    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#).unwrap();
    writeln!(s, r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>"#).unwrap();
    writeln!(s, r##"<rect x="{left}" y="{}" width="{pw}" height="{}" fill="#e6e6e6"/>"##, py(0.5), ph / 2.0).unwrap();
    writeln!(s, r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#).unwrap();
    writeln!(s, r#"<line x1="{left}" y1="{0}" x2="{1}" y2="{0}" stroke="grey" stroke-dasharray="4 3"/>"#, py(0.5), left + pw).unwrap();
    let cx = px(cutoff_coord());
    writeln!(s, r#"<line x1="{cx:.3}" y1="{top}" x2="{cx:.3}" y2="{}" stroke="black" stroke-dasharray="2 2"/>"#, top + ph).unwrap();
    for t in 0..=4 {
        let x = px(f64::from(t));
        writeln!(s, r#"<text x="{x:.3}" y="{}" font-size="11" text-anchor="middle">{t}</text>"#, top + ph + 16.0).unwrap();
    }
    for t in [0.0, 0.25, 0.5, 0.75, 1.0] {
        writeln!(s, r#"<text x="{}" y="{:.3}" font-size="11" text-anchor="end">{t}</text>"#, left - 6.0, py(t) + 4.0).unwrap();
    }
    writeln!(s, r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">distance to class {}</text>"#, left + pw / 2.0, h - 10.0, escape(class_name)).unwrap();
    writeln!(s, r#"<text x="16" y="{}" font-size="12" text-anchor="middle" transform="rotate(-90 16 {})">PAC</text>"#, top + ph / 2.0, top + ph / 2.0).unwrap();
    writeln!(s, r#"<text x="{}" y="24" font-size="14" text-anchor="middle">class map: {}</text>"#, w / 2.0, escape(class_name)).unwrap();

    for r in rows.iter().filter(|r| r.given == class) {
        let (x, y) = (px(r.axis_coord), py(r.pac));
        let fill = class_color(r.predicted);
        let stroke = if r.predicted == 0 { "black" } else { "none" };
        if r.flagged_any {
            writeln!(
                s,
                r#"<polygon points="{:.3},{:.3} {:.3},{:.3} {:.3},{:.3}" fill="{fill}" stroke="{stroke}"/>"#,
                x,
                y - 4.5,
                x - 4.0,
                y + 3.0,
                x + 4.0,
                y + 3.0
            )
            .unwrap();
        } else {
            writeln!(s, r#"<circle cx="{x:.3}" cy="{y:.3}" r="3.5" fill="{fill}" stroke="{stroke}"/>"#).unwrap();
        }
    }
    s.push_str("</svg>\n");
    s
}

fn cell_color(status: CellStatus, stdres: f64) -> String {
    let t = (stdres.abs() / SATURATION).min(1.0);
    let fade = (255.0 * (1.0 - t)).round() as u8;
    match status {
        CellStatus::Clean => "#ffff66".to_string(),
        CellStatus::Na => "#ffffff".to_string(),
        CellStatus::High => format!("#ff{fade:02x}{fade:02x}"),
        CellStatus::Low => format!("#{fade:02x}{fade:02x}ff"),
    }
}

/// Cell map: one square per cell, yellow when clean, red (blue) when
/// flagged above (below) its prediction, white when missing. Color depth
/// grows with `|stdres|` up to [`SATURATION`].
pub fn cellmap_svg(rows: &[CellmapRow], col_names: &[String], row_names: &[String]) -> String {
    let cell = 14.0;
    let left = 80.0;
    let top = 90.0;
    // only the rows present in the table, in order of appearance
    let mut present: Vec<usize> = rows.iter().map(|r| r.row).collect();
    present.dedup();
    let pos = |row: usize| present.iter().position(|&r| r == row).unwrap_or(0);
    let w = left + cell * col_names.len() as f64 + 20.0;
    let h = top + cell * present.len() as f64 + 20.0;

    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#).unwrap();
    writeln!(s, r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>"#).unwrap();
    for (j, name) in col_names.iter().enumerate() {
        let x = left + cell * (j as f64 + 0.5);
        writeln!(s, r#"<text x="{x}" y="{}" font-size="10" transform="rotate(-60 {x} {})">{}</text>"#, top - 4.0, top - 4.0, escape(name)).unwrap();
    }
    for (k, &row) in present.iter().enumerate() {
        let name = row_names.get(row).cloned().unwrap_or_else(|| (row + 1).to_string());
        writeln!(s, r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{}</text>"#, left - 4.0, top + cell * (k as f64 + 0.8), escape(&name)).unwrap();
    }
    for r in rows {
        let x = left + cell * r.col as f64;
        let y = top + cell * pos(r.row) as f64;
        writeln!(s, r##"<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{}" stroke="#bbbbbb" stroke-width="0.5"/>"##, cell_color(r.status, r.stdres))
            .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_classmap_is_valid() {
        let s = classmap_svg(&[], 1, "a");
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        assert!(!s.contains("<circle") && !s.contains("<polygon"));
    }

    #[test]
    fn unflagged_low_pac_case_is_a_circle_in_the_grey_half() {
        let row = ClassmapRow { case: 0, given: 1, predicted: 1, flagged_any: false, md: 1.0, axis_coord: 0.674, pac: 0.2 };
        let s = classmap_svg(&[row], 1, "a");
        assert_eq!(s.matches("<circle").count(), 1);
        let cy: f64 = s.split("cy=\"").nth(1).unwrap().split('"').next().unwrap().parse().unwrap();
        // grey band spans the lower half of the plot area: y in [205, 370]
        assert!(cy > 205.0 && cy < 370.0);
    }

    #[test]
    fn saturated_colors() {
        assert_eq!(cell_color(CellStatus::High, 9.0), "#ff0000");
        assert_eq!(cell_color(CellStatus::Low, -6.0), "#0000ff");
        assert_eq!(cell_color(CellStatus::Clean, 0.0), "#ffff66");
    }
}
