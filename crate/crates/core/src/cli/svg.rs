//! Pairwise-angle heatmap as a standalone SVG.

use std::fmt::Write;

use crate::numerics::DenseMatrix;

const CELL: usize = 48;
const MARGIN: usize = 40;

/// Cell colour runs from white at `lo` degrees to dark blue at `hi`.
fn shade(v: f64, lo: f64, hi: f64) -> String {
    let t = if hi > lo {
        ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
    } else {
        0.5
    };
    let mix = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!(
        "#{:02x}{:02x}{:02x}",
        mix(255.0, 8.0),
        mix(255.0, 48.0),
        mix(255.0, 107.0)
    )
}

/// Heatmap of a `K x K` angle matrix in degrees with the value printed in
/// every off-diagonal cell. `title` lands in a comment and the caption.
pub fn angle_heatmap(angles: &DenseMatrix, title: &str) -> String {
    let k = angles.rows();
    let off: Vec<f64> = (0..k)
        .flat_map(|i| (0..k).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| angles[(i, j)])
        .collect();
    let lo = off.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = off.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let side = 2 * MARGIN + k * CELL;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{side}" height="{}" font-family="sans-serif">"#,
        side + 20
    );
    let _ = writeln!(s, "<!-- {} -->", escape(title));
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for i in 0..k {
        let y = MARGIN + i * CELL;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="11" text-anchor="end">{i}</text>"#,
            MARGIN - 6,
            y + CELL / 2 + 4
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="11" text-anchor="middle">{i}</text>"#,
            y + CELL / 2,
            MARGIN - 8
        );
        for j in 0..k {
            let x = MARGIN + j * CELL;
            if i == j {
                let _ = writeln!(
                    s,
                    r##"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="#cccccc"/>"##
                );
                continue;
            }
            let v = angles[(i, j)];
            let t = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
            let ink = if t > 0.55 { "white" } else { "black" };
            let _ = writeln!(
                s,
                r#"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="{}" stroke="white"/>"#,
                shade(v, lo, hi)
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" font-size="10" text-anchor="middle" fill="{ink}">{v:.1}</text>"#,
                x + CELL / 2,
                y + CELL / 2 + 4
            );
        }
    }
    let _ = writeln!(
        s,
        r#"<text x="{MARGIN}" y="{}" font-size="12">{}</text>"#,
        side + 8,
        escape(title)
    );
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace("--", "- -")
}
