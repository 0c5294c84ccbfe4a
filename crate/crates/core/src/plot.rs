//! Minimal deterministic SVG line charts.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 56.0;

/// Renders one polyline on a fixed canvas with min/max axis labels.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, points: &[(f64, f64)]) -> String {
    let finite: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .collect();
    let range = |sel: fn(&(f64, f64)) -> f64| {
        let lo = finite.iter().map(sel).fold(f64::INFINITY, f64::min);
        let hi = finite.iter().map(sel).fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if lo == hi {
            (lo - 0.5, hi + 0.5)
        } else {
            (lo, hi)
        }
    };
    let (x0, x1) = range(|p| p.0);
    let (y0, y1) = range(|p| p.1);
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<path d="M{m} {t} L{m} {b} L{r} {b}" fill="none" stroke="black"/>"#,
        m = MARGIN,
        t = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN
    );
    let label = |s: &mut String, x: f64, y: f64, anchor: &str, text: &str| {
        let _ = writeln!(
            s,
            r#"<text x="{x:.1}" y="{y:.1}" text-anchor="{anchor}" font-family="sans-serif" font-size="11">{}</text>"#,
            escape(text)
        );
    };
    label(
        &mut s,
        MARGIN,
        HEIGHT - MARGIN + 16.0,
        "start",
        &format!("{x0:.4e}"),
    );
    label(
        &mut s,
        WIDTH - MARGIN,
        HEIGHT - MARGIN + 16.0,
        "end",
        &format!("{x1:.4e}"),
    );
    label(
        &mut s,
        MARGIN - 4.0,
        HEIGHT - MARGIN,
        "end",
        &format!("{y0:.4e}"),
    );
    label(
        &mut s,
        MARGIN - 4.0,
        MARGIN + 4.0,
        "end",
        &format!("{y1:.4e}"),
    );
    label(&mut s, WIDTH / 2.0, HEIGHT - 12.0, "middle", x_label);
    label(&mut s, 14.0, HEIGHT / 2.0, "start", y_label);

    let mut path = String::new();
    for (k, (x, y)) in finite.iter().enumerate() {
        let _ = write!(
            path,
            "{}{:.2} {:.2}",
            if k == 0 { "M" } else { " L" },
            px(*x),
            py(*y)
        );
    }
    let _ = writeln!(
        s,
        r#"<path d="{path}" fill="none" stroke="steelblue" stroke-width="1.5"/>"#
    );
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_well_formed() {
        let pts: Vec<(f64, f64)> = (0..10).map(|k| (f64::from(k), f64::from(k * k))).collect();
        let a = line_chart("t", "x", "y <V>", &pts);
        assert_eq!(a, line_chart("t", "x", "y <V>", &pts));
        assert!(a.starts_with("<svg"));
        assert!(a.trim_end().ends_with("</svg>"));
        assert!(a.contains("y &lt;V&gt;"));
        assert!(line_chart("empty", "x", "y", &[]).contains("</svg>"));
    }
}
