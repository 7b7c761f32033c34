//! Minimal hand-rolled SVG output for loss curves and skeleton renders.

/// One data series for a line chart.
pub struct Series<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub points: Vec<(f64, f64)>,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if lo == hi {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

/// A line chart mapping the data bounds onto the drawing area, so the axis
/// ranges always cover the data extrema.
pub fn line_chart(title: &str, series: &[Series]) -> String {
    let (x_lo, x_hi) = bounds(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (y_lo, y_hi) = bounds(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let sx = |x: f64| MARGIN + (x - x_lo) / (x_hi - x_lo) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y_lo) / (y_hi - y_lo) * (HEIGHT - 2.0 * MARGIN);

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" data-x-range=\"{x_lo} {x_hi}\" data-y-range=\"{y_lo} {y_hi}\">\n"
    ));
    out.push_str(&format!(
        "  <text x=\"{MARGIN}\" y=\"24\" font-family=\"monospace\" font-size=\"14\">{title}</text>\n"
    ));
    out.push_str(&format!(
        "  <rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#888\"/>\n",
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    ));
    out.push_str(&format!(
        "  <text x=\"4\" y=\"{}\" font-family=\"monospace\" font-size=\"11\">{:.4}</text>\n",
        HEIGHT - MARGIN,
        y_lo
    ));
    out.push_str(&format!(
        "  <text x=\"4\" y=\"{}\" font-family=\"monospace\" font-size=\"11\">{:.4}</text>\n",
        MARGIN + 10.0,
        y_hi
    ));
    for (i, s) in series.iter().enumerate() {
        if s.points.is_empty() {
            continue;
        }
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        out.push_str(&format!(
            "  <polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            s.color,
            pts.join(" ")
        ));
        out.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"12\" fill=\"{}\">{}</text>\n",
            WIDTH - MARGIN - 120.0,
            MARGIN + 16.0 * (i as f64 + 1.0),
            s.color,
            s.label
        ));
    }
    out.push_str("</svg>\n");
    out
}

/// An orthographic skeleton render: one `<line>` per bone, one `<circle>`
/// per joint.
pub fn skeleton(points: &[[f64; 2]], bones: &[(usize, usize)], title: &str) -> String {
    let (x_lo, x_hi) = bounds(points.iter().map(|p| p[0]));
    let (y_lo, y_hi) = bounds(points.iter().map(|p| p[1]));
    let span = (x_hi - x_lo).max(y_hi - y_lo).max(1e-9);
    let size = 400.0;
    let margin = 30.0;
    let sx = |x: f64| margin + (x - x_lo) / span * (size - 2.0 * margin);
    let sy = |y: f64| margin + (y - y_lo) / span * (size - 2.0 * margin);

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size}\" height=\"{size}\" \
         viewBox=\"0 0 {size} {size}\" data-x-range=\"{x_lo} {x_hi}\" data-y-range=\"{y_lo} {y_hi}\">\n"
    ));
    out.push_str(&format!(
        "  <text x=\"8\" y=\"18\" font-family=\"monospace\" font-size=\"12\">{title}</text>\n"
    ));
    for &(a, b) in bones {
        out.push_str(&format!(
            "  <line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#2266aa\" stroke-width=\"2\"/>\n",
            sx(points[a][0]),
            sy(points[a][1]),
            sx(points[b][0]),
            sy(points[b][1])
        ));
    }
    for p in points {
        out.push_str(&format!(
            "  <circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"#aa3322\"/>\n",
            sx(p[0]),
            sy(p[1])
        ));
    }
    out.push_str("</svg>\n");
    out
}
