use std::fmt::Write as _;

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];
const SIZE: f64 = 480.0;
const MARGIN: f64 = 40.0;

/// `x,y,label` rows.
pub fn embedding_csv(points: &[[f64; 2]], labels: &[String]) -> String {
    let mut s = String::from("x,y,label\n");
    for (p, l) in points.iter().zip(labels) {
        writeln!(s, "{:.10},{:.10},{l}", p[0], p[1]).unwrap();
    }
    s
}

fn bounds(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let lo = values.clone().fold(f64::INFINITY, f64::min);
    let hi = values.fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() || !hi.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn map(v: f64, (lo, hi): (f64, f64), flip: bool) -> f64 {
    let t = (v - lo) / (hi - lo);
    MARGIN + (SIZE - 2.0 * MARGIN) * if flip { 1.0 - t } else { t }
}

fn header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" viewBox=\"0 0 {SIZE} {SIZE}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{MARGIN}\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">{}</text>\n",
        escape(title)
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Scatter plot colored by label, with a legend in first-seen label order.
pub fn scatter_svg(points: &[[f64; 2]], labels: &[String], title: &str) -> String {
    let mut names: Vec<&str> = Vec::new();
    for l in labels {
        if !names.contains(&l.as_str()) {
            names.push(l);
        }
    }
    let bx = bounds(points.iter().map(|p| p[0]));
    let by = bounds(points.iter().map(|p| p[1]));
    let mut s = header(title);
    for (p, l) in points.iter().zip(labels) {
        let c = PALETTE[names.iter().position(|n| n == l).unwrap() % PALETTE.len()];
        writeln!(s, "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{c}\" fill-opacity=\"0.7\"/>", map(p[0], bx, false), map(p[1], by, true))
            .unwrap();
    }
    for (i, n) in names.iter().enumerate() {
        let y = MARGIN + 16.0 * i as f64;
        let c = PALETTE[i % PALETTE.len()];
        writeln!(
            s,
            "<circle cx=\"{:.0}\" cy=\"{y:.0}\" r=\"4\" fill=\"{c}\"/><text x=\"{:.0}\" y=\"{:.0}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>",
            SIZE - 130.0,
            SIZE - 120.0,
            y + 4.0,
            escape(n)
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

/// Line plot of one or more named series over steps `1..=len`.
pub fn line_svg(series: &[(&str, &[f64])], title: &str) -> String {
    let len = series.iter().map(|(_, v)| v.len()).max().unwrap_or(0);
    let bx = bounds([1.0, len.max(1) as f64].into_iter());
    let by = bounds(series.iter().flat_map(|(_, v)| v.iter().copied()).collect::<Vec<_>>().into_iter());
    let mut s = header(title);
    for (i, (name, v)) in series.iter().enumerate() {
        let c = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = v
            .iter()
            .enumerate()
            .map(|(k, y)| format!("{:.2},{:.2}", map((k + 1) as f64, bx, false), map(*y, by, true)))
            .collect();
        writeln!(s, "<polyline points=\"{}\" fill=\"none\" stroke=\"{c}\" stroke-width=\"2\"/>", pts.join(" ")).unwrap();
        writeln!(
            s,
            "<text x=\"{:.0}\" y=\"{:.0}\" fill=\"{c}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>",
            SIZE - 130.0,
            MARGIN + 16.0 * i as f64,
            escape(name)
        )
        .unwrap();
    }
    writeln!(
        s,
        "<text x=\"{MARGIN}\" y=\"{:.0}\" font-family=\"sans-serif\" font-size=\"11\">{:.4} to {:.4}</text>",
        SIZE - 12.0,
        by.0,
        by.1
    )
    .unwrap();
    s.push_str("</svg>\n");
    s
}
