//! Minimal static SVG plots: scatter/line series on linear or log-log axes,
//! with an optional power-law guide line. Output is deterministic (fixed
//! float formatting, fixed palette) and self-contained.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 440.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 24.0;
const MARGIN_T: f64 = 36.0;
const MARGIN_B: f64 = 52.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf",
    "#7f7f7f",
];

#[derive(Clone, Debug)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

enum Scale {
    Linear,
    LogLog,
}

fn fmt2(x: f64) -> String {
    format!("{x:.2}")
}

/// Short human label for tick values.
fn tick_label(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if (1e-3..1e4).contains(&a) {
        let s = format!("{v:.3}");
        let s = s.trim_end_matches('0').trim_end_matches('.').to_string();
        if s.is_empty() { "0".into() } else { s }
    } else {
        format!("{v:.1e}")
    }
}

/// Log-log scatter+line plot. Points with a non-positive coordinate are
/// skipped (they have no place on a log axis). `guide` draws a dashed
/// power-law reference `y = y0 (x/x0)^e` anchored at the median point of
/// the first non-empty series, labeled with its exponent.
pub fn loglog_plot(
    title: &str,
    xlabel: &str,
    ylabel: &str,
    series: &[Series],
    guide_exponent: Option<f64>,
) -> String {
    render(title, xlabel, ylabel, series, Scale::LogLog, guide_exponent)
}

/// Linear-axes scatter+line plot.
pub fn linear_plot(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> String {
    render(title, xlabel, ylabel, series, Scale::Linear, None)
}

fn render(
    title: &str,
    xlabel: &str,
    ylabel: &str,
    series: &[Series],
    scale: Scale,
    guide_exponent: Option<f64>,
) -> String {
    // Transform to plot coordinates, dropping points a log axis cannot show.
    let transformed: Vec<(String, Vec<(f64, f64)>)> = series
        .iter()
        .map(|s| {
            let pts = s
                .points
                .iter()
                .filter(|(x, y)| match scale {
                    Scale::Linear => x.is_finite() && y.is_finite(),
                    Scale::LogLog => *x > 0.0 && *y > 0.0,
                })
                .map(|&(x, y)| match scale {
                    Scale::Linear => (x, y),
                    Scale::LogLog => (x.log10(), y.log10()),
                })
                .collect();
            (s.name.clone(), pts)
        })
        .collect();

    let mut svg = String::new();
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">
<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>
<text x="{tx}" y="20" text-anchor="middle" font-size="14">{title}</text>
"#,
        tx = WIDTH / 2.0,
        title = escape(title),
    );

    let all: Vec<(f64, f64)> = transformed.iter().flat_map(|(_, p)| p.iter().copied()).collect();
    if all.is_empty() {
        let _ = write!(
            svg,
            r#"<text x="{x}" y="{y}" text-anchor="middle">no plottable data</text></svg>"#,
            x = WIDTH / 2.0,
            y = HEIGHT / 2.0
        );
        return svg;
    }

    let (mut x0, mut x1, mut y0, mut y1) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for &(x, y) in &all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    // Pad degenerate or tight ranges.
    let pad = |lo: &mut f64, hi: &mut f64| {
        let span = *hi - *lo;
        let eps = if span > 0.0 { span * 0.06 } else { 0.5 };
        *lo -= eps;
        *hi += eps;
    };
    pad(&mut x0, &mut x1);
    pad(&mut y0, &mut y1);

    let px = |x: f64| MARGIN_L + (x - x0) / (x1 - x0) * (WIDTH - MARGIN_L - MARGIN_R);
    let py = |y: f64| HEIGHT - MARGIN_B - (y - y0) / (y1 - y0) * (HEIGHT - MARGIN_T - MARGIN_B);

    // Frame.
    let _ = write!(
        svg,
        r##"<rect x="{l}" y="{t}" width="{w}" height="{h}" fill="none" stroke="#333"/>
"##,
        l = fmt2(MARGIN_L),
        t = fmt2(MARGIN_T),
        w = fmt2(WIDTH - MARGIN_L - MARGIN_R),
        h = fmt2(HEIGHT - MARGIN_T - MARGIN_B),
    );

    // Ticks: powers of ten on log axes, five even steps on linear axes.
    let ticks = |lo: f64, hi: f64| -> Vec<(f64, String)> {
        match scale {
            Scale::LogLog => {
                let (a, b) = (lo.ceil() as i64, hi.floor() as i64);
                (a..=b)
                    .map(|k| (k as f64, tick_label(10f64.powi(k as i32))))
                    .collect()
            }
            Scale::Linear => (0..=4)
                .map(|k| {
                    let v = lo + (hi - lo) * k as f64 / 4.0;
                    (v, tick_label(v))
                })
                .collect(),
        }
    };
    for (v, label) in ticks(x0, x1) {
        let x = px(v);
        let _ = write!(
            svg,
            r##"<line x1="{x}" y1="{b}" x2="{x}" y2="{b2}" stroke="#333"/>
<text x="{x}" y="{ty}" text-anchor="middle">{label}</text>
"##,
            x = fmt2(x),
            b = fmt2(HEIGHT - MARGIN_B),
            b2 = fmt2(HEIGHT - MARGIN_B + 5.0),
            ty = fmt2(HEIGHT - MARGIN_B + 18.0),
        );
    }
    for (v, label) in ticks(y0, y1) {
        let y = py(v);
        let _ = write!(
            svg,
            r##"<line x1="{l}" y1="{y}" x2="{l2}" y2="{y}" stroke="#333"/>
<text x="{tx}" y="{ty}" text-anchor="end">{label}</text>
"##,
            y = fmt2(y),
            l = fmt2(MARGIN_L),
            l2 = fmt2(MARGIN_L - 5.0),
            tx = fmt2(MARGIN_L - 8.0),
            ty = fmt2(y + 4.0),
        );
    }
    // Axis labels.
    let _ = write!(
        svg,
        r#"<text x="{cx}" y="{by}" text-anchor="middle">{xl}</text>
<text x="16" y="{cy}" text-anchor="middle" transform="rotate(-90 16 {cy})">{yl}</text>
"#,
        cx = fmt2((MARGIN_L + WIDTH - MARGIN_R) / 2.0),
        by = fmt2(HEIGHT - 12.0),
        cy = fmt2((MARGIN_T + HEIGHT - MARGIN_B) / 2.0),
        xl = escape(xlabel),
        yl = escape(ylabel),
    );

    // Guide line (log-log only): dashed y = y_ref + e (x - x_ref).
    if let (Some(e), Scale::LogLog) = (guide_exponent, &scale) {
        if let Some((_, pts)) = transformed.iter().find(|(_, p)| !p.is_empty()) {
            let mut sorted = pts.clone();
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
            let (xr, yr) = sorted[sorted.len() / 2];
            let ya = yr + e * (x0 - xr);
            let yb = yr + e * (x1 - xr);
            let _ = write!(
                svg,
                r##"<line x1="{x1p}" y1="{y1p}" x2="{x2p}" y2="{y2p}" stroke="#555" stroke-dasharray="6 4"/>
<text x="{lx}" y="{ly}" fill="#555">slope {e}</text>
"##,
                x1p = fmt2(px(x0)),
                y1p = fmt2(py(ya)),
                x2p = fmt2(px(x1)),
                y2p = fmt2(py(yb)),
                lx = fmt2(px(x0) + 8.0),
                ly = fmt2(py(ya) - 6.0),
                e = tick_label(e),
            );
        }
    }

    // Series: polyline through x-sorted points plus markers, and a legend.
    for (k, (name, pts)) in transformed.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        if !pts.is_empty() {
            let mut sorted = pts.clone();
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
            let path: Vec<String> =
                sorted.iter().map(|&(x, y)| format!("{},{}", fmt2(px(x)), fmt2(py(y)))).collect();
            let _ = write!(
                svg,
                r#"<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>
"#,
                pts = path.join(" "),
            );
            for &(x, y) in &sorted {
                let _ = write!(
                    svg,
                    r#"<circle cx="{cx}" cy="{cy}" r="3" fill="{color}"/>
"#,
                    cx = fmt2(px(x)),
                    cy = fmt2(py(y)),
                );
            }
        }
        let ly = MARGIN_T + 14.0 + 16.0 * k as f64;
        let _ = write!(
            svg,
            r#"<rect x="{lx}" y="{ry}" width="10" height="10" fill="{color}"/>
<text x="{tx}" y="{ty}">{name}</text>
"#,
            lx = fmt2(WIDTH - MARGIN_R - 150.0),
            ry = fmt2(ly - 9.0),
            tx = fmt2(WIDTH - MARGIN_R - 136.0),
            ty = fmt2(ly),
            name = escape(name),
        );
    }
    svg.push_str("</svg>");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
