//! Minimal hand-written SVG charts for run artifacts.

use std::fmt::Write as _;

const W: f64 = 900.0;
const H: f64 = 420.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 70.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        escape(title)
    );
}

fn axes(out: &mut String, y_label: &str, x_label: &str) {
    let (x0, y0, x1, y1) = (LEFT, H - BOTTOM, W - RIGHT, TOP);
    let _ = writeln!(out, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#);
    let _ = writeln!(out, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="16" y="{}" transform="rotate(-90 16 {})" text-anchor="middle">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        H - 8.0,
        escape(x_label)
    );
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    (0..=4).map(|k| lo + (hi - lo) * k as f64 / 4.0).collect()
}

/// Vertical bars, one per label, in the given order.
pub fn bar_chart(title: &str, y_label: &str, bars: &[(String, f64)], highlight: impl Fn(&str) -> Option<&'static str>) -> String {
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, y_label, "");
    let ymax = bars.iter().map(|b| b.1).fold(0.0f64, f64::max).max(1e-9);
    let plot_w = W - LEFT - RIGHT;
    let plot_h = H - TOP - BOTTOM;
    for t in ticks(0.0, ymax) {
        let y = H - BOTTOM - t / ymax * plot_h;
        let _ = writeln!(out, r#"<text x="{}" y="{y:.1}" text-anchor="end">{t:.3}</text>"#, LEFT - 4.0);
    }
    let step = plot_w / bars.len().max(1) as f64;
    for (i, (label, v)) in bars.iter().enumerate() {
        let h = v / ymax * plot_h;
        let x = LEFT + i as f64 * step + step * 0.15;
        let fill = highlight(label).unwrap_or("#4c72b0");
        let _ = writeln!(
            out,
            r#"<rect x="{x:.1}" y="{:.1}" width="{:.1}" height="{h:.1}" fill="{fill}"><title>{} {v:.6}</title></rect>"#,
            H - BOTTOM - h,
            step * 0.7,
            escape(label)
        );
        let lx = x + step * 0.35;
        let ly = H - BOTTOM + 12.0;
        let _ = writeln!(
            out,
            r#"<text x="{lx:.1}" y="{ly:.1}" transform="rotate(60 {lx:.1} {ly:.1})">{}</text>"#,
            escape(label)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Labeled scatter plot with a least-squares trend line.
pub fn scatter_plot(title: &str, x_label: &str, y_label: &str, points: &[(String, f64, f64)]) -> String {
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, y_label, x_label);
    let (mut xmin, mut xmax, mut ymin, mut ymax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for (_, x, y) in points {
        xmin = xmin.min(*x);
        xmax = xmax.max(*x);
        ymin = ymin.min(*y);
        ymax = ymax.max(*y);
    }
    if points.is_empty() {
        (xmin, xmax, ymin, ymax) = (0.0, 1.0, 0.0, 1.0);
    }
    if xmax - xmin < 1e-12 {
        xmax = xmin + 1.0;
    }
    if ymax - ymin < 1e-12 {
        ymax = ymin + 1.0;
    }
    let px = |x: f64| LEFT + (x - xmin) / (xmax - xmin) * (W - LEFT - RIGHT);
    let py = |y: f64| H - BOTTOM - (y - ymin) / (ymax - ymin) * (H - TOP - BOTTOM);
    for t in ticks(xmin, xmax) {
        let _ = writeln!(out, r#"<text x="{:.1}" y="{}" text-anchor="middle">{t:.3}</text>"#, px(t), H - BOTTOM + 14.0);
    }
    for t in ticks(ymin, ymax) {
        let _ = writeln!(out, r#"<text x="{}" y="{:.1}" text-anchor="end">{t:.2}</text>"#, LEFT - 4.0, py(t));
    }
    if points.len() >= 2 {
        let n = points.len() as f64;
        let mx = points.iter().map(|p| p.1).sum::<f64>() / n;
        let my = points.iter().map(|p| p.2).sum::<f64>() / n;
        let sxx: f64 = points.iter().map(|p| (p.1 - mx).powi(2)).sum();
        if sxx > 0.0 {
            let slope = points.iter().map(|p| (p.1 - mx) * (p.2 - my)).sum::<f64>() / sxx;
            let at = |x: f64| my + slope * (x - mx);
            let _ = writeln!(
                out,
                r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#c44e52" stroke-dasharray="4 3"/>"##,
                px(xmin),
                py(at(xmin)),
                px(xmax),
                py(at(xmax))
            );
        }
    }
    for (label, x, y) in points {
        let _ = writeln!(
            out,
            r##"<circle cx="{:.1}" cy="{:.1}" r="3.5" fill="#4c72b0"/><text x="{:.1}" y="{:.1}">{}</text>"##,
            px(*x),
            py(*y),
            px(*x) + 5.0,
            py(*y) - 4.0,
            escape(label)
        );
    }
    out.push_str("</svg>\n");
    out
}
