//! Minimal SVG step plot for survival curves.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// One labelled step function: `(time, survival)` corners starting at `(0, 1)`.
pub struct StepSeries<'a> {
    pub label: &'a str,
    pub points: Vec<(f64, f64)>,
}

pub fn step_plot(series: &[StepSeries<'_>], t_max: f64, x_label: &str) -> String {
    let t_max = if t_max > 0.0 { t_max } else { 1.0 };
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let sx = |t: f64| MARGIN + plot_w * t / t_max;
    let sy = |s: f64| HEIGHT - MARGIN - plot_h * s;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<path d="M{x0:.2} {y1:.2} L{x0:.2} {y0:.2} L{x1:.2} {y0:.2}" fill="none" stroke="black"/>"#,
        x0 = sx(0.0),
        x1 = sx(t_max),
        y0 = sy(0.0),
        y1 = sy(1.0)
    );
    for k in 0..=4 {
        let s = k as f64 / 4.0;
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{s:.2}</text>"#,
            sx(0.0) - 6.0,
            sy(s) + 4.0
        );
        let t = t_max * k as f64 / 4.0;
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            sx(t),
            sy(0.0) + 18.0,
            trim_number(t)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{x_label}</text>"#,
        MARGIN + plot_w / 2.0,
        HEIGHT - 10.0
    );
    let _ = writeln!(
        out,
        r#"<text x="14" y="{:.2}" text-anchor="middle" transform="rotate(-90 14 {:.2})">survival</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );

    for (k, s) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let mut d = format!("M{:.2} {:.2}", sx(0.0), sy(1.0));
        let mut level = 1.0;
        for &(t, surv) in &s.points {
            let _ = write!(d, " L{:.2} {:.2} L{:.2} {:.2}", sx(t), sy(level), sx(t), sy(surv));
            level = surv;
        }
        let _ = write!(d, " L{:.2} {:.2}", sx(t_max), sy(level));
        let _ = writeln!(out, r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="1.5"/>"#);
        let ly = MARGIN + 16.0 * k as f64;
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" fill="{color}" text-anchor="end">{}</text>"#,
            WIDTH - MARGIN,
            ly,
            escape(s.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn trim_number(v: f64) -> String {
    let s = format!("{v:.2}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn emits_one_path_per_series() {
        let a = StepSeries { label: "a<b", points: vec![(1.0, 0.5), (2.0, 0.0)] };
        let b = StepSeries { label: "c", points: vec![] };
        let svg = step_plot(&[a, b], 3.0, "time");
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("stroke-width=\"1.5\"").count(), 2);
        assert!(svg.contains("a&lt;b"));
    }
}
