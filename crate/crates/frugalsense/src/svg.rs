//! Minimal SVG line charts for learning curves and reconstructions.

use std::fmt::Write;

use frugalsense_core::ppo::CurvePoint;

use crate::io::PosteriorRow;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;

pub struct Series<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub points: Vec<(f64, f64)>,
    /// Draw markers instead of a polyline.
    pub markers: bool,
}

fn bounds(series: &[Series]) -> (f64, f64, f64, f64) {
    let mut b = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in series.iter().flat_map(|s| s.points.iter()) {
        if x.is_finite() && y.is_finite() {
            b = (b.0.min(*x), b.1.max(*x), b.2.min(*y), b.3.max(*y));
        }
    }
    if !b.0.is_finite() {
        return (0.0, 1.0, 0.0, 1.0);
    }
    if b.1 == b.0 {
        b.1 = b.0 + 1.0;
    }
    if b.3 == b.2 {
        b.3 = b.2 + 1.0;
    }
    b
}

pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (x0, x1, y0, y1) = bounds(series);
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title));
    let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        s,
        r#"<polyline points="{left},{top} {left},{bottom} {right},{bottom}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(s, r#"<text x="{left}" y="{}" text-anchor="start">{x0:.4}</text>"#, bottom + 15.0);
    let _ = writeln!(s, r#"<text x="{right}" y="{}" text-anchor="end">{x1:.4}</text>"#, bottom + 15.0);
    let _ = writeln!(s, r#"<text x="{}" y="{bottom}" text-anchor="end">{y0:.4}</text>"#, left - 4.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{y1:.4}</text>"#, left - 4.0, top + 4.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, WIDTH / 2.0, HEIGHT - 10.0, escape(x_label));
    let _ = writeln!(
        s,
        r#"<text x="15" y="{}" text-anchor="middle" transform="rotate(-90 15 {})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    );
    for (k, ser) in series.iter().enumerate() {
        let pts: Vec<(f64, f64)> =
            ser.points.iter().filter(|(x, y)| x.is_finite() && y.is_finite()).map(|&(x, y)| (sx(x), sy(y))).collect();
        if ser.markers {
            for (x, y) in &pts {
                let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="2.5" fill="{}"/>"#, ser.color);
            }
        } else if !pts.is_empty() {
            let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.2"/>"#,
                coords.join(" "),
                ser.color
            );
        }
        let ly = top + 14.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{ly}" fill="{}" text-anchor="end">{}</text>"#,
            right,
            ser.color,
            escape(ser.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Trailing moving average over `window` points.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for (i, v) in values.iter().enumerate() {
        sum += v;
        if i >= window {
            sum -= values[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

pub fn learning_curve_chart(curve: &[CurvePoint]) -> String {
    let rewards: Vec<f64> = curve.iter().map(|c| c.reward).collect();
    let smooth = moving_average(&rewards, 50);
    let raw = Series {
        label: "episode reward",
        color: "#bbbbbb",
        points: curve.iter().map(|c| (c.episode as f64, c.reward)).collect(),
        markers: false,
    };
    let avg = Series {
        label: "moving average (50)",
        color: "#1f4e9c",
        points: curve.iter().zip(&smooth).map(|(c, m)| (c.episode as f64, *m)).collect(),
        markers: false,
    };
    line_chart("Learning curve", "episode", "reward", &[raw, avg])
}

pub fn posterior_chart(rows: &[PosteriorRow]) -> String {
    let line = |label, color, f: &dyn Fn(&PosteriorRow) -> f64| Series {
        label,
        color,
        points: rows.iter().map(|r| (r.slot as f64, f(r))).collect(),
        markers: false,
    };
    let series = [
        line("truth", "#444444", &|r| r.truth),
        line("mean", "#1f4e9c", &|r| r.mean),
        line("mean + 2 sd", "#9fb7e0", &|r| r.mean + 2.0 * r.sd),
        line("mean - 2 sd", "#9fb7e0", &|r| r.mean - 2.0 * r.sd),
        Series {
            label: "samples",
            color: "#c0392b",
            points: rows.iter().filter(|r| r.sampled == 1).map(|r| (r.slot as f64, r.truth)).collect(),
            markers: true,
        },
    ];
    line_chart("Reconstruction", "slot", "LAeq [dB]", &series)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moving_average_examples() {
        assert_eq!(moving_average(&[1.0, 3.0, 5.0, 7.0], 2), vec![1.0, 2.0, 4.0, 6.0]);
        assert_eq!(moving_average(&[], 5), Vec::<f64>::new());
    }

    #[test]
    fn chart_is_well_formed() {
        let curve: Vec<CurvePoint> = (0..10).map(|i| CurvePoint { episode: i, reward: i as f64, update: i / 4 }).collect();
        let svg = learning_curve_chart(&curve);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 3);
        // Degenerate input still renders.
        assert!(line_chart("t", "x", "y", &[]).contains("</svg>"));
    }
}
