//! Self-contained SVG line plots with a log-scale y axis.

use std::fmt::Write;

/// Values are clamped to this before taking `log10`.
pub const PLOT_FLOOR: f64 = 1e-16;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

pub const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// A mean curve with a ±1σ band.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub color: &'static str,
    pub dashed: bool,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

fn log_clamped(v: f64) -> f64 {
    if v.is_nan() {
        PLOT_FLOOR.log10()
    } else {
        v.max(PLOT_FLOOR).log10()
    }
}

struct Frame {
    kmax: f64,
    lo: f64,
    hi: f64,
}

impl Frame {
    fn x(&self, k: usize) -> f64 {
        LEFT + (WIDTH - LEFT - RIGHT) * k as f64 / self.kmax
    }

    fn y(&self, v: f64) -> f64 {
        let t = (log_clamped(v) - self.lo) / (self.hi - self.lo);
        HEIGHT - BOTTOM - (HEIGHT - TOP - BOTTOM) * t
    }
}

fn points(frame: &Frame, ks: impl Iterator<Item = usize>, vals: impl Fn(usize) -> f64) -> String {
    let mut s = String::new();
    for k in ks {
        if !s.is_empty() {
            s.push(' ');
        }
        write!(s, "{:.2},{:.2}", frame.x(k), frame.y(vals(k))).unwrap();
    }
    s
}

/// Renders `series` against the iteration index.
pub fn log_plot(title: &str, y_label: &str, series: &[Series]) -> String {
    let len = series.iter().map(|s| s.mean.len()).max().unwrap_or(0);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for s in series {
        for (m, d) in s.mean.iter().zip(&s.std) {
            lo = lo.min(log_clamped(m - d)).min(log_clamped(*m));
            hi = hi.max(log_clamped(m + d));
        }
    }
    if !lo.is_finite() || !hi.is_finite() {
        lo = PLOT_FLOOR.log10();
        hi = 0.0;
    }
    let (lo, mut hi) = (lo.floor(), hi.ceil());
    if hi <= lo {
        hi = lo + 1.0;
    }
    let frame = Frame {
        kmax: (len.max(2) - 1) as f64,
        lo,
        hi,
    };

    let mut out = String::new();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(
        out,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    )
    .unwrap();
    writeln!(
        out,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    )
    .unwrap();

    let (x0, x1) = (LEFT, WIDTH - RIGHT);
    let (y0, y1) = (HEIGHT - BOTTOM, TOP);
    let decades = (hi - lo) as i64;
    let step = ((decades + 7) / 8).max(1);
    let mut e = lo as i64;
    while e <= hi as i64 {
        let y = frame.y(10f64.powi(e as i32));
        writeln!(
            out,
            r##"<line x1="{x0:.2}" y1="{y:.2}" x2="{x1:.2}" y2="{y:.2}" stroke="#dddddd"/>"##
        )
        .unwrap();
        writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">1e{e}</text>"#,
            x0 - 6.0,
            y + 4.0
        )
        .unwrap();
        e += step;
    }
    for i in 0..=5 {
        let k = (frame.kmax * i as f64 / 5.0).round() as usize;
        let x = frame.x(k);
        writeln!(
            out,
            r##"<line x1="{x:.2}" y1="{y0:.2}" x2="{x:.2}" y2="{:.2}" stroke="#000000"/>"##,
            y0 + 5.0
        )
        .unwrap();
        writeln!(
            out,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{k}</text>"#,
            y0 + 20.0
        )
        .unwrap();
    }
    writeln!(out, r##"<rect x="{x0:.2}" y="{y1:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#000000"/>"##, x1 - x0, y0 - y1).unwrap();
    writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">iteration k</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 15.0
    )
    .unwrap();
    writeln!(
        out,
        r#"<text x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    )
    .unwrap();

    for s in series {
        let n = s.mean.len();
        if n == 0 {
            continue;
        }
        let upper = points(&frame, 0..n, |k| s.mean[k] + s.std[k]);
        let lower = points(&frame, (0..n).rev(), |k| s.mean[k] - s.std[k]);
        writeln!(
            out,
            r#"<polygon points="{upper} {lower}" fill="{}" fill-opacity="0.18" stroke="none"/>"#,
            s.color
        )
        .unwrap();
        let dash = if s.dashed {
            r#" stroke-dasharray="6 4""#
        } else {
            ""
        };
        writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"{dash}/>"#,
            points(&frame, 0..n, |k| s.mean[k]),
            s.color
        )
        .unwrap();
    }
    for (i, s) in series.iter().enumerate() {
        let y = TOP + 10.0 + 20.0 * i as f64;
        let lx = WIDTH - RIGHT + 12.0;
        let dash = if s.dashed {
            r#" stroke-dasharray="6 4""#
        } else {
            ""
        };
        writeln!(out, r#"<line x1="{lx:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{}" stroke-width="2"{dash}/>"#, lx + 24.0, s.color).unwrap();
        writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 30.0,
            y + 4.0,
            escape(&s.label)
        )
        .unwrap();
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(mean: Vec<f64>) -> Series {
        let std = vec![0.0; mean.len()];
        Series {
            label: "a<b".into(),
            color: PALETTE[0],
            dashed: false,
            mean,
            std,
        }
    }

    #[test]
    fn zeros_and_nans_are_clamped_to_the_floor() {
        let svg = log_plot("t", "gap", &[series(vec![1.0, 0.0, f64::NAN])]);
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
        assert!(svg.contains("1e-16"));
        assert!(svg.contains("a&lt;b"));
    }

    #[test]
    fn rendering_is_deterministic() {
        let s = series((0..50).map(|k| 0.9f64.powi(k)).collect());
        assert_eq!(
            log_plot("t", "y", std::slice::from_ref(&s)),
            log_plot("t", "y", &[s])
        );
    }
}
