//! Static SVG line plots with no plotting-library dependency.
//!
//! Output is a standalone file with axes, tick labels, a legend and one
//! polyline per series. Identical input produces identical bytes, which the
//! determinism checks rely on.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

/// A named sequence of (x, y) points.
#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(name: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Series {
            name: name.into(),
            points,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotStyle {
    Linear,
    /// Logarithmic y axis; non-positive values are clamped to 1e-300 and the
    /// plot is annotated when that happens.
    LogY,
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 560.0;
const MARGIN_LEFT: f64 = 78.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 24.0;
const MARGIN_BOTTOM: f64 = 46.0;

const PALETTE: [&str; 6] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
];

const LOG_CLAMP: f64 = 1e-300;

/// Writes the plot to `path`. `series` must be nonempty and contain at least
/// one finite point.
pub fn emit_svg_plot(series: &[Series], style: PlotStyle, path: &Path) -> io::Result<()> {
    assert!(!series.is_empty(), "need at least one series to plot");

    // Gather the transformed points, clamping for the log axis.
    let mut clamped = false;
    let transformed: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|s| {
            s.points
                .iter()
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .map(|&(x, y)| match style {
                    PlotStyle::Linear => (x, y),
                    PlotStyle::LogY => {
                        let y = if y <= 0.0 {
                            clamped = true;
                            LOG_CLAMP
                        } else {
                            y
                        };
                        (x, y.log10())
                    }
                })
                .collect()
        })
        .collect();

    let all = transformed.iter().flatten();
    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x_min = x_min.min(x);
        x_max = x_max.max(x);
        y_min = y_min.min(y);
        y_max = y_max.max(y);
    }
    assert!(
        x_min.is_finite() && y_min.is_finite(),
        "no finite points to plot"
    );
    if x_min == x_max {
        x_min -= 0.5;
        x_max += 0.5;
    }
    if y_min == y_max {
        y_min -= 0.5;
        y_max += 0.5;
    }

    // Ticks. The log axis ticks whole decades; both axes keep the data range.
    let (y_ticks, y_lo, y_hi) = match style {
        PlotStyle::Linear => {
            let t = nice_ticks(y_min, y_max);
            (t, y_min, y_max)
        }
        PlotStyle::LogY => {
            let lo = y_min.floor();
            let hi = y_max.ceil();
            let span = (hi - lo) as i64;
            let step = ((span + 14) / 15).max(1);
            let ticks = (lo as i64..=hi as i64)
                .step_by(step as usize)
                .map(|d| d as f64)
                .collect();
            (ticks, lo, hi)
        }
    };
    let x_ticks = nice_ticks(x_min, x_max);

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let px = |x: f64| MARGIN_LEFT + (x - x_min) / (x_max - x_min) * plot_w;
    let py = |y: f64| MARGIN_TOP + (1.0 - (y - y_lo) / (y_hi - y_lo)) * plot_h;

    let mut w = BufWriter::new(File::create(path)?);
    writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    )?;
    writeln!(
        w,
        r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    )?;

    // frame
    writeln!(
        w,
        r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#333333" stroke-width="1"/>"##,
        MARGIN_LEFT, MARGIN_TOP, plot_w, plot_h
    )?;

    // y ticks and labels
    for &t in &y_ticks {
        if t < y_lo - 1e-9 || t > y_hi + 1e-9 {
            continue;
        }
        let y = py(t);
        writeln!(
            w,
            r##"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#cccccc" stroke-width="0.5"/>"##,
            MARGIN_LEFT,
            MARGIN_LEFT + plot_w
        )?;
        let label = match style {
            PlotStyle::Linear => fmt_tick(t),
            PlotStyle::LogY => format!("1e{}", t as i64),
        };
        writeln!(
            w,
            r##"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="end" fill="#333333">{label}</text>"##,
            MARGIN_LEFT - 6.0,
            y + 4.0
        )?;
    }

    // x ticks and labels
    for &t in &x_ticks {
        if t < x_min - 1e-9 || t > x_max + 1e-9 {
            continue;
        }
        let x = px(t);
        writeln!(
            w,
            r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#cccccc" stroke-width="0.5"/>"##,
            MARGIN_TOP,
            MARGIN_TOP + plot_h
        )?;
        writeln!(
            w,
            r##"<text x="{x:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="middle" fill="#333333">{}</text>"##,
            MARGIN_TOP + plot_h + 16.0,
            fmt_tick(t)
        )?;
    }

    // series
    for (idx, pts) in transformed.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        write!(
            w,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points=""#
        )?;
        for (i, &(x, y)) in pts.iter().enumerate() {
            if i > 0 {
                write!(w, " ")?;
            }
            write!(w, "{:.2},{:.2}", px(x), py(y))?;
        }
        writeln!(w, r#""/>"#)?;
    }

    // legend, top right inside the frame
    for (idx, s) in series.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        let ly = MARGIN_TOP + 16.0 + idx as f64 * 16.0;
        let lx = MARGIN_LEFT + plot_w - 150.0;
        writeln!(
            w,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#,
            lx + 22.0
        )?;
        writeln!(
            w,
            r##"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12" fill="#333333">{}</text>"##,
            lx + 28.0,
            ly + 4.0,
            escape(&s.name)
        )?;
    }

    if clamped {
        writeln!(
            w,
            r##"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="10" fill="#aa0000">non-positive values clamped to 1e-300</text>"##,
            MARGIN_LEFT,
            HEIGHT - 6.0
        )?;
    }

    writeln!(w, "</svg>")?;
    w.flush()
}

/// 4 to 9 round-valued ticks covering [lo, hi].
fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    let raw_step = span / 5.0;
    let mag = 10f64.powf(raw_step.log10().floor());
    let norm = raw_step / mag;
    let step = if norm < 1.5 {
        mag
    } else if norm < 3.5 {
        2.0 * mag
    } else if norm < 7.5 {
        5.0 * mag
    } else {
        10.0 * mag
    };
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn fmt_tick(t: f64) -> String {
    if t == 0.0 {
        "0".to_string()
    } else if t.abs() >= 1e5 || t.abs() < 1e-3 {
        format!("{t:e}")
    } else {
        // trim trailing zeros from a fixed rendering
        let s = format!("{t:.6}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        s.to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
