//! Standalone SVG line charts with error bars.
//!
//! Data bounds map onto the `plot-area` rectangle: the smallest x to its left
//! edge, the largest to its right edge, and `min(y − err)` / `max(y + err)` to
//! its bottom and top. A degenerate range maps to the middle of the box.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::eval::{best_frequency, FrequencyResponse};

pub const CANVAS_WIDTH: f64 = 640.0;
pub const CANVAS_HEIGHT: f64 = 400.0;
pub const PLOT_LEFT: f64 = 70.0;
pub const PLOT_TOP: f64 = 30.0;
pub const PLOT_RIGHT: f64 = 620.0;
pub const PLOT_BOTTOM: f64 = 340.0;

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesPoint {
    pub x: f64,
    pub y: f64,
    /// Half-length of the error bar.
    pub err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<SeriesPoint>,
    /// x of the highlighted point.
    pub best: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

struct Axis {
    lo: f64,
    hi: f64,
    from: f64,
    to: f64,
}

impl Axis {
    fn map(&self, v: f64) -> f64 {
        if self.hi - self.lo <= 0.0 {
            0.5 * (self.from + self.to)
        } else {
            self.from + (v - self.lo) / (self.hi - self.lo) * (self.to - self.from)
        }
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

impl Chart {
    pub fn render(&self) -> Result<String> {
        let points: Vec<&SeriesPoint> = self.series.iter().flat_map(|s| &s.points).collect();
        if points.is_empty() {
            return Err(Error::EmptyInput("nothing to plot".into()));
        }
        if points
            .iter()
            .any(|p| !(p.x.is_finite() && p.y.is_finite() && p.err.is_finite()))
        {
            return Err(Error::Validity("non-finite plot data".into()));
        }
        let fold = |f: fn(f64, f64) -> f64, init: f64, g: &dyn Fn(&SeriesPoint) -> f64| {
            points.iter().map(|p| g(p)).fold(init, f)
        };
        let x = Axis {
            lo: fold(f64::min, f64::INFINITY, &|p| p.x),
            hi: fold(f64::max, f64::NEG_INFINITY, &|p| p.x),
            from: PLOT_LEFT,
            to: PLOT_RIGHT,
        };
        let y = Axis {
            lo: fold(f64::min, f64::INFINITY, &|p| p.y - p.err.abs()),
            hi: fold(f64::max, f64::NEG_INFINITY, &|p| p.y + p.err.abs()),
            from: PLOT_BOTTOM,
            to: PLOT_TOP,
        };

        let mut s = String::new();
        let w = &mut s;
        let _ = writeln!(
            w,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{CANVAS_WIDTH}" height="{CANVAS_HEIGHT}" viewBox="0 0 {CANVAS_WIDTH} {CANVAS_HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(w, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            w,
            r#"<text class="title" x="{:.2}" y="18" text-anchor="middle" font-size="14">{}</text>"#,
            0.5 * (PLOT_LEFT + PLOT_RIGHT),
            escape(&self.title)
        );
        let _ = writeln!(
            w,
            r##"<rect class="plot-area" x="{PLOT_LEFT}" y="{PLOT_TOP}" width="{}" height="{}" fill="none" stroke="#444"/>"##,
            PLOT_RIGHT - PLOT_LEFT,
            PLOT_BOTTOM - PLOT_TOP
        );

        let mut xs: Vec<f64> = points.iter().map(|p| p.x).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        for v in &xs {
            let px = x.map(*v);
            let _ = writeln!(
                w,
                r##"<line class="x-tick" x1="{px:.2}" y1="{PLOT_BOTTOM}" x2="{px:.2}" y2="{:.2}" stroke="#444"/>"##,
                PLOT_BOTTOM + 5.0
            );
            let _ = writeln!(
                w,
                r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{v}</text>"#,
                PLOT_BOTTOM + 18.0
            );
        }
        for k in 0..=4 {
            let v = y.lo + (y.hi - y.lo) * k as f64 / 4.0;
            let py = y.map(v);
            let _ = writeln!(
                w,
                r##"<line class="y-tick" x1="{:.2}" y1="{py:.2}" x2="{PLOT_LEFT}" y2="{py:.2}" stroke="#444"/>"##,
                PLOT_LEFT - 5.0
            );
            let _ = writeln!(
                w,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{v:.3}</text>"#,
                PLOT_LEFT - 8.0,
                py + 4.0
            );
            if y.hi - y.lo <= 0.0 {
                break;
            }
        }
        let _ = writeln!(
            w,
            r#"<text class="x-label" x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            0.5 * (PLOT_LEFT + PLOT_RIGHT),
            CANVAS_HEIGHT - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            w,
            r#"<text class="y-label" x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
            0.5 * (PLOT_TOP + PLOT_BOTTOM),
            0.5 * (PLOT_TOP + PLOT_BOTTOM),
            escape(&self.y_label)
        );

        for (i, series) in self.series.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            let label = escape(&series.label);
            let coords: Vec<String> = series
                .points
                .iter()
                .map(|p| format!("{:.2},{:.2}", x.map(p.x), y.map(p.y)))
                .collect();
            let _ = writeln!(
                w,
                r#"<polyline class="series" data-label="{label}" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                coords.join(" ")
            );
            for p in &series.points {
                let (px, py) = (x.map(p.x), y.map(p.y));
                if p.err > 0.0 {
                    let _ = writeln!(
                        w,
                        r#"<line class="error-bar" x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="{color}"/>"#,
                        y.map(p.y - p.err),
                        y.map(p.y + p.err)
                    );
                }
                let _ = writeln!(
                    w,
                    r#"<circle class="point" cx="{px:.2}" cy="{py:.2}" r="3" fill="{color}"/>"#
                );
            }
            if let Some(best) = series.best.and_then(|b| series.points.iter().find(|p| p.x == b)) {
                let _ = writeln!(
                    w,
                    r#"<circle class="best" data-label="{label}" cx="{:.2}" cy="{:.2}" r="7" fill="none" stroke="{color}" stroke-width="2"/>"#,
                    x.map(best.x),
                    y.map(best.y)
                );
            }
            let ly = PLOT_TOP + 16.0 + 16.0 * i as f64;
            let _ = writeln!(
                w,
                r#"<text class="legend" x="{:.2}" y="{ly:.2}" text-anchor="end" fill="{color}">{label}</text>"#,
                PLOT_RIGHT - 8.0
            );
        }
        s.push_str("</svg>\n");
        Ok(s)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = self.render()?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// ADE mean ± std against frequency, one series per width, best frequency
/// circled.
pub fn response_chart(responses: &[(usize, FrequencyResponse)]) -> Chart {
    Chart {
        title: "Validation ADE vs training frequency".into(),
        x_label: "training frequency (Hz)".into(),
        y_label: "ADE (m)".into(),
        series: responses
            .iter()
            .map(|(width, response)| Series {
                label: format!("W={width}"),
                points: response
                    .entries()
                    .iter()
                    .map(|(f, agg)| SeriesPoint {
                        x: *f,
                        y: agg.ade_mean,
                        err: agg.ade_std,
                    })
                    .collect(),
                best: Some(best_frequency(response).f_star),
            })
            .collect(),
    }
}

/// Best frequency against width.
pub fn fstar_chart(rows: &[(usize, f64)]) -> Chart {
    Chart {
        title: "Best training frequency vs width".into(),
        x_label: "width W".into(),
        y_label: "f* (Hz)".into(),
        series: vec![Series {
            label: "f*".into(),
            points: rows
                .iter()
                .map(|&(w, f)| SeriesPoint {
                    x: w as f64,
                    y: f,
                    err: 0.0,
                })
                .collect(),
            best: None,
        }],
    }
}
