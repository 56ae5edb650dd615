//! Minimal SVG charts: line and dot series on linear or log axes.
//!
//! Output is a pure function of the chart description, so plots compare
//! byte-for-byte across runs.

use std::fmt::Write;

use crate::output::fmt_num;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 450.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 44.0;
const BOTTOM: f64 = 56.0;

#[derive(Debug, Clone)]
pub struct Axis {
    pub label: String,
    pub log: bool,
}

impl Axis {
    pub fn linear(label: &str) -> Self {
        Self {
            label: label.into(),
            log: false,
        }
    }

    pub fn log(label: &str) -> Self {
        Self {
            label: label.into(),
            log: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mark {
    Line,
    DashedLine,
    Dots,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub mark: Mark,
    pub color: &'static str,
}

#[derive(Debug, Clone)]
pub struct Note {
    pub x: f64,
    pub y: f64,
    pub text: String,
}

#[derive(Debug, Clone)]
pub struct Chart {
    pub title: String,
    pub x: Axis,
    pub y: Axis,
    pub series: Vec<Series>,
    pub notes: Vec<Note>,
}

pub const PALETTE: [&str; 4] = ["#1f5fa8", "#c2452d", "#2e8b57", "#8a5ab5"];

struct Scale {
    lo: f64,
    hi: f64,
    log: bool,
    ticks: Vec<f64>,
}

impl Scale {
    fn new(values: impl Iterator<Item = f64>, log: bool) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| v.is_finite() && (!log || *v > 0.0)) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if lo > hi {
            (lo, hi) = if log { (1.0, 10.0) } else { (0.0, 1.0) };
        }
        if log {
            let (a, b) = (lo.log10().floor(), hi.log10().ceil().max(lo.log10().floor() + 1.0));
            let ticks = (a as i32..=b as i32).map(|k| 10f64.powi(k)).collect();
            Self {
                lo: 10f64.powf(a),
                hi: 10f64.powf(b),
                log,
                ticks,
            }
        } else {
            if lo == hi {
                let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
                lo -= pad;
                hi += pad;
            }
            let step = nice_step((hi - lo) / 6.0);
            let (a, b) = ((lo / step).floor(), (hi / step).ceil());
            let ticks = (a as i64..=b as i64).map(|k| k as f64 * step).collect();
            Self {
                lo: a * step,
                hi: b * step,
                log,
                ticks,
            }
        }
    }

    /// Fraction of the axis span, 0 at `lo` and 1 at `hi`.
    fn frac(&self, v: f64) -> f64 {
        if self.log {
            (v.log10() - self.lo.log10()) / (self.hi.log10() - self.lo.log10())
        } else {
            (v - self.lo) / (self.hi - self.lo)
        }
    }

    fn admits(&self, v: f64) -> bool {
        v.is_finite() && (!self.log || v > 0.0)
    }
}

fn nice_step(raw: f64) -> f64 {
    let mag = 10f64.powf(raw.log10().floor());
    let f = raw / mag;
    let nice = if f <= 1.0 {
        1.0
    } else if f <= 2.0 {
        2.0
    } else if f <= 5.0 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

fn tick_label(v: f64, log: bool) -> String {
    if log {
        let k = v.log10().round() as i32;
        if (-3..=6).contains(&k) {
            fmt_num(v)
        } else {
            format!("1e{k}")
        }
    } else {
        fmt_num(v)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

impl Chart {
    pub fn render(&self) -> String {
        let xs = Scale::new(self.series.iter().flat_map(|s| s.points.iter().map(|p| p.0)), self.x.log);
        let ys = Scale::new(self.series.iter().flat_map(|s| s.points.iter().map(|p| p.1)), self.y.log);
        let (pw, ph) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
        let px = |x: f64| LEFT + xs.frac(x) * pw;
        let py = |y: f64| TOP + (1.0 - ys.frac(y)) * ph;

        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );

        // grid and ticks
        for &t in &xs.ticks {
            let x = px(t);
            let _ = writeln!(
                out,
                r##"<line x1="{x:.2}" y1="{TOP:.2}" x2="{x:.2}" y2="{:.2}" stroke="#e4e4e4"/>"##,
                TOP + ph
            );
            let _ = writeln!(
                out,
                r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                TOP + ph + 16.0,
                tick_label(t, xs.log)
            );
        }
        for &t in &ys.ticks {
            let y = py(t);
            let _ = writeln!(
                out,
                r##"<line x1="{LEFT:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#e4e4e4"/>"##,
                LEFT + pw
            );
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
                LEFT - 6.0,
                y + 4.0,
                tick_label(t, ys.log)
            );
        }
        let _ = writeln!(
            out,
            r#"<rect x="{LEFT:.2}" y="{TOP:.2}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            LEFT + pw / 2.0,
            HEIGHT - 14.0,
            escape(&self.x.label)
        );
        let _ = writeln!(
            out,
            r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
            TOP + ph / 2.0,
            TOP + ph / 2.0,
            escape(&self.y.label)
        );

        for s in &self.series {
            let pts: Vec<(f64, f64)> = s.points.iter().copied().filter(|(x, y)| xs.admits(*x) && ys.admits(*y)).collect();
            match s.mark {
                Mark::Line | Mark::DashedLine => {
                    if pts.is_empty() {
                        continue;
                    }
                    let path: Vec<String> = pts.iter().map(|(x, y)| format!("{:.2},{:.2}", px(*x), py(*y))).collect();
                    let dash = if s.mark == Mark::DashedLine {
                        r#" stroke-dasharray="6 4""#
                    } else {
                        ""
                    };
                    let _ = writeln!(
                        out,
                        r#"<polyline fill="none" stroke="{}" stroke-width="1.8"{dash} points="{}"/>"#,
                        s.color,
                        path.join(" ")
                    );
                }
                Mark::Dots => {
                    let _ = writeln!(out, r#"<g fill="{}">"#, s.color);
                    for (x, y) in &pts {
                        let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="2.2"/>"#, px(*x), py(*y));
                    }
                    let _ = writeln!(out, "</g>");
                }
            }
        }

        for n in &self.notes {
            if !(xs.admits(n.x) && ys.admits(n.y)) {
                continue;
            }
            let (x, y) = (px(n.x), py(n.y));
            let _ = writeln!(
                out,
                r#"<circle cx="{x:.2}" cy="{y:.2}" r="5" fill="none" stroke="black" stroke-width="1.5"/>"#
            );
            let anchor = if x > LEFT + 0.7 * pw { "end" } else { "start" };
            let dx = if anchor == "end" { -8.0 } else { 8.0 };
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="{anchor}">{}</text>"#,
                x + dx,
                y - 8.0,
                escape(&n.text)
            );
        }

        // legend
        for (i, s) in self.series.iter().enumerate() {
            let y = TOP + 16.0 + 16.0 * i as f64;
            let x = LEFT + 12.0;
            match s.mark {
                Mark::Dots => {
                    let _ = writeln!(
                        out,
                        r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{}"/>"#,
                        x + 10.0,
                        y - 4.0,
                        s.color
                    );
                }
                Mark::Line | Mark::DashedLine => {
                    let dash = if s.mark == Mark::DashedLine {
                        r#" stroke-dasharray="6 4""#
                    } else {
                        ""
                    };
                    let _ = writeln!(
                        out,
                        r#"<line x1="{x:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{}" stroke-width="1.8"{dash}/>"#,
                        y - 4.0,
                        x + 20.0,
                        y - 4.0,
                        s.color
                    );
                }
            }
            let _ = writeln!(out, r#"<text x="{:.2}" y="{y:.2}">{}</text>"#, x + 26.0, escape(&s.label));
        }
        out.push_str("</svg>\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chart(log: bool) -> Chart {
        Chart {
            title: "a < b".into(),
            x: Axis { label: "x".into(), log },
            y: Axis { label: "y".into(), log },
            series: vec![Series {
                label: "s".into(),
                points: vec![(1.0, 1.0), (10.0, 0.5), (1000.0, 0.01)],
                mark: Mark::Line,
                color: PALETTE[0],
            }],
            notes: vec![Note {
                x: 10.0,
                y: 0.5,
                text: "mid".into(),
            }],
        }
    }

    #[test]
    fn rendering_is_deterministic_and_escaped() {
        let a = chart(false).render();
        assert_eq!(a, chart(false).render());
        assert!(a.contains("a &lt; b"));
        assert!(a.starts_with("<svg") && a.ends_with("</svg>\n"));
    }

    #[test]
    fn log_axes_use_decades() {
        let svg = chart(true).render();
        for label in [">1<", ">10<", ">100<", ">1000<", ">0.01<"] {
            assert!(svg.contains(label), "missing tick {label}");
        }
    }

    #[test]
    fn nice_steps() {
        assert_eq!(nice_step(0.7), 1.0);
        assert_eq!(nice_step(13.0), 20.0);
        assert_eq!(nice_step(44.0), 50.0);
        assert!((nice_step(0.0031) - 0.005).abs() < 1e-15);
    }

    #[test]
    fn empty_chart_still_renders() {
        let c = Chart {
            title: String::new(),
            x: Axis::linear("x"),
            y: Axis::log("y"),
            series: vec![],
            notes: vec![],
        };
        assert!(c.render().contains("</svg>"));
    }
}
