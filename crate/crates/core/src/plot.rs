//! Minimal static SVG line plots of a trace.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use crate::sim::SimulationTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Distances,
    Velocities,
    Accelerations,
}

impl PlotKind {
    pub const ALL: [PlotKind; 3] = [
        PlotKind::Distances,
        PlotKind::Velocities,
        PlotKind::Accelerations,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PlotKind::Distances => "distances",
            PlotKind::Velocities => "velocities",
            PlotKind::Accelerations => "accelerations",
        }
    }

    fn axis_label(self) -> &'static str {
        match self {
            PlotKind::Distances => "inter-vehicle distance [m]",
            PlotKind::Velocities => "velocity [m/s]",
            PlotKind::Accelerations => "acceleration [m/s^2]",
        }
    }
}

const WIDTH: f64 = 960.0;
const HEIGHT: f64 = 540.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 30.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

/// Screen coordinates of the plot area.
#[derive(Debug, Clone, Copy)]
pub struct Frame {
    pub t_min: f64,
    pub t_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Frame {
    pub fn px(&self, t: f64) -> f64 {
        LEFT + (t - self.t_min) / (self.t_max - self.t_min) * (WIDTH - LEFT - RIGHT)
    }

    pub fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y_min) / (self.y_max - self.y_min) * (HEIGHT - TOP - BOTTOM)
    }
}

fn nice_step(range: f64) -> f64 {
    let raw = range / 6.0;
    let mag = 10f64.powf(raw.log10().floor());
    let frac = raw / mag;
    let nice = if frac <= 1.0 {
        1.0
    } else if frac <= 2.0 {
        2.0
    } else if frac <= 5.0 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if hi - lo < 1e-12 {
        let pad = lo.abs().max(1.0) * 0.05;
        (lo - pad, hi + pad)
    } else {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

fn series(trace: &SimulationTrace, kind: PlotKind) -> Vec<(String, Vec<f64>)> {
    let n = trace.vehicles();
    let mut out: Vec<(String, Vec<f64>)> = Vec::with_capacity(n + 1);
    match kind {
        PlotKind::Distances => {
            let gaps: Vec<Vec<f64>> = trace.samples.iter().map(|s| s.gaps()).collect();
            for i in 0..n {
                out.push((format!("gap_{}", i + 1), gaps.iter().map(|g| g[i]).collect()));
            }
        }
        PlotKind::Velocities => {
            out.push((
                "v0".into(),
                trace.samples.iter().map(|s| s.leader.velocity).collect(),
            ));
            for i in 0..n {
                out.push((
                    format!("v_{}", i + 1),
                    trace.samples.iter().map(|s| s.state.velocities[i]).collect(),
                ));
            }
        }
        PlotKind::Accelerations => {
            out.push((
                "a0".into(),
                trace.samples.iter().map(|s| s.leader.acceleration).collect(),
            ));
            for i in 0..n {
                out.push((
                    format!("a_{}", i + 1),
                    trace.samples.iter().map(|s| s.accelerations[i]).collect(),
                ));
            }
        }
    }
    out
}

fn colour(i: usize, n: usize) -> String {
    let hue = 240.0 * i as f64 / n.max(1) as f64;
    format!("hsl({hue:.1},70%,45%)")
}

/// Renders one plot. `corridor` draws reference lines at `(d_min, d_max)` on
/// the distance plot.
pub fn render(trace: &SimulationTrace, kind: PlotKind, corridor: Option<(f64, f64)>) -> String {
    let times = trace.times();
    let data = series(trace, kind);
    let (mut lo, mut hi) = data
        .iter()
        .flat_map(|(_, v)| v.iter().copied())
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let corridor = corridor.filter(|_| kind == PlotKind::Distances);
    if let Some((d_min, d_max)) = corridor {
        lo = lo.min(d_min);
        hi = hi.max(d_max);
    }
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    let (y_min, y_max) = padded(lo, hi);
    let t_first = times.first().copied().unwrap_or(0.0);
    let t_last = times.last().copied().unwrap_or(0.0);
    let (t_min, t_max) = if t_last > t_first {
        (t_first, t_last)
    } else {
        (t_first - 0.5, t_first + 0.5)
    };
    let frame = Frame {
        t_min,
        t_max,
        y_min,
        y_max,
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        kind.name()
    );

    // axes and ticks
    let (x0, x1) = (LEFT, WIDTH - RIGHT);
    let (y0, y1) = (HEIGHT - BOTTOM, TOP);
    let _ = writeln!(
        s,
        r#"<path d="M{x0},{y1} L{x0},{y0} L{x1},{y0}" fill="none" stroke="black"/>"#
    );
    let ts = nice_step(t_max - t_min);
    let mut t = (t_min / ts).ceil() * ts;
    while t <= t_max + 1e-9 * ts {
        let px = frame.px(t);
        let _ = writeln!(
            s,
            r#"<line x1="{px:.2}" y1="{y0}" x2="{px:.2}" y2="{}" stroke="black"/><text x="{px:.2}" y="{}" text-anchor="middle">{}</text>"#,
            y0 + 5.0,
            y0 + 20.0,
            fmt_tick(t)
        );
        t += ts;
    }
    let ys = nice_step(y_max - y_min);
    let mut y = (y_min / ys).ceil() * ys;
    while y <= y_max + 1e-9 * ys {
        let py = frame.py(y);
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{py:.2}" x2="{x0}" y2="{py:.2}" stroke="black"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
            x0 - 5.0,
            x0 - 8.0,
            py + 4.0,
            fmt_tick(y)
        );
        y += ys;
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">time [s]</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="20" y="{0}" text-anchor="middle" transform="rotate(-90 20 {0})">{1}</text>"#,
        (y0 + y1) / 2.0,
        kind.axis_label()
    );

    if let Some((d_min, d_max)) = corridor {
        for (name, level) in [("d_min", d_min), ("d_max", d_max)] {
            let py = frame.py(level);
            let _ = writeln!(
                s,
                r#"<line data-ref="{name}" x1="{x0}" y1="{py:.4}" x2="{x1}" y2="{py:.4}" stroke="red" stroke-dasharray="6,4"/>"#
            );
        }
    }

    let count = data.len();
    for (k, (name, values)) in data.iter().enumerate() {
        let stroke = if name == "v0" || name == "a0" {
            "black".to_string()
        } else {
            colour(k, count)
        };
        if values.len() == 1 {
            let _ = writeln!(
                s,
                r#"<circle data-series="{name}" cx="{:.4}" cy="{:.4}" r="3" fill="{stroke}"/>"#,
                frame.px(times[0]),
                frame.py(values[0])
            );
            continue;
        }
        let mut pts = String::with_capacity(values.len() * 20);
        for (t, v) in times.iter().zip(values) {
            if v.is_finite() {
                let _ = write!(pts, "{:.4},{:.4} ", frame.px(*t), frame.py(*v));
            }
        }
        let _ = writeln!(
            s,
            r#"<polyline data-series="{name}" fill="none" stroke="{stroke}" stroke-width="1" points="{}"/>"#,
            pts.trim_end()
        );
    }
    s.push_str("</svg>\n");
    s
}

fn fmt_tick(v: f64) -> String {
    let r = (v * 1e6).round() / 1e6;
    if r == 0.0 {
        "0".into()
    } else {
        format!("{r}")
    }
}

pub fn write_plot(
    trace: &SimulationTrace,
    kind: PlotKind,
    corridor: Option<(f64, f64)>,
    path: impl AsRef<Path>,
) -> io::Result<()> {
    fs::write(path, render(trace, kind, corridor))
}
