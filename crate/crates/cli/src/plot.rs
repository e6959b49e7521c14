//! Static SVG report of one run directory.

use std::fmt::Write as _;

use racestack_core::geometry::project_on_polyline;
use racestack_core::planning::reference::truth_midline;
use racestack_core::{ConeColor, MissionKind, Point, TrackDefinition};
use svg::node::element::{Circle, Group, Line, Path, Rectangle, Text};
use svg::Document;

use crate::metrics::{crossing_times, median};
use crate::output::{DepthRow, SensorRow, TrajectoryRow};

const PANEL_W: f64 = 560.0;
const PANEL_H: f64 = 420.0;
const MARGIN: f64 = 48.0;
/// Upper bound on markers per scatter series.
const MAX_MARKERS: usize = 2000;

pub struct PlotInput<'a> {
    pub mission: MissionKind,
    pub staging_offset: f64,
    pub track: &'a TrackDefinition,
    pub trajectory: &'a [TrajectoryRow],
    pub sensors: &'a [SensorRow],
    pub depth: &'a [DepthRow],
}

fn num(v: f64) -> String {
    let s = format!("{v:.3}");
    // avoid "-0.000"
    if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        "0".into()
    } else {
        s
    }
}

/// Maps data coordinates into one panel.
struct Frame {
    x0: f64,
    y0: f64,
    xmin: f64,
    xmax: f64,
    ymin: f64,
    ymax: f64,
}

impl Frame {
    fn new(col: usize, row: usize, (xmin, xmax): (f64, f64), (ymin, ymax): (f64, f64), equal: bool) -> Self {
        let pad = |a: f64, b: f64| {
            let d = (b - a).abs().max(1e-6);
            (a - 0.05 * d, b + 0.05 * d)
        };
        let (mut xmin, mut xmax) = pad(xmin, xmax);
        let (mut ymin, mut ymax) = pad(ymin, ymax);
        if equal {
            let (w, h) = (PANEL_W - 2.0 * MARGIN, PANEL_H - 2.0 * MARGIN);
            let scale = ((xmax - xmin) / w).max((ymax - ymin) / h);
            let (cx, cy) = (0.5 * (xmin + xmax), 0.5 * (ymin + ymax));
            xmin = cx - 0.5 * w * scale;
            xmax = cx + 0.5 * w * scale;
            ymin = cy - 0.5 * h * scale;
            ymax = cy + 0.5 * h * scale;
        }
        Self {
            x0: col as f64 * PANEL_W,
            y0: row as f64 * PANEL_H,
            xmin,
            xmax,
            ymin,
            ymax,
        }
    }

    fn px(&self, x: f64) -> f64 {
        self.x0 + MARGIN + (x - self.xmin) / (self.xmax - self.xmin) * (PANEL_W - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        self.y0 + PANEL_H - MARGIN - (y - self.ymin) / (self.ymax - self.ymin) * (PANEL_H - 2.0 * MARGIN)
    }

    fn path_data(&self, pts: impl IntoIterator<Item = (f64, f64)>) -> String {
        let mut d = String::new();
        for (i, (x, y)) in pts.into_iter().enumerate() {
            let cmd = if i == 0 { 'M' } else { 'L' };
            let _ = write!(d, "{cmd}{},{} ", num(self.px(x)), num(self.py(y)));
        }
        d.trim_end().to_string()
    }

    fn polyline(&self, pts: impl IntoIterator<Item = (f64, f64)>, class: &str, color: &str) -> Path {
        Path::new()
            .set("class", class)
            .set("d", self.path_data(pts))
            .set("fill", "none")
            .set("stroke", color)
            .set("stroke-width", "1.2")
    }

    fn marker(&self, x: f64, y: f64, r: f64, color: &str) -> Circle {
        Circle::new()
            .set("cx", num(self.px(x)))
            .set("cy", num(self.py(y)))
            .set("r", num(r))
            .set("fill", color)
    }

    fn axes(&self, title: &str, xlabel: &str, ylabel: &str) -> Group {
        let (l, r) = (self.x0 + MARGIN, self.x0 + PANEL_W - MARGIN);
        let (t, b) = (self.y0 + MARGIN, self.y0 + PANEL_H - MARGIN);
        let text = |x: f64, y: f64, s: String, anchor: &str| {
            Text::new(s)
                .set("x", num(x))
                .set("y", num(y))
                .set("font-size", "11")
                .set("font-family", "sans-serif")
                .set("text-anchor", anchor)
        };
        let mut g = Group::new().set("class", "axes").add(
            Rectangle::new()
                .set("x", num(l))
                .set("y", num(t))
                .set("width", num(r - l))
                .set("height", num(b - t))
                .set("fill", "none")
                .set("stroke", "#444"),
        );
        g = g.add(text(0.5 * (l + r), t - 14.0, title.into(), "middle").set("font-size", "13"));
        g = g.add(text(0.5 * (l + r), b + 34.0, xlabel.into(), "middle"));
        g = g.add(text(self.x0 + 12.0, 0.5 * (t + b), ylabel.into(), "middle").set(
            "transform",
            format!("rotate(-90 {} {})", num(self.x0 + 12.0), num(0.5 * (t + b))),
        ));
        for i in 0..=4 {
            let f = i as f64 / 4.0;
            let xv = self.xmin + f * (self.xmax - self.xmin);
            let yv = self.ymin + f * (self.ymax - self.ymin);
            g = g.add(text(self.px(xv), b + 16.0, format!("{xv:.2}"), "middle"));
            g = g.add(text(l - 4.0, self.py(yv) + 4.0, format!("{yv:.2}"), "end"));
        }
        g
    }
}

fn bounds(vals: impl IntoIterator<Item = f64>) -> (f64, f64) {
    vals.into_iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
}

fn stride<T>(v: &[T]) -> impl Iterator<Item = &T> {
    v.iter().step_by(v.len().div_ceil(MAX_MARKERS).max(1))
}

fn cone_color(c: ConeColor) -> &'static str {
    match c {
        ConeColor::Blue => "#1f4fd8",
        ConeColor::Yellow => "#e0b000",
        _ => "#f07000",
    }
}

/// Row indices where a new lap begins, from forward start-line crossings
/// of the true trajectory. The approach is part of the first lap and the
/// run-out part of the last.
pub fn lap_starts(track: &TrackDefinition, mission: MissionKind, rows: &[TrajectoryRow]) -> Vec<usize> {
    let mut starts = vec![0];
    if mission != MissionKind::Trackdrive {
        return starts;
    }
    let (l, r) = track.start_line;
    let times = crossing_times(rows, track.cone(l).position, track.cone(r).position, &track.direction_hint);
    // the first crossing starts lap 1, the last one ends the final lap
    if times.len() > 2 {
        for t in &times[1..times.len() - 1] {
            starts.push(rows.partition_point(|row| row.t < *t));
        }
    }
    starts
}

fn track_panel(input: &PlotInput) -> Group {
    let rows = input.trajectory;
    let xs = bounds(input.track.cones.iter().map(|c| c.position.x).chain(rows.iter().map(|r| r.truth_x)));
    let ys = bounds(input.track.cones.iter().map(|c| c.position.y).chain(rows.iter().map(|r| r.truth_y)));
    let f = Frame::new(0, 0, xs, ys, true);
    let mut g = Group::new()
        .set("id", "track")
        .add(f.axes("Track and trajectory", "x [m]", "y [m]"));
    for c in &input.track.cones {
        g = g.add(f.marker(c.position.x, c.position.y, 2.5, cone_color(c.color)));
    }
    let starts = lap_starts(input.track, input.mission, rows);
    let palette = ["#d62728", "#2ca02c", "#9467bd", "#8c564b", "#17becf"];
    for (i, &s) in starts.iter().enumerate() {
        let e = starts.get(i + 1).copied().unwrap_or(rows.len());
        // share the boundary sample so laps join up
        let e = (e + 1).min(rows.len());
        let pts = rows[s..e].iter().map(|r| (r.truth_x, r.truth_y));
        g = g.add(f.polyline(pts, "lap", palette[i % palette.len()]).set("data-lap", (i + 1).to_string()));
    }
    g
}

fn receiver_panel(input: &PlotInput) -> Group {
    let gnss: Vec<(f64, f64)> = input
        .sensors
        .iter()
        .filter(|s| s.gnss_valid == 1)
        .map(|s| (s.gnss_x - s.truth_x, s.gnss_y - s.truth_y))
        .collect();
    let rtk: Vec<(f64, f64)> = input
        .sensors
        .iter()
        .filter(|s| s.rtk_valid == 1)
        .map(|s| (s.rtk_x - s.truth_x, s.rtk_y - s.truth_y))
        .collect();
    let lim = bounds(gnss.iter().chain(&rtk).flat_map(|e| [e.0.abs(), e.1.abs()])).1.max(0.01);
    let f = Frame::new(1, 0, (-lim, lim), (-lim, lim), true);
    let g = Group::new()
        .set("id", "receivers")
        .add(f.axes("GNSS (red) vs RTK (blue) error", "east error [m]", "north error [m]"));
    let mut red = Group::new().set("class", "gnss");
    for e in stride(&gnss) {
        red = red.add(f.marker(e.0, e.1, 1.5, "#d62728").set("fill-opacity", "0.5"));
    }
    let mut blue = Group::new().set("class", "rtk");
    for e in stride(&rtk) {
        blue = blue.add(f.marker(e.0, e.1, 1.5, "#1f4fd8").set("fill-opacity", "0.7"));
    }
    g.add(red).add(blue)
}

fn cross_track_panel(input: &PlotInput) -> Group {
    let (mid, closed) = truth_midline(input.track, input.mission, input.staging_offset);
    let mut s = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    let mut curve = Vec::new();
    for r in input.trajectory {
        if let Some((x, y)) = prev {
            s += (r.truth_x - x).hypot(r.truth_y - y);
        }
        prev = Some((r.truth_x, r.truth_y));
        if r.status.as_str() != "driving" || mid.len() < 2 {
            continue;
        }
        if let Some(p) = project_on_polyline(&Point::new(r.truth_x, r.truth_y), &mid, closed) {
            curve.push((s, p.distance));
        }
    }
    let f = Frame::new(0, 1, (0.0, s.max(1.0)), (0.0, bounds(curve.iter().map(|c| c.1)).1.max(0.1)), false);
    Group::new()
        .set("id", "cross-track")
        .add(f.axes("Cross-track error", "distance travelled [m]", "error [m]"))
        .add(f.polyline(curve, "cross-track", "#333"))
}

fn depth_panel(input: &PlotInput) -> Group {
    let errs: Vec<(f64, f64)> = input.depth.iter().map(|d| (d.true_depth, d.depth - d.true_depth)).collect();
    let xs = bounds(errs.iter().map(|e| e.0));
    let xs = if xs.0.is_finite() { xs } else { (0.0, 1.0) };
    let ys = bounds(errs.iter().map(|e| e.1));
    let ys = if ys.0.is_finite() { ys } else { (-1.0, 1.0) };
    let f = Frame::new(1, 1, (xs.0.min(0.0), xs.1), ys, false);
    let mut g = Group::new()
        .set("id", "depth")
        .add(f.axes("Depth error", "true depth [m]", "measured - true [m]"));
    let mut dots = Group::new().set("class", "depth-samples");
    for e in stride(&errs) {
        dots = dots.add(f.marker(e.0, e.1, 1.2, "#7f7f7f").set("fill-opacity", "0.4"));
    }
    g = g.add(dots);
    // per-meter medians of the signed error
    let mut curve = Vec::new();
    let top = xs.1.ceil() as i64;
    for b in 0..top.max(0) {
        let bin: Vec<f64> = errs
            .iter()
            .filter(|e| e.0 >= b as f64 && e.0 < (b + 1) as f64)
            .map(|e| e.1)
            .collect();
        if bin.len() >= 5 {
            curve.push((b as f64 + 0.5, median(&bin)));
        }
    }
    g = g.add(f.polyline(curve, "depth-median", "#000").set("stroke-width", "2"));
    let zero = Line::new()
        .set("x1", num(f.px(f.xmin)))
        .set("x2", num(f.px(f.xmax)))
        .set("y1", num(f.py(0.0)))
        .set("y2", num(f.py(0.0)))
        .set("stroke", "#999")
        .set("stroke-dasharray", "4 3");
    g.add(zero)
}

/// The four-panel report as an SVG string.
pub fn render(input: &PlotInput) -> String {
    let doc = Document::new()
        .set("viewBox", format!("0 0 {} {}", 2.0 * PANEL_W, 2.0 * PANEL_H))
        .set("width", 2.0 * PANEL_W)
        .set("height", 2.0 * PANEL_H)
        .add(
            Rectangle::new()
                .set("width", "100%")
                .set("height", "100%")
                .set("fill", "white"),
        )
        .add(track_panel(input))
        .add(receiver_panel(input))
        .add(cross_track_panel(input))
        .add(depth_panel(input));
    format!("{doc}\n")
}
