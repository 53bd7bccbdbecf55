//! Self-contained deterministic SVG rendering of run cells: trajectory maps
//! for the navigation scenarios (red crosses for inter-robot collisions,
//! blue stars for velocity violations) and center histograms for the
//! corridor.

use anyhow::Result;
use std::fmt::Write as _;

use pcd_core::metrics::MetricRecord;

use crate::runner::{PlotMeta, TrajPoint};

const PALETTE: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];

pub fn render(meta: &PlotMeta, points: &[TrajPoint], records: &[MetricRecord]) -> Result<String> {
    if meta.scenario == "corridor" {
        Ok(render_corridor(meta, points))
    } else {
        Ok(render_nav(meta, points, records))
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.3}")
}

struct Canvas {
    svg: String,
}

impl Canvas {
    fn new(width: u32, height: u32) -> Self {
        let mut svg = String::new();
        let _ = writeln!(
            svg,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">"
        );
        let _ = writeln!(svg, "<rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>");
        Self { svg }
    }

    fn finish(mut self) -> String {
        self.svg.push_str("</svg>\n");
        self.svg
    }
}

fn render_nav(meta: &PlotMeta, points: &[TrajPoint], _records: &[MetricRecord]) -> String {
    let size = 640.0f64;
    let margin = 40.0f64;
    let mut canvas = Canvas::new(size as u32, size as u32);

    // World bounding box from everything we draw.
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    let mut grow = |x: f64, y: f64| {
        lo[0] = lo[0].min(x);
        lo[1] = lo[1].min(y);
        hi[0] = hi[0].max(x);
        hi[1] = hi[1].max(y);
    };
    for p in points {
        grow(p.x, p.y);
    }
    for (cx, cy, r) in &meta.obstacles {
        grow(cx - r, cy - r);
        grow(cx + r, cy + r);
    }
    for (sx, sy, gx, gy) in &meta.endpoints {
        grow(*sx, *sy);
        grow(*gx, *gy);
    }
    if !lo[0].is_finite() {
        lo = [-1.0, -1.0];
        hi = [1.0, 1.0];
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-9);
    let scale = (size - 2.0 * margin) / span;
    let sx = |x: f64| margin + (x - lo[0]) * scale;
    let sy = |y: f64| size - margin - (y - lo[1]) * scale;

    let _ = writeln!(
        canvas.svg,
        "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#999\"/>",
        fmt(margin),
        fmt(margin),
        fmt(size - 2.0 * margin),
        fmt(size - 2.0 * margin)
    );
    for (cx, cy, r) in &meta.obstacles {
        let _ = writeln!(
            canvas.svg,
            "<circle cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"#bbbbbb\" stroke=\"#666\"/>",
            fmt(sx(*cx)),
            fmt(sy(*cy)),
            fmt(r * scale)
        );
    }

    // Group points into (sample, robot) polylines; the dump holds only the
    // first configuration.
    let mut samples: Vec<usize> = points.iter().map(|p| p.sample).collect();
    samples.sort_unstable();
    samples.dedup();
    let robots = points.iter().map(|p| p.robot + 1).max().unwrap_or(0);
    for &sample in &samples {
        for robot in 0..robots {
            let mut path = String::new();
            let mut started = false;
            for p in points.iter().filter(|p| p.sample == sample && p.robot == robot) {
                let cmd = if started { 'L' } else { 'M' };
                let _ = write!(path, "{cmd}{} {} ", fmt(sx(p.x)), fmt(sy(p.y)));
                started = true;
            }
            if started {
                let _ = writeln!(
                    canvas.svg,
                    "<path d=\"{}\" fill=\"none\" stroke=\"{}\" stroke-opacity=\"0.45\" stroke-width=\"1.2\"/>",
                    path.trim_end(),
                    PALETTE[robot % PALETTE.len()]
                );
            }
        }
    }

    // Collision crosses: waypoints of a sample where two robots come within
    // twice the radius.
    for &sample in &samples {
        let per_robot: Vec<Vec<&TrajPoint>> = (0..robots)
            .map(|r| points.iter().filter(|p| p.sample == sample && p.robot == r).collect())
            .collect();
        let steps = per_robot.iter().map(|v| v.len()).min().unwrap_or(0);
        for h in 0..steps {
            for i in 0..robots {
                for j in i + 1..robots {
                    let a = per_robot[i][h];
                    let b = per_robot[j][h];
                    let d = ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt();
                    if d <= 2.0 * meta.robot_radius {
                        cross(&mut canvas.svg, sx((a.x + b.x) / 2.0), sy((a.y + b.y) / 2.0));
                    }
                }
            }
        }
        // Velocity violation stars, measured from each robot's start.
        for (robot, traj) in per_robot.iter().enumerate() {
            if traj.is_empty() {
                continue;
            }
            let limit = meta.v_max * meta.dt * (1.0 + 1e-6);
            let mut prev = meta
                .endpoints
                .get(robot)
                .map(|(sx0, sy0, _, _)| [*sx0, *sy0])
                .unwrap_or([traj[0].x, traj[0].y]);
            for p in traj {
                let d = ((p.x - prev[0]).powi(2) + (p.y - prev[1]).powi(2)).sqrt();
                if d > limit {
                    star(&mut canvas.svg, sx(p.x), sy(p.y));
                }
                prev = [p.x, p.y];
            }
        }
    }

    for (i, (sx0, sy0, gx, gy)) in meta.endpoints.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            canvas.svg,
            "<circle cx=\"{}\" cy=\"{}\" r=\"5\" fill=\"#2ca02c\" stroke=\"{color}\"/>",
            fmt(sx(*sx0)),
            fmt(sy(*sy0))
        );
        let _ = writeln!(
            canvas.svg,
            "<circle cx=\"{}\" cy=\"{}\" r=\"5\" fill=\"#9467bd\" stroke=\"{color}\"/>",
            fmt(sx(*gx)),
            fmt(sy(*gy))
        );
    }
    canvas.finish()
}

fn cross(svg: &mut String, x: f64, y: f64) {
    let r = 5.0;
    let _ = writeln!(
        svg,
        "<path d=\"M{} {} L{} {} M{} {} L{} {}\" stroke=\"#d62728\" stroke-width=\"2\"/>",
        fmt(x - r),
        fmt(y - r),
        fmt(x + r),
        fmt(y + r),
        fmt(x - r),
        fmt(y + r),
        fmt(x + r),
        fmt(y - r)
    );
}

fn star(svg: &mut String, x: f64, y: f64) {
    let r = 6.0;
    let mut d = String::new();
    for k in 0..10 {
        let angle = std::f64::consts::PI * (k as f64) / 5.0 - std::f64::consts::FRAC_PI_2;
        let radius = if k % 2 == 0 { r } else { r * 0.45 };
        let cmd = if k == 0 { 'M' } else { 'L' };
        let _ = write!(d, "{cmd}{} {} ", fmt(x + radius * angle.cos()), fmt(y + radius * angle.sin()));
    }
    let _ = writeln!(svg, "<path d=\"{}Z\" fill=\"#1f77b4\"/>", d.trim_end());
}

fn render_corridor(meta: &PlotMeta, points: &[TrajPoint]) -> String {
    let width = 640.0f64;
    let height = 420.0f64;
    let margin = 50.0f64;
    let mut canvas = Canvas::new(width as u32, height as u32);
    let corridor = meta.corridor_length.max(1e-9);
    let sx = |x: f64| margin + x / corridor * (width - 2.0 * margin);
    let mid = height / 2.0;

    // Corridor axis and feasible intervals.
    let _ = writeln!(
        canvas.svg,
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#d62728\" stroke-width=\"2\"/>",
        fmt(sx(0.0)),
        fmt(mid),
        fmt(sx(corridor)),
        fmt(mid)
    );
    for (i, (lo, hi)) in meta.corridor_boxes.iter().enumerate() {
        let y = if i == 0 { mid - 12.0 } else { mid + 4.0 };
        let _ = writeln!(
            canvas.svg,
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"8\" fill=\"{}\" fill-opacity=\"0.25\"/>",
            fmt(sx(*lo)),
            fmt(y),
            fmt(sx(*hi) - sx(*lo)),
            PALETTE[i % PALETTE.len()]
        );
    }

    // Histograms of block centers: block 0 above the axis, block 1 mirrored
    // below.
    let bins = 48usize;
    for robot in 0..2usize {
        let values: Vec<f64> =
            points.iter().filter(|p| p.robot == robot).map(|p| p.x).collect();
        if values.is_empty() {
            continue;
        }
        let mut counts = vec![0usize; bins];
        for v in &values {
            let b = (((v / corridor) * bins as f64) as usize).min(bins - 1);
            counts[b] += 1;
        }
        let peak = *counts.iter().max().unwrap_or(&1) as f64;
        let max_bar = mid - margin - 20.0;
        for (b, &count) in counts.iter().enumerate() {
            if count == 0 {
                continue;
            }
            let x0 = sx(b as f64 / bins as f64 * corridor);
            let x1 = sx((b + 1) as f64 / bins as f64 * corridor);
            let bar = count as f64 / peak * max_bar;
            let (y, h) = if robot == 0 { (mid - 14.0 - bar, bar) } else { (mid + 14.0, bar) };
            let _ = writeln!(
                canvas.svg,
                "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\" fill-opacity=\"0.7\"/>",
                fmt(x0),
                fmt(y),
                fmt((x1 - x0).max(0.5)),
                fmt(h),
                PALETTE[robot]
            );
        }
    }
    canvas.finish()
}
