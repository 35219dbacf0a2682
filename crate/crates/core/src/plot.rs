//! SVG drawings of planar environments and simulated runs.

use std::fmt::Write as _;

use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::simulator::TrajectoryLog;
use crate::trajectory::eval;

const WIDTH: f64 = 800.0;
const PAD: f64 = 20.0;
const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#bcbd22",
    "#17becf", "#7f7f7f",
];
const SEGMENT_SAMPLES: usize = 64;

/// A planar agent path and the cell it started in.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotTrace {
    pub points: Vec<[f64; 2]>,
    pub initial_cell: String,
}

impl PlotTrace {
    pub fn from_log(log: &TrajectoryLog) -> Result<Self> {
        if log.records[0].x.len() != 2 {
            return Err(Error::Dimension("only planar runs can be plotted".into()));
        }
        Ok(Self {
            points: log.records.iter().map(|r| [r.x[0], r.x[1]]).collect(),
            initial_cell: log.cell_ids[log.initial_cell()].clone(),
        })
    }

    /// Read the `x1`, `x2` and `cell` columns of a simulator CSV.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header: Vec<&str> = lines
            .next()
            .ok_or_else(|| Error::schema("csv", "empty file"))?
            .split(',')
            .collect();
        let col = |name: &str| {
            header
                .iter()
                .position(|h| *h == name)
                .ok_or_else(|| Error::schema("csv header", format!("missing column {name}")))
        };
        let (ix, iy, ic) = (col("x1")?, col("x2")?, col("cell")?);
        let mut points = Vec::new();
        let mut initial_cell = None;
        for (n, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            let num = |i: usize| -> Result<f64> {
                fields
                    .get(i)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::schema(format!("csv row {}", n + 1), "malformed number"))
            };
            points.push([num(ix)?, num(iy)?]);
            if initial_cell.is_none() {
                initial_cell = fields.get(ic).map(|s| s.to_string());
            }
        }
        Ok(Self {
            points,
            initial_cell: initial_cell.ok_or_else(|| Error::schema("csv", "no rows"))?,
        })
    }
}

struct Frame {
    lo: [f64; 2],
    scale: f64,
    height: f64,
}

impl Frame {
    fn map(&self, p: [f64; 2]) -> (f64, f64) {
        (
            PAD + (p[0] - self.lo[0]) * self.scale,
            self.height - PAD - (p[1] - self.lo[1]) * self.scale,
        )
    }
}

fn color(index: usize) -> &'static str {
    PALETTE[index % PALETTE.len()]
}

/// Cells as outlined polygons, reference segments in gray, traces colored by
/// their initial cell, control points as dots and starts as asterisks.
pub fn render_svg(env: &Environment, traces: &[PlotTrace]) -> Result<String> {
    if env.dimension() != 2 {
        return Err(Error::Dimension("only planar environments can be plotted".into()));
    }
    let polygons: Vec<Vec<[f64; 2]>> = env
        .cells()
        .iter()
        .map(|c| c.polytope.vertices_2d())
        .collect::<Result<_>>()?;
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    let all = polygons
        .iter()
        .flatten()
        .chain(traces.iter().flat_map(|t| t.points.iter()));
    for p in all {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let scale = (WIDTH - 2.0 * PAD) / (hi[0] - lo[0]).max(1e-9);
    let height = 2.0 * PAD + (hi[1] - lo[1]) * scale;
    let frame = Frame { lo, scale, height };

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH:.0}" height="{height:.0}" viewBox="0 0 {WIDTH:.0} {height:.0}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);

    let _ = writeln!(s, r#"<g id="cells" fill="none" stroke-width="1.5">"#);
    for (i, (cell, poly)) in env.cells().iter().zip(&polygons).enumerate() {
        let pts: Vec<String> = poly
            .iter()
            .map(|&p| {
                let (x, y) = frame.map(p);
                format!("{x:.3},{y:.3}")
            })
            .collect();
        let _ = writeln!(
            s,
            r#"<polygon id="cell-{}" points="{}" stroke="{}" stroke-opacity="0.8"/>"#,
            cell.id,
            pts.join(" "),
            color(i)
        );
    }
    let _ = writeln!(s, "</g>");

    let _ = writeln!(s, r##"<g id="references" fill="none" stroke="#999999" stroke-width="2">"##);
    for cell in env.cells() {
        let mut d = String::new();
        for k in 0..=SEGMENT_SAMPLES {
            let p = eval(&cell.segment, k as f64 / SEGMENT_SAMPLES as f64, 0)?;
            let (x, y) = frame.map([p[0], p[1]]);
            let _ = write!(d, "{}{x:.3},{y:.3}", if k == 0 { "M" } else { " L" });
        }
        let _ = writeln!(s, r#"<path d="{d}"/>"#);
    }
    let _ = writeln!(s, "</g>");

    let _ = writeln!(s, r#"<g id="runs" fill="none" stroke-width="1.2">"#);
    for trace in traces {
        if trace.points.is_empty() {
            continue;
        }
        let c = color(env.index_of(&trace.initial_cell).unwrap_or(0));
        let mut d = String::new();
        let mut last: Option<(f64, f64)> = None;
        for (k, &p) in trace.points.iter().enumerate() {
            let (x, y) = frame.map(p);
            // Skip points closer than half a pixel to keep files small.
            if let Some((lx, ly)) = last {
                if k + 1 < trace.points.len() && (x - lx).hypot(y - ly) < 0.5 {
                    continue;
                }
            }
            let _ = write!(d, "{}{x:.3},{y:.3}", if last.is_none() { "M" } else { " L" });
            last = Some((x, y));
        }
        let _ = writeln!(s, r#"<path d="{d}" stroke="{c}"/>"#);
    }
    let _ = writeln!(s, "</g>");

    let _ = writeln!(s, r##"<g id="control-points" fill="#333333">"##);
    for cell in env.cells() {
        for i in 0..=cell.segment.degree() {
            let p = cell.segment.point(i);
            let (x, y) = frame.map([p[0], p[1]]);
            let _ = writeln!(s, r#"<circle cx="{x:.3}" cy="{y:.3}" r="2.5"/>"#);
        }
    }
    let _ = writeln!(s, "</g>");

    let _ = writeln!(s, r#"<g id="starts" stroke="black" stroke-width="1.2">"#);
    for trace in traces {
        if let Some(&p) = trace.points.first() {
            let (x, y) = frame.map(p);
            for k in 0..3 {
                let a = std::f64::consts::PI * k as f64 / 3.0;
                let (dx, dy) = (5.0 * a.cos(), 5.0 * a.sin());
                let _ = writeln!(
                    s,
                    r#"<line x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}"/>"#,
                    x - dx,
                    y - dy,
                    x + dx,
                    y + dy
                );
            }
        }
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, "</svg>");
    Ok(s)
}
