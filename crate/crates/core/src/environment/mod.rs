//! Convex cells, their polynomial segments, and the chain that links them.

mod file;
mod polytope;

use std::fmt;

use nalgebra::DVector;

pub use file::{from_json_str, load, save, to_json_string};
pub use polytope::Polytope;

use crate::error::{Error, Result};
use crate::trajectory::{eval, ControlPoints};

/// Containment slack allowed for control points.
pub const CONTAINMENT_TOL: f64 = 1e-9;
/// Distance below which two switching points are the same point.
pub const SWITCH_MATCH_TOL: f64 = 1e-9;
const NORMALIZATION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub id: String,
    pub polytope: Polytope,
    pub segment: ControlPoints,
    pub successor: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    dimension: usize,
    cells: Vec<Cell>,
}

impl Environment {
    pub fn new(dimension: usize, cells: Vec<Cell>) -> Result<Self> {
        for (i, c) in cells.iter().enumerate() {
            if cells[..i].iter().any(|o| o.id == c.id) {
                return Err(Error::schema(format!("cells[{i}].id"), format!("duplicate id {:?}", c.id)));
            }
        }
        Ok(Self { dimension, cells })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn spline_degree(&self) -> usize {
        self.cells.first().map(|c| c.segment.degree()).unwrap_or(0)
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.cells.iter().position(|c| c.id == id)
    }

    pub fn cell(&self, id: &str) -> Option<&Cell> {
        self.cells.iter().find(|c| c.id == id)
    }

    pub fn successor_of(&self, index: usize) -> Option<usize> {
        self.cells[index]
            .successor
            .as_deref()
            .and_then(|s| self.index_of(s))
    }

    /// Cell indices from the head of the chain to its end.
    pub fn chain_order(&self) -> Result<Vec<usize>> {
        let n = self.cells.len();
        let mut has_pred = vec![false; n];
        for c in &self.cells {
            if let Some(s) = &c.successor {
                let j = self
                    .index_of(s)
                    .ok_or_else(|| Error::Domain(format!("cell {} names unknown successor {s}", c.id)))?;
                if has_pred[j] {
                    return Err(Error::Domain(format!("cell {s} has two predecessors")));
                }
                has_pred[j] = true;
            }
        }
        let heads: Vec<usize> = (0..n).filter(|&i| !has_pred[i]).collect();
        if heads.len() != 1 {
            return Err(Error::Domain(format!(
                "expected one chain head, found {}",
                heads.len()
            )));
        }
        let mut order = vec![heads[0]];
        while let Some(next) = self.successor_of(*order.last().unwrap()) {
            if order.contains(&next) {
                return Err(Error::Domain("successor links form a cycle".into()));
            }
            order.push(next);
        }
        if order.len() != n {
            return Err(Error::Domain(format!(
                "chain visits {} of {} cells",
                order.len(),
                n
            )));
        }
        Ok(order)
    }

    /// Index of the first cell in chain order containing `x`.
    pub fn locate(&self, x: &DVector<f64>, tol: f64) -> Result<Option<usize>> {
        let order = self.chain_order().unwrap_or_else(|_| (0..self.cells.len()).collect());
        for i in order {
            if self.cells[i].polytope.contains(x, tol)? {
                return Ok(Some(i));
            }
        }
        Ok(None)
    }

    pub fn validate(&self) -> ValidationReport {
        validate(self)
    }
}

/// Constraint stack of two cells; emptiness is decided by the caller.
pub fn overlap(c1: &Cell, c2: &Cell) -> Result<Polytope> {
    c1.polytope.intersect(&c2.polytope)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Dimension(String),
    RowNotNormalized { face: usize, norm: f64 },
    EmptyInterior { radius: f64 },
    ControlPointOutside { point: usize, excess: f64 },
    UnknownSuccessor { successor: String },
    Chain(String),
    EmptyOverlap { successor: String, radius: f64 },
    SwitchingPointMismatch { successor: String, distance: f64 },
    SwitchingPointOutsideOverlap { successor: String, slack: f64 },
    Geometry(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Dimension(m) => write!(f, "dimension: {m}"),
            Violation::RowNotNormalized { face, norm } => {
                write!(f, "face {face} normal has norm {norm}")
            }
            Violation::EmptyInterior { radius } => {
                write!(f, "cell interior is empty (Chebyshev radius {radius:.3e})")
            }
            Violation::ControlPointOutside { point, excess } => {
                write!(f, "control point {point} lies outside the cell by {excess:.3e}")
            }
            Violation::UnknownSuccessor { successor } => {
                write!(f, "successor {successor} does not exist")
            }
            Violation::Chain(m) => write!(f, "chain: {m}"),
            Violation::EmptyOverlap { successor, radius } => write!(
                f,
                "overlap with successor {successor} has empty interior (Chebyshev radius {radius:.3e})"
            ),
            Violation::SwitchingPointMismatch { successor, distance } => write!(
                f,
                "last control point differs from first control point of {successor} by {distance:.3e}"
            ),
            Violation::SwitchingPointOutsideOverlap { successor, slack } => write!(
                f,
                "switching point is not strictly inside the overlap with {successor} (min slack {slack:.3e})"
            ),
            Violation::Geometry(m) => write!(f, "geometry: {m}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Finding {
    pub cell: String,
    pub violation: Violation,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.findings.is_empty()
    }

    pub fn for_cell<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a Violation> + 'a {
        self.findings
            .iter()
            .filter(move |f| f.cell == id)
            .map(|f| &f.violation)
    }

    fn push(&mut self, cell: &str, violation: Violation) {
        self.findings.push(Finding {
            cell: cell.to_string(),
            violation,
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.findings.is_empty() {
            return writeln!(f, "ok: all cell and chain invariants hold");
        }
        for finding in &self.findings {
            writeln!(f, "cell {}: {}", finding.cell, finding.violation)?;
        }
        Ok(())
    }
}

pub fn validate(env: &Environment) -> ValidationReport {
    let mut report = ValidationReport::default();
    let degree = env.spline_degree();
    for cell in env.cells() {
        let poly = &cell.polytope;
        if poly.dimension() != env.dimension() || cell.segment.dimension() != env.dimension() {
            report.push(
                &cell.id,
                Violation::Dimension(format!(
                    "polytope in {}-D and segment in {}-D, environment is {}-D",
                    poly.dimension(),
                    cell.segment.dimension(),
                    env.dimension()
                )),
            );
            continue;
        }
        if cell.segment.degree() != degree {
            report.push(
                &cell.id,
                Violation::Dimension(format!(
                    "segment degree {} differs from spline degree {degree}",
                    cell.segment.degree()
                )),
            );
        }
        for r in 0..poly.num_faces() {
            let norm = poly.a().row(r).norm();
            if (norm - 1.0).abs() > NORMALIZATION_TOL {
                report.push(&cell.id, Violation::RowNotNormalized { face: r, norm });
            }
        }
        match poly.chebyshev_center() {
            Ok((_, radius)) if radius <= 0.0 => {
                report.push(&cell.id, Violation::EmptyInterior { radius })
            }
            Ok(_) => {}
            Err(e) => report.push(&cell.id, Violation::Geometry(e.to_string())),
        }
        for i in 0..=cell.segment.degree() {
            let excess = (poly.a() * cell.segment.point(i) - poly.b()).max();
            if excess > CONTAINMENT_TOL {
                report.push(&cell.id, Violation::ControlPointOutside { point: i, excess });
            }
        }
        let Some(succ_id) = &cell.successor else { continue };
        let Some(succ) = env.cell(succ_id) else {
            report.push(
                &cell.id,
                Violation::UnknownSuccessor {
                    successor: succ_id.clone(),
                },
            );
            continue;
        };
        if succ.polytope.dimension() != poly.dimension() {
            continue;
        }
        let shared = match overlap(cell, succ) {
            Ok(p) => p,
            Err(e) => {
                report.push(&cell.id, Violation::Geometry(e.to_string()));
                continue;
            }
        };
        match shared.chebyshev_center() {
            Ok((_, radius)) if radius <= 0.0 => report.push(
                &cell.id,
                Violation::EmptyOverlap {
                    successor: succ_id.clone(),
                    radius,
                },
            ),
            Ok(_) => {}
            Err(e) => report.push(&cell.id, Violation::Geometry(e.to_string())),
        }
        let switch_point = cell.segment.last();
        if succ.segment.dimension() == switch_point.len() {
            let distance = (&switch_point - succ.segment.first()).norm();
            if distance > SWITCH_MATCH_TOL {
                report.push(
                    &cell.id,
                    Violation::SwitchingPointMismatch {
                        successor: succ_id.clone(),
                        distance,
                    },
                );
            }
        }
        let slack = shared.slacks(&switch_point).min();
        if slack <= 0.0 {
            report.push(
                &cell.id,
                Violation::SwitchingPointOutsideOverlap {
                    successor: succ_id.clone(),
                    slack,
                },
            );
        }
    }
    if let Err(e) = env.chain_order() {
        let head = env.cells().first().map(|c| c.id.clone()).unwrap_or_default();
        report.push(&head, Violation::Chain(e.to_string()));
    }
    report
}

/// Largest value of `max_i (A p(t) - b)_i` over `samples` evenly spaced parameters.
pub fn max_segment_excess(cell: &Cell, samples: usize) -> Result<f64> {
    let mut worst = f64::NEG_INFINITY;
    for k in 0..samples {
        let t = k as f64 / (samples.max(2) - 1) as f64;
        let p = eval(&cell.segment, t, 0)?;
        worst = worst.max((cell.polytope.a() * p - cell.polytope.b()).max());
    }
    Ok(worst)
}
