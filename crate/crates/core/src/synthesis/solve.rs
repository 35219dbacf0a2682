use nalgebra::DMatrix;

use super::barrier::{face_safety_constraint, safety_constraints, GainVariables};
use super::combined::{build_combined, relative_degree_ok, CombinedSystem};
use super::verify::{verify, SynthesisCertificate};
use super::{AgentSystem, GainMatrix, RateMode, SynthesisConfig};
use crate::conic::{ConicProgram, LinExpr, LinMatrix, SolveStatus};
use crate::environment::{Cell, Polytope};
use crate::error::{Error, Result};
use crate::trajectory::{
    build_reference, coeffs_from_control_points, hull_bounds, ControlPoints, HullBounds,
    PolynomialCoeffs,
};

/// Coefficients below this are treated as exact zeros when assembling rows.
const DROP_TOL: f64 = 1e-12;

struct Program {
    prog: ConicProgram,
    gain: GainVariables,
    mu: usize,
}

/// The convergence condition `S <= 2 mu M` (or `S <= mu I`) is posed on the
/// error coordinates. With `F = Q + B_c K C_c`, `L = E F E^+` and `N` a basis
/// of `ker E`, it is equivalent to `E F N = 0` together with the small LMI
/// `L + L^T <= 2 mu I`; in paper mode `mu` is forced to zero.
fn build_program(
    cs: &CombinedSystem,
    agent: &AgentSystem,
    safety: Option<(&Polytope, &HullBounds)>,
    config: &SynthesisConfig,
) -> Result<Program> {
    build_program_faces(cs, agent, safety, None, config)
}

/// As [`build_program`], keeping only face `only` of the cell when given.
fn build_program_faces(
    cs: &CombinedSystem,
    agent: &AgentSystem,
    safety: Option<(&Polytope, &HullBounds)>,
    only: Option<usize>,
    config: &SynthesisConfig,
) -> Result<Program> {
    let mut prog = ConicProgram::new(0);
    let gain = GainVariables {
        start: prog.add_vars(cs.inputs * cs.gain_cols()),
        rows: cs.inputs,
        cols: cs.gain_cols(),
    };
    let mu = prog.add_vars(1);

    for r in 0..gain.rows {
        for c in 0..gain.cols {
            let idx = gain.index(r, c);
            let mut upper = LinExpr::constant(-config.k_max);
            upper.add_term(idx, 1.0);
            prog.add_le(upper);
            let mut lower = LinExpr::constant(-config.k_max);
            lower.add_term(idx, -1.0);
            prog.add_le(lower);
        }
    }
    match config.mode {
        RateMode::Exponential => {
            prog.add_le(LinExpr::var(mu));
            prog.set_objective(mu, 1.0);
        }
        RateMode::Paper => prog.add_eq(LinExpr::var(mu)),
    }

    let kernel = cs.e_kernel();
    let pinv = cs.e_pinv();
    let dy = cs.outputs;
    // E B_c[:, r] and C_c[c, :] times N or E^+.
    let eb = &cs.e * &cs.bc;
    let cn = &cs.cc * &kernel;
    let cp = &cs.cc * &pinv;
    let g0 = &cs.e * &cs.q * &kernel;
    let l0 = &cs.e * &cs.q * &pinv;

    for i in 0..dy {
        for j in 0..kernel.ncols() {
            let mut e = LinExpr::constant(clean(g0[(i, j)]));
            for r in 0..gain.rows {
                for c in 0..gain.cols {
                    e.add_term(gain.index(r, c), clean(eb[(i, r)] * cn[(c, j)]));
                }
            }
            if !e.terms.is_empty() || e.constant != 0.0 {
                prog.add_eq(e);
            }
        }
    }

    let mut lmi = LinMatrix::zeros(dy);
    for i in 0..dy {
        for j in 0..dy {
            let entry = lmi.entry_mut(i, j);
            entry.add_constant(clean(l0[(i, j)] + l0[(j, i)]));
            for r in 0..gain.rows {
                for c in 0..gain.cols {
                    let coeff = eb[(i, r)] * cp[(c, j)] + eb[(j, r)] * cp[(c, i)];
                    entry.add_term(gain.index(r, c), clean(coeff));
                }
            }
            if i == j {
                entry.add_term(mu, -2.0);
            }
        }
    }
    prog.add_nsd(lmi);

    if let Some((polytope, hull)) = safety {
        match only {
            None => {
                safety_constraints(&mut prog, gain, polytope, agent, hull, config)?;
            }
            Some(face) => {
                face_safety_constraint(&mut prog, gain, polytope, face, agent, hull, config)?;
            }
        }
    }
    Ok(Program { prog, gain, mu })
}

fn clean(v: f64) -> f64 {
    if v.abs() < DROP_TOL {
        0.0
    } else {
        v
    }
}

fn prepare(
    agent: &AgentSystem,
    segment: &ControlPoints,
    config: &SynthesisConfig,
) -> Result<CombinedSystem> {
    config.check()?;
    let reference = build_reference(&coeffs_from_control_points(segment));
    let cs = build_combined(agent, &reference.time_scaled(config.time_scale))?;
    if !relative_degree_ok(&cs) {
        return Err(Error::RelativeDegree);
    }
    Ok(cs)
}

/// Solve the per-cell program and certify the result.
pub fn synthesize(
    cell: &Cell,
    agent: &AgentSystem,
    config: &SynthesisConfig,
) -> Result<(GainMatrix, SynthesisCertificate)> {
    let cs = prepare(agent, &cell.segment, config)?;
    let hull = hull_bounds(&cell.segment);
    let program = build_program(&cs, agent, Some((&cell.polytope, &hull)), config)?;
    let sol = program.prog.solve(config.tolerances)?;
    match sol.status {
        SolveStatus::Optimal | SolveStatus::AlmostOptimal => {}
        SolveStatus::Infeasible => {
            return Err(Error::Infeasible {
                cell: cell.id.clone(),
                diagnosis: diagnose(&cs, cell, agent, &hull, config),
            })
        }
        other => {
            return Err(Error::Solver(format!(
                "cell {}: solver ended with status {other} ({})",
                cell.id, sol.detail
            )))
        }
    }
    let gain = GainMatrix::new(program.gain.extract(&sol.x), cs.outputs)?;
    let mut cert = verify(cell, agent, &gain, config)?;
    cert.solver_status = Some(sol.status.to_string());
    cert.solver_mu = Some(sol.x[program.mu]);
    Ok((gain, cert))
}

/// Explain an infeasible cell: either the convergence constraints alone
/// fail, or name the first face whose barrier condition cannot be met
/// together with them.
fn diagnose(
    cs: &CombinedSystem,
    cell: &Cell,
    agent: &AgentSystem,
    hull: &HullBounds,
    config: &SynthesisConfig,
) -> String {
    if let Ok(program) = build_program(cs, agent, None, config) {
        if let Ok(sol) = program.prog.solve(config.tolerances) {
            if sol.status == SolveStatus::Infeasible {
                return format!("convergence LMI has no solution with |K| <= {}", config.k_max);
            }
        }
    }
    for face in 0..cell.polytope.num_faces() {
        let Ok(program) =
            build_program_faces(cs, agent, Some((&cell.polytope, hull)), Some(face), config)
        else {
            continue;
        };
        if let Ok(sol) = program.prog.solve(config.tolerances) {
            if sol.status == SolveStatus::Infeasible {
                return format!(
                    "face {face} (normal {:?}, offset {}) cannot be made safe with |K| <= {}",
                    cell.polytope.a().row(face).iter().collect::<Vec<_>>(),
                    cell.polytope.b()[face],
                    config.k_max
                );
            }
        }
    }
    "every face is feasible on its own but not all faces together".into()
}

/// Convergence-only program for one agent and segment. Returns the gain and
/// the optimal rate.
pub fn synthesize_convergence(
    agent: &AgentSystem,
    segment: &ControlPoints,
    config: &SynthesisConfig,
) -> Result<(GainMatrix, f64)> {
    let cs = prepare(agent, segment, config)?;
    let program = build_program(&cs, agent, None, config)?;
    let sol = program.prog.solve(config.tolerances)?;
    match sol.status {
        SolveStatus::Optimal | SolveStatus::AlmostOptimal => {}
        SolveStatus::Infeasible => {
            return Err(Error::Infeasible {
                cell: String::new(),
                diagnosis: format!("convergence LMI has no solution with |K| <= {}", config.k_max),
            })
        }
        other => return Err(Error::Solver(format!("solver ended with status {other}"))),
    }
    let gain = GainMatrix::new(program.gain.extract(&sol.x), cs.outputs)?;
    Ok((gain, sol.x[program.mu]))
}

/// Place per-axis gains `[K_y_i, K_p_i]` into the joint layout
/// `[blkdiag(K_y_i), blkdiag(K_p_i)]`.
pub fn compose_axis_gains(axis_gains: &[GainMatrix]) -> Result<GainMatrix> {
    if axis_gains.is_empty() {
        return Err(Error::Dimension("no axis gains".into()));
    }
    let ref_dim = axis_gains[0].matrix().ncols() - 1;
    for g in axis_gains {
        if g.outputs() != 1 || g.matrix().ncols() != ref_dim + 1 {
            return Err(Error::Dimension(
                "every axis gain must have one output column and the same reference block".into(),
            ));
        }
    }
    let dy = axis_gains.len();
    let du: usize = axis_gains.iter().map(|g| g.matrix().nrows()).sum();
    let mut k = DMatrix::zeros(du, dy + dy * ref_dim);
    let mut row = 0;
    for (i, g) in axis_gains.iter().enumerate() {
        let m = g.matrix();
        let rows = m.nrows();
        k.view_mut((row, i), (rows, 1)).copy_from(&m.columns(0, 1));
        k.view_mut((row, dy + i * ref_dim), (rows, ref_dim))
            .copy_from(&m.columns(1, ref_dim));
        row += rows;
    }
    GainMatrix::new(k, dy)
}

#[derive(Debug, Clone)]
pub struct DecomposedSynthesis {
    pub gain: GainMatrix,
    pub certificate: SynthesisCertificate,
    /// Optimal rate of each axis problem.
    pub axis_mu: Vec<f64>,
    /// The slowest axis rate, shared by the composed gain.
    pub shared_mu: f64,
    /// The composed gain failed the joint barrier check and the joint
    /// program was solved instead.
    pub used_joint_fallback: bool,
}

/// `(lo, hi)` when every facet of `polytope` is orthogonal to one axis.
fn axis_box_bounds(polytope: &Polytope) -> Option<(Vec<f64>, Vec<f64>)> {
    let d = polytope.dimension();
    let mut lo = vec![f64::NEG_INFINITY; d];
    let mut hi = vec![f64::INFINITY; d];
    for r in 0..polytope.num_faces() {
        let row = polytope.a().row(r);
        let nonzero: Vec<usize> = (0..d).filter(|&k| row[k].abs() > DROP_TOL).collect();
        let [k] = nonzero[..] else {
            return None;
        };
        let bound = polytope.b()[r] / row[k];
        if row[k] > 0.0 {
            hi[k] = hi[k].min(bound);
        } else {
            lo[k] = lo[k].max(bound);
        }
    }
    (0..d).all(|k| lo[k] < hi[k] && lo[k].is_finite() && hi[k].is_finite()).then_some((lo, hi))
}

/// Solve one problem per axis, compose the gains and check them against
/// the joint conditions of the cell. Axis-aligned boxes get the full
/// per-axis program, other cells only the convergence part.
pub fn synthesize_decomposed(
    cell: &Cell,
    agent: &AgentSystem,
    config: &SynthesisConfig,
) -> Result<DecomposedSynthesis> {
    config.check()?;
    let dims = agent
        .axes()
        .ok_or_else(|| Error::Domain("agent is not axis-decomposed".into()))?;
    let coeffs = coeffs_from_control_points(&cell.segment);
    if coeffs.dimension() != dims.len() {
        return Err(Error::Dimension(format!(
            "segment has {} axes, agent has {}",
            coeffs.dimension(),
            dims.len()
        )));
    }
    // On an axis-aligned box with scalar axes the barrier separates too, so
    // each axis gets the full program on its interval.
    let bounds = axis_box_bounds(&cell.polytope).filter(|_| dims.iter().all(|d| d.states == 1));
    let mut gains = Vec::with_capacity(dims.len());
    let mut axis_mu = Vec::with_capacity(dims.len());
    for k in 0..dims.len() {
        let axis_agent = agent.axis(k)?;
        let row = PolynomialCoeffs::new(coeffs.matrix().rows(k, 1).into_owned())?;
        let segment = row.to_control_points()?;
        let solved = match &bounds {
            Some((lo, hi)) => {
                let axis_cell = Cell {
                    id: format!("{}[{k}]", cell.id),
                    polytope: Polytope::axis_box(&[lo[k]], &[hi[k]])?,
                    segment,
                    successor: None,
                };
                synthesize(&axis_cell, &axis_agent, config).map(|(g, c)| (g, c.mu))
            }
            None => synthesize_convergence(&axis_agent, &segment, config),
        };
        let (g, mu) = solved.map_err(|e| match e {
            Error::Infeasible { diagnosis, .. } => Error::Infeasible {
                cell: cell.id.clone(),
                diagnosis: format!("axis {k}: {diagnosis}"),
            },
            other => other,
        })?;
        gains.push(g);
        axis_mu.push(mu);
    }
    let shared_mu = axis_mu.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let gain = compose_axis_gains(&gains)?;
    let certificate = verify(cell, agent, &gain, config)?;
    if certificate.passed {
        return Ok(DecomposedSynthesis {
            gain,
            certificate,
            axis_mu,
            shared_mu,
            used_joint_fallback: false,
        });
    }
    let (gain, certificate) = synthesize(cell, agent, config)?;
    Ok(DecomposedSynthesis {
        gain,
        certificate,
        axis_mu,
        shared_mu,
        used_joint_fallback: true,
    })
}
