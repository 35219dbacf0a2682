use nalgebra::{DMatrix, DVector};

use super::{AgentSystem, GainMatrix, SynthesisConfig};
use crate::conic::{ConicProgram, LinExpr, SolverTolerances};
use crate::environment::Polytope;
use crate::error::{Error, Result};
use crate::trajectory::HullBounds;

/// `h(x) = a_h . x + b_h`, nonnegative inside the cell.
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierFace {
    pub a_h: DVector<f64>,
    pub b_h: f64,
}

impl BarrierFace {
    pub fn value(&self, x: &DVector<f64>) -> f64 {
        self.a_h.dot(x) + self.b_h
    }

    /// Outward unit normal of the face.
    pub fn normal(&self) -> DVector<f64> {
        -&self.a_h
    }
}

/// One barrier per facet of `A x <= b`: `A_h = -a_i`, `b_h = b_i`.
pub fn barrier_faces(polytope: &Polytope) -> Vec<BarrierFace> {
    (0..polytope.num_faces())
        .map(|i| BarrierFace {
            a_h: -polytope.a().row(i).transpose(),
            b_h: polytope.b()[i],
        })
        .collect()
}

/// Where the entries of `K` sit in the decision vector (row-major).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GainVariables {
    pub start: usize,
    pub rows: usize,
    pub cols: usize,
}

impl GainVariables {
    pub fn index(&self, r: usize, c: usize) -> usize {
        self.start + r * self.cols + c
    }

    pub fn extract(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |r, c| x[self.index(r, c)])
    }
}

/// Multipliers added for one face: `lambda` over the cell's facets and one
/// `gamma` per derivative order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SafetyLayout {
    pub lambda_start: usize,
    pub lambda_len: usize,
    pub gamma_start: usize,
    pub gamma_len: usize,
}

fn check_dims(polytope: &Polytope, agent: &AgentSystem, hull: &HullBounds) -> Result<()> {
    if polytope.dimension() != agent.states() {
        return Err(Error::Dimension(format!(
            "cell lives in {} dimensions but the agent has {} states",
            polytope.dimension(),
            agent.states()
        )));
    }
    if hull.dimension() != agent.outputs() {
        return Err(Error::Dimension(format!(
            "segment lives in {} dimensions but the agent has {} outputs",
            hull.dimension(),
            agent.outputs()
        )));
    }
    Ok(())
}

/// Add the dualized barrier condition of every face of `polytope` to `prog`.
pub fn safety_constraints(
    prog: &mut ConicProgram,
    gain: GainVariables,
    polytope: &Polytope,
    agent: &AgentSystem,
    hull: &HullBounds,
    config: &SynthesisConfig,
) -> Result<Vec<SafetyLayout>> {
    (0..polytope.num_faces())
        .map(|i| face_safety_constraint(prog, gain, polytope, i, agent, hull, config))
        .collect()
}

/// Add the dualized barrier condition of face `i` (`a . x <= b`):
/// `max over x in cell, x_p in hull of a^T (W x + B K_p x_p) <= alpha b - delta`
/// becomes linear in `K` and the new multipliers.
pub fn face_safety_constraint(
    prog: &mut ConicProgram,
    gain: GainVariables,
    polytope: &Polytope,
    i: usize,
    agent: &AgentSystem,
    hull: &HullBounds,
    config: &SynthesisConfig,
) -> Result<SafetyLayout> {
    check_dims(polytope, agent, hull)?;
    if i >= polytope.num_faces() {
        return Err(Error::Dimension(format!("face {i} out of range")));
    }
    let (d, dy) = (agent.states(), agent.outputs());
    let n = hull.degree();
    let s = polytope.num_faces();
    let a_z = polytope.a();
    let b_z = polytope.b();
    let a = a_z.row(i).transpose();
    let bt_a = agent.b.transpose() * &a;
    let drift = (&agent.a + DMatrix::identity(d, d) * config.alpha).transpose() * &a;
    let lambda_start = prog.add_vars(s);
    let gamma_start = prog.add_vars(n + 1);

    // A_z^T lambda - (A + alpha I)^T a - C^T K_y^T B^T a = 0
    for j in 0..d {
        let mut e = LinExpr::constant(-drift[j]);
        for l in 0..s {
            e.add_term(lambda_start + l, a_z[(l, j)]);
        }
        for r in 0..gain.rows {
            for c in 0..dy {
                e.add_term(gain.index(r, c), -agent.c[(c, j)] * bt_a[r]);
            }
        }
        prog.add_eq(e);
    }
    for l in 0..s {
        let mut e = LinExpr::default();
        e.add_term(lambda_start + l, -1.0);
        prog.add_le(e);
    }
    // gamma_q >= sum_k (K_p^T B^T a)_{k,q} V_q[k, j] for every hull vertex j
    for q in 0..=n {
        let v = hull.vertices(q);
        for j in 0..v.ncols() {
            let mut e = LinExpr::default();
            e.add_term(gamma_start + q, -1.0);
            for k in 0..dy {
                let col = dy + k * (n + 1) + q;
                for r in 0..gain.rows {
                    e.add_term(gain.index(r, col), bt_a[r] * v[(k, j)]);
                }
            }
            prog.add_le(e);
        }
    }
    let mut budget = LinExpr::constant(config.delta - config.alpha * b_z[i]);
    for l in 0..s {
        budget.add_term(lambda_start + l, b_z[l]);
    }
    for q in 0..=n {
        budget.add_term(gamma_start + q, 1.0);
    }
    prog.add_le(budget);

    Ok(SafetyLayout {
        lambda_start,
        lambda_len: s,
        gamma_start,
        gamma_len: n + 1,
    })
}

/// Dual certificate of one face for a fixed gain.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceDual {
    pub lambda: DVector<f64>,
    pub gamma: DVector<f64>,
    /// `b_z . lambda`, equal to `max over the cell of a^T W x`.
    pub state_value: f64,
    /// `sum_q gamma_q`, equal to `max over the hull product of a^T B K_p x_p`.
    pub reference_value: f64,
}

impl FaceDual {
    pub fn value(&self) -> f64 {
        self.state_value + self.reference_value
    }
}

/// Smallest multipliers certifying face `face` of `polytope` under gain `k`.
pub fn face_dual(
    polytope: &Polytope,
    face: usize,
    agent: &AgentSystem,
    k: &GainMatrix,
    hull: &HullBounds,
    alpha: f64,
    tol: SolverTolerances,
) -> Result<FaceDual> {
    check_dims(polytope, agent, hull)?;
    if face >= polytope.num_faces() {
        return Err(Error::Dimension(format!("face {face} out of range")));
    }
    let d = agent.states();
    let s = polytope.num_faces();
    let a = polytope.a().row(face).transpose();
    let w = closed_loop_drift(agent, k, alpha)?;
    let target = w.transpose() * &a;

    let mut prog = ConicProgram::new(s);
    for l in 0..s {
        prog.set_objective(l, polytope.b()[l]);
        let mut e = LinExpr::default();
        e.add_term(l, -1.0);
        prog.add_le(e);
    }
    for j in 0..d {
        let mut e = LinExpr::constant(-target[j]);
        for l in 0..s {
            e.add_term(l, polytope.a()[(l, j)]);
        }
        prog.add_eq(e);
    }
    let sol = prog.solve(tol)?;
    if !sol.status.is_optimal() {
        return Err(Error::Solver(format!(
            "face {face} dual LP ended with status {}",
            sol.status
        )));
    }
    let raw = DVector::from_iterator(s, sol.x.iter().map(|v| v.max(0.0)));
    let lambda = polish_multipliers(polytope, &target, raw);
    let state_value = polytope.b().dot(&lambda);

    let gamma = reference_face_terms(agent, k, hull, &a);
    let reference_value = gamma.sum();
    Ok(FaceDual {
        lambda,
        gamma,
        state_value,
        reference_value,
    })
}

/// Re-solve `A_S^T lambda_S = target` exactly on the largest multipliers of
/// the interior-point solution, keeping it only if it stays nonnegative and
/// does not raise the objective.
fn polish_multipliers(polytope: &Polytope, target: &DVector<f64>, lambda: DVector<f64>) -> DVector<f64> {
    let a = polytope.a();
    let cutoff = 1e-7 * lambda.amax().max(1.0);
    let mut support: Vec<usize> = (0..lambda.len()).filter(|&l| lambda[l] > cutoff).collect();
    // A vertex optimum needs at most `d` facets; drop the smallest extras.
    support.sort_by(|&i, &j| lambda[j].total_cmp(&lambda[i]));
    support.truncate(a.ncols());
    if support.is_empty() {
        return lambda;
    }
    let a_s = DMatrix::from_fn(a.ncols(), support.len(), |j, c| a[(support[c], j)]);
    let Ok(sol) = a_s.clone().svd(true, true).solve(target, 1e-12) else {
        return lambda;
    };
    let residual = (&a_s * &sol - target).amax();
    if sol.min() < 0.0 || residual > 1e-10 * target.amax().max(1.0) {
        return lambda;
    }
    let mut polished = DVector::zeros(lambda.len());
    for (c, &l) in support.iter().enumerate() {
        polished[l] = sol[c];
    }
    let (b, raw) = (polytope.b().dot(&polished), polytope.b().dot(&lambda));
    if b > raw + 1e-6 * raw.abs().max(1.0) {
        return lambda;
    }
    polished
}

/// `W = A + B K_y C + alpha I`.
pub(crate) fn closed_loop_drift(
    agent: &AgentSystem,
    k: &GainMatrix,
    alpha: f64,
) -> Result<DMatrix<f64>> {
    if k.matrix().nrows() != agent.inputs() || k.outputs() != agent.outputs() {
        return Err(Error::Dimension("gain does not match the agent".into()));
    }
    let d = agent.states();
    Ok(&agent.a + &agent.b * k.k_y() * &agent.c + DMatrix::identity(d, d) * alpha)
}

/// `gamma_q = max_j g_q . V_q[:, j]` with `g = K_p^T B^T a`.
pub(crate) fn reference_face_terms(
    agent: &AgentSystem,
    k: &GainMatrix,
    hull: &HullBounds,
    a: &DVector<f64>,
) -> DVector<f64> {
    let n = hull.degree();
    let dy = hull.dimension();
    let g = k.k_p().transpose() * (agent.b.transpose() * a);
    DVector::from_fn(n + 1, |q, _| {
        let v = hull.vertices(q);
        (0..v.ncols())
            .map(|j| (0..dy).map(|kx| g[kx * (n + 1) + q] * v[(kx, j)]).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max)
    })
}
