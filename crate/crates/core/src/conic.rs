//! Standard-form conic programs: a linear objective, affine equalities and
//! inequalities, and negative-semidefinite affine matrix blocks.
//!
//! Programs are assembled from sparse [`LinExpr`] terms and handed to the
//! Clarabel interior-point solver.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

use crate::error::{Error, Result};

/// Affine expression `sum_k c_k x_k + constant`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn constant(value: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: value,
        }
    }

    pub fn var(index: usize) -> Self {
        Self {
            terms: vec![(index, 1.0)],
            constant: 0.0,
        }
    }

    pub fn add_term(&mut self, index: usize, coeff: f64) -> &mut Self {
        if coeff != 0.0 {
            self.terms.push((index, coeff));
        }
        self
    }

    pub fn add_constant(&mut self, value: f64) -> &mut Self {
        self.constant += value;
        self
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            terms: self.terms.iter().map(|&(i, c)| (i, c * factor)).collect(),
            constant: self.constant * factor,
        }
    }

    pub fn plus(&self, other: &LinExpr) -> Self {
        let mut out = self.clone();
        out.terms.extend(other.terms.iter().copied());
        out.constant += other.constant;
        out
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(i, c)| c * x[i]).sum::<f64>() + self.constant
    }
}

/// Symmetric matrix whose entries are affine in the decision vector.
#[derive(Debug, Clone, PartialEq)]
pub struct LinMatrix {
    size: usize,
    /// Row-major, full storage; only the upper triangle is read.
    entries: Vec<LinExpr>,
}

impl LinMatrix {
    pub fn zeros(size: usize) -> Self {
        Self {
            size,
            entries: vec![LinExpr::default(); size * size],
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn entry(&self, r: usize, c: usize) -> &LinExpr {
        &self.entries[r * self.size + c]
    }

    pub fn entry_mut(&mut self, r: usize, c: usize) -> &mut LinExpr {
        &mut self.entries[r * self.size + c]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    /// Converged at the solver's reduced tolerances.
    AlmostOptimal,
    Infeasible,
    Unbounded,
    Failed,
}

impl SolveStatus {
    pub fn is_optimal(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::AlmostOptimal)
    }
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::AlmostOptimal => "almost_optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::Failed => "failed",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone)]
pub struct ConicSolution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverTolerances {
    pub feasibility: f64,
    pub gap: f64,
}

impl Default for SolverTolerances {
    fn default() -> Self {
        Self {
            feasibility: 1e-8,
            gap: 1e-8,
        }
    }
}

/// Minimize `objective . x` subject to the registered constraints.
#[derive(Debug, Clone, Default)]
pub struct ConicProgram {
    num_vars: usize,
    objective: Vec<f64>,
    equalities: Vec<LinExpr>,
    inequalities: Vec<LinExpr>,
    nsd_blocks: Vec<LinMatrix>,
}

impl ConicProgram {
    pub fn new(num_vars: usize) -> Self {
        Self {
            num_vars,
            objective: vec![0.0; num_vars],
            ..Default::default()
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    /// Append `count` fresh variables and return the index of the first.
    pub fn add_vars(&mut self, count: usize) -> usize {
        let start = self.num_vars;
        self.num_vars += count;
        self.objective.resize(self.num_vars, 0.0);
        start
    }

    pub fn set_objective(&mut self, index: usize, coeff: f64) {
        self.objective[index] = coeff;
    }

    /// `expr == 0`.
    pub fn add_eq(&mut self, expr: LinExpr) {
        self.equalities.push(expr);
    }

    /// `expr <= 0`.
    pub fn add_le(&mut self, expr: LinExpr) {
        self.inequalities.push(expr);
    }

    /// `block(x) <= 0` in the semidefinite order.
    pub fn add_nsd(&mut self, block: LinMatrix) {
        if block.size() == 1 {
            self.add_le(block.entry(0, 0).clone());
        } else {
            self.nsd_blocks.push(block);
        }
    }

    pub fn num_equalities(&self) -> usize {
        self.equalities.len()
    }

    pub fn num_inequalities(&self) -> usize {
        self.inequalities.len()
    }

    pub fn nsd_block_sizes(&self) -> Vec<usize> {
        self.nsd_blocks.iter().map(LinMatrix::size).collect()
    }

    pub fn solve(&self, tol: SolverTolerances) -> Result<ConicSolution> {
        // Clarabel form: A x + s = b with s in the product cone.
        let mut rows = Vec::new();
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut b = Vec::new();
        let mut push_row = |expr: &LinExpr, scale: f64, b: &mut Vec<f64>| {
            let r = b.len();
            for &(i, c) in &expr.terms {
                if i >= self.num_vars {
                    return Err(Error::Solver(format!("variable index {i} out of range")));
                }
                rows.push(r);
                cols.push(i);
                vals.push(c * scale);
            }
            b.push(-expr.constant * scale);
            Ok(())
        };

        let mut cones = Vec::new();
        for e in &self.equalities {
            push_row(e, 1.0, &mut b)?;
        }
        if !self.equalities.is_empty() {
            cones.push(SupportedConeT::ZeroConeT(self.equalities.len()));
        }
        for e in &self.inequalities {
            push_row(e, 1.0, &mut b)?;
        }
        if !self.inequalities.is_empty() {
            cones.push(SupportedConeT::NonnegativeConeT(self.inequalities.len()));
        }
        // block(x) <= 0  <=>  -block(x) in the PSD cone; Clarabel packs the upper
        // triangle column by column with off-diagonals scaled by sqrt(2).
        for block in &self.nsd_blocks {
            let n = block.size();
            for j in 0..n {
                for i in 0..=j {
                    let scale = if i == j { 1.0 } else { std::f64::consts::SQRT_2 };
                    push_row(block.entry(i, j), scale, &mut b)?;
                }
            }
            cones.push(SupportedConeT::PSDTriangleConeT(n));
        }
        let m = b.len();
        let a = CscMatrix::new_from_triplets(m, self.num_vars, rows, cols, vals);
        let p = CscMatrix::zeros((self.num_vars, self.num_vars));

        let settings = DefaultSettingsBuilder::default()
            .verbose(false)
            .max_iter(300)
            .tol_feas(tol.feasibility)
            .tol_gap_abs(tol.gap)
            .tol_gap_rel(tol.gap)
            .build()
            .map_err(|e| Error::Solver(format!("invalid settings: {e:?}")))?;
        let mut solver = DefaultSolver::new(&p, &self.objective, &a, &b, &cones, settings)
            .map_err(|e| Error::Solver(format!("{e:?}")))?;
        solver.solve();

        let sol = &solver.solution;
        let status = match sol.status {
            SolverStatus::Solved => SolveStatus::Optimal,
            SolverStatus::AlmostSolved => SolveStatus::AlmostOptimal,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                SolveStatus::Infeasible
            }
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
                SolveStatus::Unbounded
            }
            _ => SolveStatus::Failed,
        };
        Ok(ConicSolution {
            status,
            x: sol.x.clone(),
            objective: sol.obj_val,
            detail: format!("{:?}", sol.status),
        })
    }
}

/// `min c.x` subject to `A x <= b` (rows of `a`), for small dense LPs.
pub fn solve_lp(
    objective: &[f64],
    a: &[Vec<f64>],
    b: &[f64],
    tol: SolverTolerances,
) -> Result<ConicSolution> {
    let mut prog = ConicProgram::new(objective.len());
    for (i, &c) in objective.iter().enumerate() {
        prog.set_objective(i, c);
    }
    for (row, &rhs) in a.iter().zip(b) {
        let mut e = LinExpr::constant(-rhs);
        for (i, &c) in row.iter().enumerate() {
            e.add_term(i, c);
        }
        prog.add_le(e);
    }
    prog.solve(tol)
}
