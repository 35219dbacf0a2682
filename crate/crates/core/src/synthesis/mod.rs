//! Per-cell gain synthesis.
//!
//! For a cell with polytope `A_z x <= b_z` and reference system `(A_p, C_p)`
//! the program is
//!
//! ```text
//! minimize    mu
//! subject to  mu <= 0
//!             sym((M + M^T)^T (Q + B_c K C_c))  <=  2 mu M        (exponential mode)
//!             for every face i:
//!                A_z^T lambda_i = W^T a_i,   W = A + B K_y C + alpha I
//!                gamma_iq >= (K_p^T B^T a_i)_q . v   for every column v of V_q
//!                lambda_i . b_z + sum_q gamma_iq <= alpha b_i - delta
//!                lambda_i >= 0
//!             |K_rc| <= K_max
//! ```
//!
//! where `a_i` is the outward normal of face `i`, so the barrier is
//! `h_i(x) = b_i - a_i . x`. The face constraints are the LP dual of
//! `max over x in cell, x_p in hull of  -dh_i/dt - alpha h_i`.

mod barrier;
mod combined;
mod library;
mod solve;
mod verify;

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use barrier::{
    barrier_faces, face_dual, face_safety_constraint, safety_constraints, BarrierFace, FaceDual, GainVariables,
    SafetyLayout,
};
pub use combined::{
    build_combined, convergence_constraint, max_eigenvalue, relative_degree_ok, stability_matrix,
    CombinedSystem,
};
pub use library::{CellGain, CertificateSummary, GainLibrary};
pub use solve::{
    compose_axis_gains, synthesize, synthesize_convergence, synthesize_decomposed,
    DecomposedSynthesis,
};
pub use verify::{sample_cell, verify, FaceCertificate, SynthesisCertificate};

use crate::conic::SolverTolerances;
use crate::error::{Error, Result};

/// Input/state sizes of one scalar-output axis of a decomposed agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxisDims {
    pub states: usize,
    pub inputs: usize,
}

/// `x' = A x + B u`, `y = C x`.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    axes: Option<Vec<AxisDims>>,
}

impl AgentSystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        let d = a.nrows();
        if a.ncols() != d || b.nrows() != d || c.ncols() != d {
            return Err(Error::Dimension(format!(
                "A is {}x{}, B is {}x{}, C is {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols(),
                c.nrows(),
                c.ncols()
            )));
        }
        if d == 0 || b.ncols() == 0 || c.nrows() == 0 {
            return Err(Error::Dimension("agent needs states, inputs and outputs".into()));
        }
        if a.iter().chain(b.iter()).chain(c.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Domain("agent matrices must be finite".into()));
        }
        Ok(Self { a, b, c, axes: None })
    }

    /// Block-diagonal agent built from scalar-output axes.
    pub fn from_axes(axes: &[AgentSystem]) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::Dimension("no axes".into()));
        }
        let mut dims = Vec::with_capacity(axes.len());
        for ax in axes {
            if ax.outputs() != 1 {
                return Err(Error::Dimension("every axis must have exactly one output".into()));
            }
            dims.push(AxisDims {
                states: ax.states(),
                inputs: ax.inputs(),
            });
        }
        let d: usize = dims.iter().map(|a| a.states).sum();
        let du: usize = dims.iter().map(|a| a.inputs).sum();
        let dy = axes.len();
        let mut a = DMatrix::zeros(d, d);
        let mut b = DMatrix::zeros(d, du);
        let mut c = DMatrix::zeros(dy, d);
        let (mut xs, mut us) = (0, 0);
        for (k, ax) in axes.iter().enumerate() {
            let (n, m) = (ax.states(), ax.inputs());
            a.view_mut((xs, xs), (n, n)).copy_from(&ax.a);
            b.view_mut((xs, us), (n, m)).copy_from(&ax.b);
            c.view_mut((k, xs), (1, n)).copy_from(&ax.c);
            xs += n;
            us += m;
        }
        let mut agent = Self::new(a, b, c)?;
        agent.axes = Some(dims);
        Ok(agent)
    }

    /// `d` decoupled single integrators with full-state output.
    pub fn single_integrator(d: usize) -> Self {
        let axis = Self::new(
            DMatrix::zeros(1, 1),
            DMatrix::identity(1, 1),
            DMatrix::identity(1, 1),
        )
        .expect("scalar integrator");
        Self::from_axes(&vec![axis; d]).expect("integrator axes")
    }

    pub fn states(&self) -> usize {
        self.a.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn axes(&self) -> Option<&[AxisDims]> {
        self.axes.as_deref()
    }

    pub fn is_axis_decomposed(&self) -> bool {
        self.axes.is_some()
    }

    pub(crate) fn with_axes(mut self, axes: Option<Vec<AxisDims>>) -> Result<Self> {
        if let Some(dims) = &axes {
            let d: usize = dims.iter().map(|a| a.states).sum();
            let du: usize = dims.iter().map(|a| a.inputs).sum();
            if d != self.states() || du != self.inputs() || dims.len() != self.outputs() {
                return Err(Error::Dimension("axis layout does not match the agent".into()));
            }
        }
        self.axes = axes;
        Ok(self)
    }

    /// The `k`-th scalar axis of a decomposed agent.
    pub fn axis(&self, k: usize) -> Result<AgentSystem> {
        let dims = self
            .axes
            .as_ref()
            .ok_or_else(|| Error::Domain("agent is not axis-decomposed".into()))?;
        let ax = *dims
            .get(k)
            .ok_or_else(|| Error::Dimension(format!("axis {k} out of range")))?;
        let xs: usize = dims[..k].iter().map(|a| a.states).sum();
        let us: usize = dims[..k].iter().map(|a| a.inputs).sum();
        AgentSystem::new(
            self.a.view((xs, xs), (ax.states, ax.states)).into_owned(),
            self.b.view((xs, us), (ax.states, ax.inputs)).into_owned(),
            self.c.view((k, xs), (1, ax.states)).into_owned(),
        )
    }
}

/// `u = K [y; x_p] = K_y y + K_p x_p`.
#[derive(Debug, Clone, PartialEq)]
pub struct GainMatrix {
    k: DMatrix<f64>,
    outputs: usize,
}

impl GainMatrix {
    pub fn new(k: DMatrix<f64>, outputs: usize) -> Result<Self> {
        if k.ncols() < outputs || outputs == 0 {
            return Err(Error::Dimension(format!(
                "gain with {} columns cannot hold {outputs} output columns",
                k.ncols()
            )));
        }
        if k.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("gain entries must be finite".into()));
        }
        Ok(Self { k, outputs })
    }

    pub fn zeros(inputs: usize, outputs: usize, reference_dim: usize) -> Self {
        Self {
            k: DMatrix::zeros(inputs, outputs + reference_dim),
            outputs,
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn k_y(&self) -> DMatrix<f64> {
        self.k.columns(0, self.outputs).into_owned()
    }

    pub fn k_p(&self) -> DMatrix<f64> {
        self.k
            .columns(self.outputs, self.k.ncols() - self.outputs)
            .into_owned()
    }

    pub fn max_abs(&self) -> f64 {
        self.k.amax()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RateMode {
    /// `S <= mu I` with `mu <= 0`.
    Paper,
    /// `S <= 2 mu M`, i.e. `dV/dt <= 2 mu V`.
    #[default]
    Exponential,
}

impl fmt::Display for RateMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RateMode::Paper => "paper",
            RateMode::Exponential => "exponential",
        })
    }
}

impl FromStr for RateMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(RateMode::Paper),
            "exponential" => Ok(RateMode::Exponential),
            other => Err(Error::Domain(format!(
                "unknown mode {other:?} (expected paper or exponential)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthesisConfig {
    /// Barrier class-K gain.
    pub alpha: f64,
    /// Safety margin, in workspace distance units since face normals are unit length.
    pub delta: f64,
    /// Entrywise bound on `K`.
    pub k_max: f64,
    pub mode: RateMode,
    pub tolerances: SolverTolerances,
    /// Seconds per unit of spline parameter.
    pub time_scale: f64,
    /// Acceptance threshold for every certificate residual.
    pub certificate_tol: f64,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            alpha: 10.0,
            delta: 0.1,
            k_max: 50.0,
            mode: RateMode::Exponential,
            tolerances: SolverTolerances::default(),
            time_scale: 1.0,
            certificate_tol: 1e-6,
        }
    }
}

impl SynthesisConfig {
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn check(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::Domain(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.delta >= 0.0) {
            return Err(Error::Domain(format!("delta must be nonnegative, got {}", self.delta)));
        }
        if !(self.k_max > 0.0) {
            return Err(Error::Domain(format!("k_max must be positive, got {}", self.k_max)));
        }
        if !(self.time_scale > 0.0) {
            return Err(Error::Domain("time scale must be positive".into()));
        }
        Ok(())
    }
}
