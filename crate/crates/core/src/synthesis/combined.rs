use nalgebra::{DMatrix, DVector};

use super::{AgentSystem, GainMatrix, RateMode};
use crate::error::{Error, Result};
use crate::trajectory::ReferenceSystem;

/// Agent and reference stacked as `z = [x; x_p]`:
/// `z' = (Q + B_c K C_c) z`, `V(z) = z^T M z = |C x - C_p x_p|^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinedSystem {
    pub q: DMatrix<f64>,
    pub bc: DMatrix<f64>,
    pub cc: DMatrix<f64>,
    /// `[C, -C_p]`, so `E z` is the tracking error.
    pub e: DMatrix<f64>,
    pub m: DMatrix<f64>,
    pub agent_states: usize,
    pub reference_states: usize,
    pub outputs: usize,
    pub inputs: usize,
}

impl CombinedSystem {
    pub fn dim(&self) -> usize {
        self.agent_states + self.reference_states
    }

    /// Number of columns of `K`.
    pub fn gain_cols(&self) -> usize {
        self.outputs + self.reference_states
    }

    pub fn closed_loop(&self, k: &GainMatrix) -> Result<DMatrix<f64>> {
        let km = k.matrix();
        if km.nrows() != self.inputs || km.ncols() != self.gain_cols() {
            return Err(Error::Dimension(format!(
                "gain is {}x{}, combined system needs {}x{}",
                km.nrows(),
                km.ncols(),
                self.inputs,
                self.gain_cols()
            )));
        }
        Ok(&self.q + &self.bc * km * &self.cc)
    }

    pub fn lyapunov(&self, z: &DVector<f64>) -> f64 {
        (&self.e * z).norm_squared()
    }

    /// `E^T (E E^T)^-1`. `E E^T = C C^T + I` is always invertible.
    pub fn e_pinv(&self) -> DMatrix<f64> {
        let eet = &self.e * self.e.transpose();
        let inv = eet
            .try_inverse()
            .expect("E E^T = C C^T + I is positive definite");
        self.e.transpose() * inv
    }

    /// Orthonormal basis of the kernel of `E`, one column per direction.
    pub fn e_kernel(&self) -> DMatrix<f64> {
        let n = self.dim();
        let proj = DMatrix::identity(n, n) - self.e_pinv() * &self.e;
        let eig = proj.symmetric_eigen();
        let cols: Vec<DVector<f64>> = (0..n)
            .filter(|&i| eig.eigenvalues[i] > 0.5)
            .map(|i| eig.eigenvectors.column(i).into_owned())
            .collect();
        if cols.is_empty() {
            DMatrix::zeros(n, 0)
        } else {
            DMatrix::from_columns(&cols)
        }
    }

    /// Error dynamics restricted to the error coordinates, `E F E^+`.
    pub fn error_dynamics(&self, k: &GainMatrix) -> Result<DMatrix<f64>> {
        Ok(&self.e * self.closed_loop(k)? * self.e_pinv())
    }
}

pub fn build_combined(agent: &AgentSystem, reference: &ReferenceSystem) -> Result<CombinedSystem> {
    if agent.outputs() != reference.outputs {
        return Err(Error::Dimension(format!(
            "agent has {} outputs but the reference has {}",
            agent.outputs(),
            reference.outputs
        )));
    }
    let (d, du, dy, dp) = (
        agent.states(),
        agent.inputs(),
        agent.outputs(),
        reference.state_dim(),
    );
    let n = d + dp;
    let mut q = DMatrix::zeros(n, n);
    q.view_mut((0, 0), (d, d)).copy_from(&agent.a);
    q.view_mut((d, d), (dp, dp)).copy_from(&reference.a_p);
    let mut bc = DMatrix::zeros(n, du);
    bc.view_mut((0, 0), (d, du)).copy_from(&agent.b);
    let mut cc = DMatrix::zeros(dy + dp, n);
    cc.view_mut((0, 0), (dy, d)).copy_from(&agent.c);
    cc.view_mut((dy, d), (dp, dp)).fill_with_identity();
    let mut e = DMatrix::zeros(dy, n);
    e.view_mut((0, 0), (dy, d)).copy_from(&agent.c);
    e.view_mut((0, d), (dy, dp)).copy_from(&(-&reference.c_p));
    let m = e.transpose() * &e;
    Ok(CombinedSystem {
        q,
        bc,
        cc,
        e,
        m,
        agent_states: d,
        reference_states: dp,
        outputs: dy,
        inputs: du,
    })
}

/// The input must reach `dV/dt` directly: `M B_c != 0`.
pub fn relative_degree_ok(system: &CombinedSystem) -> bool {
    let mb = &system.m * &system.bc;
    let scale = system.m.amax().max(system.bc.amax()).max(1.0);
    mb.amax() > 1e-12 * scale * scale
}

/// `S = sym((M + M^T)^T (Q + B_c K C_c))`.
pub fn stability_matrix(system: &CombinedSystem, k: &GainMatrix) -> Result<DMatrix<f64>> {
    let f = system.closed_loop(k)?;
    let mm = &system.m + system.m.transpose();
    Ok(sym(&(mm.transpose() * f)))
}

/// Left-hand side of the convergence LMI, which must be negative semidefinite:
/// `S - mu I` in paper mode, `S - 2 mu M` in exponential mode.
pub fn convergence_constraint(
    system: &CombinedSystem,
    k: &GainMatrix,
    mu: f64,
    mode: RateMode,
) -> Result<DMatrix<f64>> {
    let s = stability_matrix(system, k)?;
    let n = system.dim();
    Ok(match mode {
        RateMode::Paper => s - DMatrix::identity(n, n) * mu,
        RateMode::Exponential => s - &system.m * (2.0 * mu),
    })
}

pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::NEG_INFINITY;
    }
    sym(m)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

pub(crate) fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}
