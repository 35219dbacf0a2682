use nalgebra::DVector;

use super::barrier::{closed_loop_drift, face_dual, reference_face_terms, FaceDual};
use super::combined::{build_combined, convergence_constraint, max_eigenvalue, stability_matrix, sym};
use super::{AgentSystem, GainMatrix, RateMode, SynthesisConfig};
use crate::environment::{Cell, Polytope, CONTAINMENT_TOL};
use crate::error::{Error, Result};
use crate::trajectory::{build_reference, coeffs_from_control_points, hull_bounds};

const GRID_PER_AXIS: usize = 100;
const SAMPLES: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct FaceCertificate {
    pub face: usize,
    pub dual: FaceDual,
    /// `alpha b - delta`.
    pub bound: f64,
    /// Largest sampled value of `a^T (W x + B K_p x_p)`.
    pub primal_max: f64,
    /// `primal_max - bound`; nonpositive when the face is safe.
    pub residual: f64,
    /// `dual.value() - bound`.
    pub dual_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisCertificate {
    pub cell: String,
    pub mode: RateMode,
    /// Best rate the gain achieves.
    pub mu: f64,
    /// `min(mu, 0)`, the rate the LMI is checked at.
    pub certified_mu: f64,
    /// Largest eigenvalue of the convergence LMI at `certified_mu`.
    pub lmi_max_eig: f64,
    /// `max |E F N|` over a kernel basis `N` of `E`.
    pub invariance_residual: f64,
    pub faces: Vec<FaceCertificate>,
    pub max_gain: f64,
    pub k_max: f64,
    pub tolerance: f64,
    pub solver_status: Option<String>,
    pub solver_mu: Option<f64>,
    pub passed: bool,
}

impl SynthesisCertificate {
    pub fn max_face_residual(&self) -> f64 {
        self.faces
            .iter()
            .map(|f| f.residual.max(f.dual_residual))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Re-check a gain from scratch: the convergence LMI by eigenvalues, every
/// face by its dual LP and by sampling the cell together with every vertex
/// of the reference hull product.
pub fn verify(
    cell: &Cell,
    agent: &AgentSystem,
    gain: &GainMatrix,
    config: &SynthesisConfig,
) -> Result<SynthesisCertificate> {
    config.check()?;
    let reference = build_reference(&coeffs_from_control_points(&cell.segment));
    let cs = build_combined(agent, &reference.time_scaled(config.time_scale))?;
    let tol = config.certificate_tol;

    let mu = match config.mode {
        RateMode::Exponential => {
            let l = cs.error_dynamics(gain)?;
            max_eigenvalue(&sym(&l))
        }
        RateMode::Paper => max_eigenvalue(&stability_matrix(&cs, gain)?),
    };
    let certified_mu = mu.min(0.0);
    let lmi_max_eig = max_eigenvalue(&convergence_constraint(&cs, gain, certified_mu, config.mode)?);
    let f = cs.closed_loop(gain)?;
    let invariance_residual = (&cs.e * f * cs.e_kernel()).amax();

    let hull = hull_bounds(&cell.segment);
    let samples = sample_cell(&cell.polytope)?;
    let w = closed_loop_drift(agent, gain, config.alpha)?;
    let mut faces = Vec::with_capacity(cell.polytope.num_faces());
    for face in 0..cell.polytope.num_faces() {
        let a: DVector<f64> = cell.polytope.a().row(face).transpose();
        let bound = config.alpha * cell.polytope.b()[face] - config.delta;
        let dual = face_dual(
            &cell.polytope,
            face,
            agent,
            gain,
            &hull,
            config.alpha,
            config.tolerances,
        )?;
        let wa = w.transpose() * &a;
        let state_max = samples
            .iter()
            .map(|x| wa.dot(x))
            .fold(f64::NEG_INFINITY, f64::max);
        let primal_max = state_max + reference_face_terms(agent, gain, &hull, &a).sum();
        faces.push(FaceCertificate {
            face,
            bound,
            primal_max,
            residual: primal_max - bound,
            dual_residual: dual.value() - bound,
            dual,
        });
    }

    let max_gain = gain.max_abs();
    let passed = lmi_max_eig <= tol
        && mu <= tol
        && faces.iter().all(|f| f.residual <= tol && f.dual_residual <= tol)
        && max_gain <= config.k_max * (1.0 + 1e-9) + tol;
    Ok(SynthesisCertificate {
        cell: cell.id.clone(),
        mode: config.mode,
        mu,
        certified_mu,
        lmi_max_eig,
        invariance_residual,
        faces,
        max_gain,
        k_max: config.k_max,
        tolerance: tol,
        solver_status: None,
        solver_mu: None,
        passed,
    })
}

/// Points of the cell used for primal checks: an even grid over the
/// bounding box in one and two dimensions (plus the polygon's vertices),
/// a Halton sequence beyond.
pub fn sample_cell(polytope: &Polytope) -> Result<Vec<DVector<f64>>> {
    let d = polytope.dimension();
    let (lo, hi) = polytope.bounding_box()?;
    let mut candidates: Vec<DVector<f64>> = Vec::new();
    match d {
        1 => {
            // Interval ends straight from the facets.
            let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
            for r in 0..polytope.num_faces() {
                let (a, b) = (polytope.a()[(r, 0)], polytope.b()[r]);
                if a > 0.0 {
                    hi = hi.min(b / a);
                } else {
                    lo = lo.max(b / a);
                }
            }
            for i in 0..SAMPLES {
                let t = i as f64 / (SAMPLES - 1) as f64;
                candidates.push(DVector::from_element(1, lo + t * (hi - lo)));
            }
        }
        2 => {
            for i in 0..GRID_PER_AXIS {
                for j in 0..GRID_PER_AXIS {
                    let s = i as f64 / (GRID_PER_AXIS - 1) as f64;
                    let t = j as f64 / (GRID_PER_AXIS - 1) as f64;
                    candidates.push(DVector::from_vec(vec![
                        lo[0] + s * (hi[0] - lo[0]),
                        lo[1] + t * (hi[1] - lo[1]),
                    ]));
                }
            }
            for v in polytope.vertices_2d()? {
                candidates.push(DVector::from_vec(v.to_vec()));
            }
        }
        _ => {
            for i in 1..=SAMPLES {
                candidates.push(DVector::from_fn(d, |k, _| {
                    lo[k] + halton(i, nth_prime(k)) * (hi[k] - lo[k])
                }));
            }
            candidates.push(polytope.chebyshev_center()?.0);
        }
    }
    let mut out = Vec::with_capacity(candidates.len());
    for x in candidates {
        if polytope.contains(&x, CONTAINMENT_TOL)? {
            out.push(x);
        }
    }
    if out.is_empty() {
        return Err(Error::Domain("no sample point falls inside the cell".into()));
    }
    Ok(out)
}

fn halton(mut index: usize, base: usize) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while index > 0 {
        f /= base as f64;
        r += f * (index % base) as f64;
        index /= base;
    }
    r
}

fn nth_prime(k: usize) -> usize {
    let mut found = 0;
    let mut n = 1;
    loop {
        n += 1;
        if (2..n).take_while(|p| p * p <= n).all(|p| n % p != 0) {
            if found == k {
                return n;
            }
            found += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halton_base_two() {
        assert_eq!(halton(1, 2), 0.5);
        assert_eq!(halton(2, 2), 0.25);
        assert_eq!(halton(3, 2), 0.75);
        assert_eq!(nth_prime(0), 2);
        assert_eq!(nth_prime(3), 7);
    }

    #[test]
    fn samples_stay_inside() {
        let p = Polytope::axis_box(&[0.0, 0.0, 0.0], &[1.0, 2.0, 3.0]).unwrap();
        let pts = sample_cell(&p).unwrap();
        assert!(pts.len() > 9000);
        let p2 = Polytope::axis_box(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert_eq!(sample_cell(&p2).unwrap().len(), 100 * 100 + 4);
    }
}
