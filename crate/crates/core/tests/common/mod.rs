//! Reference computations that share no code with the library.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use polytrack::environment::{Cell, Polytope};
use polytrack::trajectory::ControlPoints;

/// de Casteljau evaluation of a Bezier curve given as a list of points.
pub fn de_casteljau(points: &[Vec<f64>], t: f64) -> Vec<f64> {
    let mut work: Vec<Vec<f64>> = points.to_vec();
    let n = work.len();
    for r in 1..n {
        for i in 0..n - r {
            for k in 0..work[i].len() {
                work[i][k] = (1.0 - t) * work[i][k] + t * work[i + 1][k];
            }
        }
    }
    work[0].clone()
}

/// Control points of the `q`-th derivative by forward differences:
/// `n!/(n-q)! * Delta^q P_i`.
pub fn derivative_points(points: &[Vec<f64>], q: usize) -> Vec<Vec<f64>> {
    let n = points.len() - 1;
    let mut pts = points.to_vec();
    let mut factor = 1.0;
    for r in 0..q {
        factor *= (n - r) as f64;
        pts = pts
            .windows(2)
            .map(|w| w[1].iter().zip(&w[0]).map(|(b, a)| b - a).collect())
            .collect();
    }
    pts.into_iter()
        .map(|p| p.into_iter().map(|v| v * factor).collect())
        .collect()
}

/// `p^(q)(t)` through the derivative control polygon.
pub fn derivative_at(points: &[Vec<f64>], t: f64, q: usize) -> Vec<f64> {
    let n = points.len() - 1;
    if q > n {
        return vec![0.0; points[0].len()];
    }
    de_casteljau(&derivative_points(points, q), t)
}

/// Power-basis coefficients `a_j = p^(j)(0) / j!`.
pub fn power_coeffs(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = points.len() - 1;
    let mut fact = 1.0;
    (0..=n)
        .map(|j| {
            if j > 0 {
                fact *= j as f64;
            }
            derivative_at(points, 0.0, j)
                .into_iter()
                .map(|v| v / fact)
                .collect()
        })
        .collect()
}

/// Horner evaluation of one axis of power-basis coefficients.
pub fn horner(coeffs: &[f64], t: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c)
}

/// `exp(A t)` for nilpotent `A` by the terminating series.
pub fn expm_nilpotent(a: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    let n = a.nrows();
    let mut out = DMatrix::identity(n, n);
    let mut term = DMatrix::identity(n, n);
    for k in 1..=n {
        term = &term * a * (t / k as f64);
        if term.amax() == 0.0 {
            break;
        }
        out += &term;
    }
    out
}

/// Vertices of `{x : A x <= b}` in the plane by intersecting every pair of
/// facet lines and keeping the feasible points.
pub fn polygon_vertices(a: &DMatrix<f64>, b: &DVector<f64>) -> Vec<[f64; 2]> {
    let m = a.nrows();
    let mut out: Vec<[f64; 2]> = Vec::new();
    for i in 0..m {
        for j in i + 1..m {
            let det = a[(i, 0)] * a[(j, 1)] - a[(i, 1)] * a[(j, 0)];
            if det.abs() < 1e-12 {
                continue;
            }
            let x = (b[i] * a[(j, 1)] - a[(i, 1)] * b[j]) / det;
            let y = (a[(i, 0)] * b[j] - b[i] * a[(j, 0)]) / det;
            let feasible = (0..m).all(|k| a[(k, 0)] * x + a[(k, 1)] * y <= b[k] + 1e-9);
            if feasible && !out.iter().any(|p| (p[0] - x).abs() + (p[1] - y).abs() < 1e-12) {
                out.push([x, y]);
            }
        }
    }
    out
}

/// Random convex polygon around `center`: `m` facets with jittered angles.
pub fn random_polygon(rng: &mut ChaCha8Rng, center: [f64; 2], m: usize) -> Polytope {
    let mut a = DMatrix::zeros(m, 2);
    let mut b = DVector::zeros(m);
    for i in 0..m {
        let theta = std::f64::consts::TAU * (i as f64 + rng.random_range(-0.3..0.3)) / m as f64;
        let (s, c) = theta.sin_cos();
        a[(i, 0)] = c;
        a[(i, 1)] = s;
        b[i] = c * center[0] + s * center[1] + rng.random_range(1.0..3.0);
    }
    Polytope::new(a, b).expect("unit normals")
}

/// Cubic with every control point within `radius` of `center`.
pub fn random_cubic(rng: &mut ChaCha8Rng, center: [f64; 2], radius: f64) -> ControlPoints {
    let pts: Vec<Vec<f64>> = (0..4)
        .map(|_| {
            let r = radius * rng.random_range(0.0f64..1.0).sqrt();
            let th = rng.random_range(0.0..std::f64::consts::TAU);
            vec![center[0] + r * th.cos(), center[1] + r * th.sin()]
        })
        .collect();
    ControlPoints::from_points(&pts).unwrap()
}

pub fn points_of(cp: &ControlPoints) -> Vec<Vec<f64>> {
    (0..=cp.degree())
        .map(|i| cp.point(i).iter().copied().collect())
        .collect()
}

/// Every reference state with one derivative control point chosen per
/// order, laid out axis-major with the derivative order fastest.
pub fn product_vertices(points: &[Vec<f64>]) -> Vec<DVector<f64>> {
    let n = points.len() - 1;
    let d = points[0].len();
    let per_order: Vec<Vec<Vec<f64>>> = (0..=n).map(|q| derivative_points(points, q)).collect();
    let mut out = vec![DVector::zeros(d * (n + 1))];
    for (q, choices) in per_order.iter().enumerate() {
        let mut next = Vec::new();
        for partial in &out {
            for c in choices {
                let mut v = partial.clone();
                for k in 0..d {
                    v[k * (n + 1) + q] = c[k];
                }
                next.push(v);
            }
        }
        out = next;
    }
    out
}

pub fn box_cell(id: &str, lo: [f64; 2], hi: [f64; 2], pts: &[[f64; 2]], successor: Option<&str>) -> Cell {
    Cell {
        id: id.into(),
        polytope: Polytope::axis_box(&lo, &hi).unwrap(),
        segment: ControlPoints::from_points(&pts.iter().map(|p| p.to_vec()).collect::<Vec<_>>()).unwrap(),
        successor: successor.map(Into::into),
    }
}

pub fn asset(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("assets").join(name)
}

/// Largest eigenvalue of `S - 2 mu M` for the stacked agent and reference,
/// assembled entry by entry from the plant and reference matrices.
#[allow(clippy::too_many_arguments)]
pub fn full_lmi_max_eig(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    a_p: &DMatrix<f64>,
    c_p: &DMatrix<f64>,
    k: &DMatrix<f64>,
    mu: f64,
) -> f64 {
    let (d, dp, dy) = (a.nrows(), a_p.nrows(), c.nrows());
    let dn = d + dp;
    let k_y = k.columns(0, dy);
    let k_p = k.columns(dy, dp);
    // x' = (A + B K_y C) x + B K_p x_p, x_p' = A_p x_p
    let mut f = DMatrix::zeros(dn, dn);
    f.view_mut((0, 0), (d, d)).copy_from(&(a + b * k_y * c));
    f.view_mut((0, d), (d, dp)).copy_from(&(b * k_p));
    f.view_mut((d, d), (dp, dp)).copy_from(a_p);
    // V = |C x - C_p x_p|^2 = z^T M z
    let mut e = DMatrix::zeros(dy, dn);
    e.view_mut((0, 0), (dy, d)).copy_from(c);
    e.view_mut((0, d), (dy, dp)).copy_from(&(-c_p));
    let m = e.transpose() * &e;
    let mf = &m * &f;
    let s = &mf + mf.transpose() - &m * (2.0 * mu);
    s.symmetric_eigen().eigenvalues.max()
}

/// Reference system written out by hand: `n+1` integrator chain per axis.
pub fn chain_reference(n: usize, dy: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let side = n + 1;
    let mut a_p = DMatrix::zeros(side * dy, side * dy);
    let mut c_p = DMatrix::zeros(dy, side * dy);
    for k in 0..dy {
        for i in 0..n {
            a_p[(k * side + i, k * side + i + 1)] = 1.0;
        }
        c_p[(k, k * side)] = 1.0;
    }
    (a_p, c_p)
}
