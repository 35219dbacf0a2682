//! Bernstein-basis polynomial segments and the autonomous reference system
//! whose output reproduces them.
//!
//! A segment is `p(t) = sum_i P_i b_{i,n}(t)` for `t` in `[0, 1]`, where the
//! columns `P_i` of a `d x (n+1)` matrix are the control points. The same curve
//! in the monomial basis is `p(t) = sum_i a_i t^i` with `A = P D`.
//!
//! The reference system is a chain of integrators per output axis: with
//! `x_p(0)_i = a_i * i!` its first state entry traces `p(t)` exactly, and entry
//! `i` equals `p^(i)(t)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Grid spacing used by [`closest_parameter`] unless a caller overrides it.
pub const DEFAULT_CLOSEST_RESOLUTION: f64 = 1e-3;

/// Control points of one polynomial segment, one column per point.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlPoints {
    points: DMatrix<f64>,
}

impl ControlPoints {
    pub fn new(points: DMatrix<f64>) -> Result<Self> {
        if points.nrows() == 0 || points.ncols() == 0 {
            return Err(Error::Domain(
                "control points need at least one dimension and one point".into(),
            ));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("control points must be finite".into()));
        }
        Ok(Self { points })
    }

    /// Builds control points from a list of points, each of length `d`.
    pub fn from_points(points: &[Vec<f64>]) -> Result<Self> {
        let d = points.first().map(Vec::len).unwrap_or(0);
        if points.iter().any(|p| p.len() != d) {
            return Err(Error::Dimension(
                "all control points must have the same dimension".into(),
            ));
        }
        Self::new(DMatrix::from_fn(d, points.len(), |r, c| points[c][r]))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.points
    }

    pub fn degree(&self) -> usize {
        self.points.ncols() - 1
    }

    pub fn dimension(&self) -> usize {
        self.points.nrows()
    }

    /// Degree-zero segments describe a constant reference.
    pub fn is_constant(&self) -> bool {
        self.degree() == 0
    }

    pub fn point(&self, i: usize) -> DVector<f64> {
        self.points.column(i).into_owned()
    }

    pub fn first(&self) -> DVector<f64> {
        self.point(0)
    }

    pub fn last(&self) -> DVector<f64> {
        self.point(self.degree())
    }
}

/// Monomial coefficients; column `i` multiplies `t^i`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialCoeffs {
    coeffs: DMatrix<f64>,
}

impl PolynomialCoeffs {
    pub fn new(coeffs: DMatrix<f64>) -> Result<Self> {
        if coeffs.nrows() == 0 || coeffs.ncols() == 0 {
            return Err(Error::Domain("empty coefficient matrix".into()));
        }
        Ok(Self { coeffs })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.ncols() - 1
    }

    pub fn dimension(&self) -> usize {
        self.coeffs.nrows()
    }

    /// Evaluates `sum_i a_i t^i` (Horner).
    pub fn eval(&self, t: f64) -> DVector<f64> {
        let mut acc = DVector::zeros(self.dimension());
        for i in (0..=self.degree()).rev() {
            acc = acc * t + self.coeffs.column(i);
        }
        acc
    }

    /// Recovers control points through `P = A D^-1`.
    pub fn to_control_points(&self) -> Result<ControlPoints> {
        let d = basis_transform(self.degree()).map(|v| v as f64);
        let inv = d
            .try_inverse()
            .ok_or_else(|| Error::Domain("basis transform is singular".into()))?;
        ControlPoints::new(&self.coeffs * inv)
    }
}

pub fn binomial(n: usize, k: usize) -> i64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: i64 = 1;
    for i in 0..k {
        acc = acc * (n - i) as i64 / (i + 1) as i64;
    }
    acc
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|v| v as f64).product()
}

/// Values of the `n + 1` Bernstein polynomials of degree `n` at `t`.
pub fn bernstein_basis(n: usize, t: f64) -> Result<DVector<f64>> {
    check_parameter(t)?;
    let s = 1.0 - t;
    Ok(DVector::from_fn(n + 1, |i, _| {
        binomial(n, i) as f64 * t.powi(i as i32) * s.powi((n - i) as i32)
    }))
}

fn check_parameter(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Domain(format!(
            "spline parameter {t} outside [0, 1]"
        )));
    }
    Ok(())
}

/// Integer matrix `D` with `stack(b_{i,n}(t)) = D stack(t^j)`.
///
/// Row `i` holds the monomial expansion of `b_{i,n}`:
/// `D[i][j] = (-1)^(j-i) C(n,i) C(n-i, j-i)` for `j >= i`, zero below.
pub fn basis_transform(n: usize) -> DMatrix<i64> {
    DMatrix::from_fn(n + 1, n + 1, |i, j| {
        if j < i {
            0
        } else {
            let sign = if (j - i) % 2 == 0 { 1 } else { -1 };
            sign * binomial(n, i) * binomial(n - i, j - i)
        }
    })
}

/// `A = P D`.
pub fn coeffs_from_control_points(points: &ControlPoints) -> PolynomialCoeffs {
    let d = basis_transform(points.degree()).map(|v| v as f64);
    PolynomialCoeffs {
        coeffs: points.matrix() * d,
    }
}

/// One-step derivative matrix `H_n = n([-I; 0] + [0; I])`, shape `(n+1) x n`.
fn derivative_step(n: usize) -> DMatrix<i64> {
    let n_i = n as i64;
    DMatrix::from_fn(n + 1, n, |r, c| {
        if r == c {
            -n_i
        } else if r == c + 1 {
            n_i
        } else {
            0
        }
    })
}

/// `H_{n,q} = H_n H_{n-1} ... H_{n-q+1}`, so that `b_n^(q)(t) = H_{n,q} b_{n-q}(t)`.
///
/// `q = 0` yields the identity.
pub fn derivative_matrix(n: usize, q: usize) -> Result<DMatrix<i64>> {
    if q > n {
        return Err(Error::Domain(format!(
            "derivative order {q} exceeds polynomial degree {n}"
        )));
    }
    let mut acc = DMatrix::<i64>::identity(n + 1, n + 1);
    for m in ((n - q + 1)..=n).rev() {
        acc *= derivative_step(m);
    }
    Ok(acc)
}

/// `p^(q)(t) = P H_{n,q} b_{n-q}(t)`.
pub fn eval(points: &ControlPoints, t: f64, q: usize) -> Result<DVector<f64>> {
    let n = points.degree();
    let h = derivative_matrix(n, q)?.map(|v| v as f64);
    let basis = bernstein_basis(n - q, t)?;
    Ok(points.matrix() * h * basis)
}

/// Hull vertices of every derivative: column `j` of `vertices(q)` is a
/// control point of `p^(q)`, and `p^(q)(t)` stays in their convex hull.
#[derive(Debug, Clone, PartialEq)]
pub struct HullBounds {
    vertices: Vec<DMatrix<f64>>,
}

impl HullBounds {
    pub fn degree(&self) -> usize {
        self.vertices.len() - 1
    }

    pub fn dimension(&self) -> usize {
        self.vertices[0].nrows()
    }

    /// `P H_{n,q}`, shape `d x (n - q + 1)`.
    pub fn vertices(&self, q: usize) -> &DMatrix<f64> {
        &self.vertices[q]
    }

    pub fn all(&self) -> &[DMatrix<f64>] {
        &self.vertices
    }

    /// Every vertex of the product of hulls (one column choice per order),
    /// laid out as a reference state: axis-major, `q` fastest.
    pub fn reference_vertices(&self) -> Vec<DVector<f64>> {
        let n = self.degree();
        let d = self.dimension();
        let counts: Vec<usize> = self.vertices.iter().map(|v| v.ncols()).collect();
        let total: usize = counts.iter().product();
        let mut out = Vec::with_capacity(total);
        let mut choice = vec![0usize; n + 1];
        for _ in 0..total {
            let mut v = DVector::zeros(d * (n + 1));
            for (q, &j) in choice.iter().enumerate() {
                for k in 0..d {
                    v[k * (n + 1) + q] = self.vertices[q][(k, j)];
                }
            }
            out.push(v);
            for (q, c) in choice.iter_mut().enumerate() {
                *c += 1;
                if *c < counts[q] {
                    break;
                }
                *c = 0;
            }
        }
        out
    }
}

pub fn hull_bounds(points: &ControlPoints) -> HullBounds {
    let n = points.degree();
    let vertices = (0..=n)
        .map(|q| {
            let h = derivative_matrix(n, q)
                .expect("order within degree")
                .map(|v| v as f64);
            points.matrix() * h
        })
        .collect();
    HullBounds { vertices }
}

/// Autonomous system `x_p' = A_p x_p`, `y_p = C_p x_p`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSystem {
    pub a_p: DMatrix<f64>,
    pub c_p: DMatrix<f64>,
    pub x_p0: DVector<f64>,
    pub degree: usize,
    pub outputs: usize,
}

impl ReferenceSystem {
    pub fn state_dim(&self) -> usize {
        (self.degree + 1) * self.outputs
    }

    /// Same system in wall time when one unit of spline parameter takes
    /// `time_scale` seconds: `x_p' = A_p x_p / T`.
    pub fn time_scaled(&self, time_scale: f64) -> Self {
        Self {
            a_p: &self.a_p / time_scale,
            ..self.clone()
        }
    }

    pub fn output(&self, x_p: &DVector<f64>) -> DVector<f64> {
        &self.c_p * x_p
    }

    /// Index of derivative order `q` of axis `k` inside the state vector.
    pub fn index(&self, axis: usize, q: usize) -> usize {
        axis * (self.degree + 1) + q
    }
}

/// Shift block of side `n + 1`: ones on the first superdiagonal.
fn shift_block(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n + 1, n + 1, |r, c| if c == r + 1 { 1.0 } else { 0.0 })
}

pub fn build_reference(coeffs: &PolynomialCoeffs) -> ReferenceSystem {
    let n = coeffs.degree();
    let dy = coeffs.dimension();
    let side = n + 1;
    let block = shift_block(n);
    let mut a_p = DMatrix::zeros(side * dy, side * dy);
    let mut c_p = DMatrix::zeros(dy, side * dy);
    let mut x_p0 = DVector::zeros(side * dy);
    for k in 0..dy {
        a_p.view_mut((k * side, k * side), (side, side))
            .copy_from(&block);
        c_p[(k, k * side)] = 1.0;
        for i in 0..side {
            x_p0[k * side + i] = coeffs.matrix()[(k, i)] * factorial(i);
        }
    }
    ReferenceSystem {
        a_p,
        c_p,
        x_p0,
        degree: n,
        outputs: dy,
    }
}

/// Reference state on the curve at parameter `t`: entry `(k, i)` is `p_k^(i)(t)`.
pub fn reference_state_at(
    reference: &ReferenceSystem,
    points: &ControlPoints,
    t: f64,
) -> Result<DVector<f64>> {
    if points.degree() != reference.degree || points.dimension() != reference.outputs {
        return Err(Error::Dimension(format!(
            "reference of degree {} with {} outputs does not match {}x{} control points",
            reference.degree,
            reference.outputs,
            points.dimension(),
            points.degree() + 1
        )));
    }
    let mut state = DVector::zeros(reference.state_dim());
    for q in 0..=reference.degree {
        let v = eval(points, t, q)?;
        for k in 0..reference.outputs {
            state[reference.index(k, q)] = v[k];
        }
    }
    Ok(state)
}

/// Parameter of the point on the segment closest to `point`.
///
/// A uniform grid with the given spacing picks the global basin and Newton's
/// method on `|p(t) - point|^2 / 2` polishes it inside `[0, 1]`.
pub fn closest_parameter(points: &ControlPoints, point: &DVector<f64>) -> Result<f64> {
    closest_parameter_with(points, point, DEFAULT_CLOSEST_RESOLUTION)
}

pub fn closest_parameter_with(
    points: &ControlPoints,
    point: &DVector<f64>,
    resolution: f64,
) -> Result<f64> {
    if point.len() != points.dimension() {
        return Err(Error::Dimension(format!(
            "point has {} entries, segment lives in {} dimensions",
            point.len(),
            points.dimension()
        )));
    }
    if !(resolution > 0.0 && resolution <= 1.0) {
        return Err(Error::Domain(format!(
            "grid resolution {resolution} must lie in (0, 1]"
        )));
    }
    if points.is_constant() {
        return Ok(0.0);
    }
    let coeffs = coeffs_from_control_points(points);
    let velocity = derivative_coeffs(&coeffs);
    let accel = derivative_coeffs(&velocity);
    let cost = |t: f64| (coeffs.eval(t) - point).norm_squared();

    let steps = (1.0 / resolution).ceil() as usize;
    let (mut best_t, mut best_cost) = (0.0, f64::INFINITY);
    for i in 0..=steps {
        let t = (i as f64 / steps as f64).min(1.0);
        let c = cost(t);
        if c < best_cost {
            best_t = t;
            best_cost = c;
        }
    }

    let mut t = best_t;
    for _ in 0..20 {
        let r = coeffs.eval(t) - point;
        let v = velocity.eval(t);
        let grad = r.dot(&v);
        let hess = v.norm_squared() + r.dot(&accel.eval(t));
        if hess <= 0.0 {
            break;
        }
        let next = (t - grad / hess).clamp(0.0, 1.0);
        let next_cost = cost(next);
        if next_cost > best_cost {
            break;
        }
        let moved = (next - t).abs();
        t = next;
        best_cost = next_cost;
        if moved < 1e-14 {
            break;
        }
    }
    Ok(t)
}

fn derivative_coeffs(coeffs: &PolynomialCoeffs) -> PolynomialCoeffs {
    let n = coeffs.degree();
    let d = coeffs.dimension();
    if n == 0 {
        return PolynomialCoeffs {
            coeffs: DMatrix::zeros(d, 1),
        };
    }
    PolynomialCoeffs {
        coeffs: DMatrix::from_fn(d, n, |r, c| coeffs.matrix()[(r, c + 1)] * (c + 1) as f64),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    fn cubic(values: [f64; 4]) -> ControlPoints {
        ControlPoints::new(DMatrix::from_row_slice(1, 4, &values)).unwrap()
    }

    #[test]
    fn bernstein_endpoints_and_midpoint() {
        assert_eq!(bernstein_basis(2, 0.0).unwrap().as_slice(), &[1.0, 0.0, 0.0]);
        assert_eq!(bernstein_basis(1, 0.5).unwrap().as_slice(), &[0.5, 0.5]);
        let b3 = bernstein_basis(3, 0.5).unwrap();
        for (got, want) in b3.iter().zip([0.125, 0.375, 0.375, 0.125]) {
            assert_close(*got, want, 1e-15);
        }
    }

    #[test]
    fn bernstein_rejects_out_of_range_parameter() {
        assert!(matches!(bernstein_basis(3, 1.5), Err(Error::Domain(_))));
        assert!(matches!(bernstein_basis(3, -1e-9), Err(Error::Domain(_))));
        assert!(bernstein_basis(3, f64::NAN).is_err());
    }

    #[test]
    fn basis_transform_low_degrees() {
        assert_eq!(basis_transform(1), DMatrix::from_row_slice(2, 2, &[1, -1, 0, 1]));
        assert_eq!(basis_transform(0), DMatrix::from_element(1, 1, 1));
    }

    #[test]
    fn cubic_expansion_matches_hand_relations() {
        // Integer control points keep every product exact.
        let p = DMatrix::from_row_slice(1, 4, &[2i64, -5, 7, 11]);
        let a = &p * basis_transform(3);
        let (p0, p1, p2, p3) = (2, -5, 7, 11);
        assert_eq!(a[(0, 0)], p0);
        assert_eq!(a[(0, 1)], 3 * p1 - 3 * p0);
        assert_eq!(a[(0, 2)], 3 * p2 - 6 * p1 + 3 * p0);
        assert_eq!(a[(0, 3)], p3 - 3 * p2 + 3 * p1 - p0);
    }

    #[test]
    fn constant_control_points_give_constant_coefficients() {
        for n in 0..6 {
            let p = ControlPoints::new(DMatrix::from_element(2, n + 1, 3.25)).unwrap();
            let a = coeffs_from_control_points(&p);
            for c in 0..=n {
                let want = if c == 0 { 3.25 } else { 0.0 };
                assert_eq!(a.matrix()[(0, c)], want);
                assert_eq!(a.matrix()[(1, c)], want);
            }
        }
    }

    #[test]
    fn linear_segment_coefficients_and_round_trip() {
        let p = ControlPoints::new(DMatrix::from_row_slice(1, 2, &[0.0, 1.0])).unwrap();
        let a = coeffs_from_control_points(&p);
        assert_eq!(a.matrix().as_slice(), &[0.0, 1.0]);
        let back = a.to_control_points().unwrap();
        assert!((back.matrix() - p.matrix()).amax() < 1e-12);
    }

    #[test]
    fn derivative_matrices() {
        assert_eq!(derivative_matrix(1, 1).unwrap(), DMatrix::from_row_slice(2, 1, &[-1, 1]));
        assert_eq!(
            derivative_matrix(3, 1).unwrap(),
            DMatrix::from_row_slice(4, 3, &[-3, 0, 0, 3, -3, 0, 0, 3, -3, 0, 0, 3])
        );
        assert_eq!(derivative_matrix(3, 0).unwrap(), DMatrix::identity(4, 4));
        assert!(matches!(derivative_matrix(2, 3), Err(Error::Domain(_))));
    }

    #[test]
    fn third_derivative_of_cubic_is_six_leading_coefficients() {
        let p = cubic([0.3, -1.2, 4.0, 2.5]);
        let h = derivative_matrix(3, 3).unwrap().map(|v| v as f64);
        let top = p.matrix() * h;
        let a = coeffs_from_control_points(&p);
        assert_close(top[(0, 0)], 6.0 * a.matrix()[(0, 3)], 1e-12);
    }

    #[test]
    fn eval_endpoints_and_slope() {
        let p = cubic([1.0, -2.0, 0.5, 4.0]);
        assert_eq!(eval(&p, 0.0, 0).unwrap()[0], 1.0);
        assert_eq!(eval(&p, 1.0, 0).unwrap()[0], 4.0);
        let line = ControlPoints::new(DMatrix::from_row_slice(1, 2, &[0.0, 1.0])).unwrap();
        for t in [0.0, 0.3, 1.0] {
            assert_close(eval(&line, t, 1).unwrap()[0], 1.0, 1e-15);
        }
        assert!(eval(&p, 0.5, 4).is_err());
    }

    #[test]
    fn hull_vertices_of_step_cubic() {
        let hb = hull_bounds(&cubic([0.0, 0.0, 1.0, 1.0]));
        assert_eq!(hb.vertices(0).as_slice(), &[0.0, 0.0, 1.0, 1.0]);
        assert_eq!(hb.vertices(1).as_slice(), &[0.0, 3.0, 0.0]);
        assert_eq!(hb.reference_vertices().len(), 4 * 3 * 2);
    }

    #[test]
    fn reference_for_square() {
        let coeffs = PolynomialCoeffs::new(DMatrix::from_row_slice(1, 3, &[0.0, 0.0, 1.0])).unwrap();
        let r = build_reference(&coeffs);
        assert_eq!(r.x_p0.as_slice(), &[0.0, 0.0, 2.0]);
        let p = coeffs.to_control_points().unwrap();
        let s = reference_state_at(&r, &p, 0.5).unwrap();
        for (got, want) in s.iter().zip([0.25, 1.0, 2.0]) {
            assert_close(*got, want, 1e-12);
        }
        assert!((reference_state_at(&r, &p, 0.0).unwrap() - &r.x_p0).amax() < 1e-12);
    }

    #[test]
    fn reference_blocks_are_identical_per_axis() {
        let p = ControlPoints::new(DMatrix::from_row_slice(
            2,
            4,
            &[0.0, 1.0, 2.0, 3.0, 1.0, 1.5, -0.5, 0.0],
        ))
        .unwrap();
        let r = build_reference(&coeffs_from_control_points(&p));
        let b0 = r.a_p.view((0, 0), (4, 4)).into_owned();
        let b1 = r.a_p.view((4, 4), (4, 4)).into_owned();
        assert_eq!(b0, b1);
        assert_eq!(b0, shift_block(3));
        assert!(r.a_p.view((0, 4), (4, 4)).iter().all(|v| *v == 0.0));
        assert_eq!(r.c_p[(0, 0)], 1.0);
        assert_eq!(r.c_p[(1, 4)], 1.0);
        assert_eq!(r.c_p.sum(), 2.0);
    }

    #[test]
    fn constant_reference() {
        let coeffs = PolynomialCoeffs::new(DMatrix::from_element(1, 1, 2.0)).unwrap();
        let r = build_reference(&coeffs);
        assert_eq!(r.a_p, DMatrix::zeros(1, 1));
        assert_eq!(r.x_p0.as_slice(), &[2.0]);
    }

    #[test]
    fn closest_parameter_cases() {
        let p = cubic([0.0, 2.0, -1.0, 3.0]);
        let target = eval(&p, 0.3, 0).unwrap();
        let t = closest_parameter(&p, &target).unwrap();
        assert_close(t, 0.3, 1e-3);

        let line = ControlPoints::new(DMatrix::from_row_slice(1, 2, &[0.0, 1.0])).unwrap();
        assert_eq!(closest_parameter(&line, &DVector::from_element(1, 2.0)).unwrap(), 1.0);
        assert_eq!(closest_parameter(&line, &DVector::from_element(1, -4.0)).unwrap(), 0.0);
        assert!(closest_parameter(&line, &DVector::zeros(2)).is_err());
    }
}
