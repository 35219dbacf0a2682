use nalgebra::{DMatrix, DVector};

use crate::conic::{solve_lp, SolveStatus, SolverTolerances};
use crate::error::{Error, Result};

/// H-polytope `{x : A x <= b}` with unit-norm (outward) face normals.
#[derive(Debug, Clone, PartialEq)]
pub struct Polytope {
    a: DMatrix<f64>,
    b: DVector<f64>,
}

impl Polytope {
    /// Normalizes every row of `a` to unit length and rescales `b` with it.
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if a.nrows() != b.len() {
            return Err(Error::Dimension(format!(
                "{} face normals but {} offsets",
                a.nrows(),
                b.len()
            )));
        }
        if a.ncols() == 0 {
            return Err(Error::Dimension("polytope needs at least one dimension".into()));
        }
        let mut a = a;
        let mut b = b;
        for r in 0..a.nrows() {
            let norm = a.row(r).norm();
            if !(norm.is_finite() && norm > 0.0) || !b[r].is_finite() {
                return Err(Error::Domain(format!("face {r} has a degenerate normal")));
            }
            a.row_mut(r).unscale_mut(norm);
            b[r] /= norm;
        }
        Ok(Self { a, b })
    }

    /// Builds a polytope from rows as given, without normalization.
    pub fn from_raw(a: DMatrix<f64>, b: DVector<f64>) -> Self {
        Self { a, b }
    }

    /// Axis-aligned box `lo <= x <= hi`.
    pub fn axis_box(lo: &[f64], hi: &[f64]) -> Result<Self> {
        let d = lo.len();
        if hi.len() != d {
            return Err(Error::Dimension("box corners differ in dimension".into()));
        }
        let mut a = DMatrix::zeros(2 * d, d);
        let mut b = DVector::zeros(2 * d);
        for k in 0..d {
            a[(2 * k, k)] = 1.0;
            b[2 * k] = hi[k];
            a[(2 * k + 1, k)] = -1.0;
            b[2 * k + 1] = -lo[k];
        }
        Self::new(a, b)
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn dimension(&self) -> usize {
        self.a.ncols()
    }

    pub fn num_faces(&self) -> usize {
        self.a.nrows()
    }

    /// `A x <= b + tol` elementwise.
    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> Result<bool> {
        if x.len() != self.dimension() {
            return Err(Error::Dimension(format!(
                "point has {} entries, polytope lives in {} dimensions",
                x.len(),
                self.dimension()
            )));
        }
        Ok((&self.a * x - &self.b).iter().all(|&s| s <= tol))
    }

    /// Per-face slack `b - A x`; all nonnegative iff `x` is inside.
    pub fn slacks(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.b - &self.a * x
    }

    /// Stacked constraints of both polytopes.
    pub fn intersect(&self, other: &Polytope) -> Result<Polytope> {
        if self.dimension() != other.dimension() {
            return Err(Error::Dimension("intersecting polytopes of different dimension".into()));
        }
        let (n1, n2, d) = (self.num_faces(), other.num_faces(), self.dimension());
        let mut a = DMatrix::zeros(n1 + n2, d);
        a.view_mut((0, 0), (n1, d)).copy_from(&self.a);
        a.view_mut((n1, 0), (n2, d)).copy_from(&other.a);
        let mut b = DVector::zeros(n1 + n2);
        b.rows_mut(0, n1).copy_from(&self.b);
        b.rows_mut(n1, n2).copy_from(&other.b);
        Ok(Polytope { a, b })
    }

    /// Largest inscribed ball: `max r` s.t. `a_i.c + r |a_i| <= b_i`.
    ///
    /// A radius `<= 0` means the interior is empty.
    pub fn chebyshev_center(&self) -> Result<(DVector<f64>, f64)> {
        let d = self.dimension();
        let rows: Vec<Vec<f64>> = (0..self.num_faces())
            .map(|r| {
                let mut row: Vec<f64> = self.a.row(r).iter().copied().collect();
                row.push(self.a.row(r).norm());
                row
            })
            .collect();
        let mut objective = vec![0.0; d + 1];
        objective[d] = -1.0;
        let sol = solve_lp(&objective, &rows, self.b.as_slice(), SolverTolerances::default())?;
        match sol.status {
            s if s.is_optimal() => Ok((DVector::from_column_slice(&sol.x[..d]), sol.x[d])),
            SolveStatus::Unbounded => Err(Error::Unbounded),
            s => Err(Error::Solver(format!("Chebyshev LP ended {s} ({})", sol.detail))),
        }
    }

    /// Per-axis extent `(lo, hi)`.
    pub fn bounding_box(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let d = self.dimension();
        let rows: Vec<Vec<f64>> = (0..self.num_faces())
            .map(|r| self.a.row(r).iter().copied().collect())
            .collect();
        let mut lo = vec![0.0; d];
        let mut hi = vec![0.0; d];
        for k in 0..d {
            for (sign, out) in [(1.0, &mut lo), (-1.0, &mut hi)] {
                let mut c = vec![0.0; d];
                c[k] = sign;
                let sol = solve_lp(&c, &rows, self.b.as_slice(), SolverTolerances::default())?;
                match sol.status {
                    s if s.is_optimal() => out[k] = sol.x[k],
                    SolveStatus::Unbounded => return Err(Error::Unbounded),
                    s => return Err(Error::Solver(format!("bounding LP ended {s}"))),
                }
            }
        }
        Ok((lo, hi))
    }

    /// Vertices of a planar polytope in counter-clockwise order.
    pub fn vertices_2d(&self) -> Result<Vec<[f64; 2]>> {
        if self.dimension() != 2 {
            return Err(Error::Dimension("vertex enumeration is planar only".into()));
        }
        let n = self.num_faces();
        let mut verts: Vec<[f64; 2]> = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let (a1, b1, c1) = (self.a[(i, 0)], self.a[(i, 1)], self.b[i]);
                let (a2, b2, c2) = (self.a[(j, 0)], self.a[(j, 1)], self.b[j]);
                let det = a1 * b2 - a2 * b1;
                if det.abs() < 1e-12 {
                    continue;
                }
                let p = DVector::from_vec(vec![(c1 * b2 - c2 * b1) / det, (a1 * c2 - a2 * c1) / det]);
                if self.contains(&p, 1e-9)?
                    && !verts
                        .iter()
                        .any(|v| (v[0] - p[0]).abs() < 1e-9 && (v[1] - p[1]).abs() < 1e-9)
                {
                    verts.push([p[0], p[1]]);
                }
            }
        }
        if verts.is_empty() {
            return Ok(verts);
        }
        let cx = verts.iter().map(|v| v[0]).sum::<f64>() / verts.len() as f64;
        let cy = verts.iter().map(|v| v[1]).sum::<f64>() / verts.len() as f64;
        verts.sort_by(|p, q| {
            let ap = (p[1] - cy).atan2(p[0] - cx);
            let aq = (q[1] - cy).atan2(q[0] - cx);
            ap.total_cmp(&aq)
        });
        Ok(verts)
    }
}
