//! Point sets and squared-distance matrices via the matrix law of cosines.

use std::ops::Deref;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A non-empty `r x n` matrix of finite reals whose rows are points in `R^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointMatrix(DMatrix<f64>);

impl PointMatrix {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::Empty("point matrix"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("point matrix"));
        }
        Ok(PointMatrix(data))
    }

    /// Builds a point matrix from row-major data.
    pub fn from_row_slice(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dims(
                "point matrix data",
                rows * cols,
                data.len(),
            ));
        }
        Self::new(DMatrix::from_row_slice(rows, cols, data))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::dims("point rows", n, bad.len()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::from_row_slice(rows.len(), n, &flat)
    }

    /// Number of points.
    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    /// Dimension of the ambient space.
    pub fn dim(&self) -> usize {
        self.0.ncols()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn row_vec(&self, i: usize) -> Vec<f64> {
        self.0.row(i).iter().copied().collect()
    }
}

impl Deref for PointMatrix {
    type Target = DMatrix<f64>;

    fn deref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

impl TryFrom<DMatrix<f64>> for PointMatrix {
    type Error = Error;

    fn try_from(value: DMatrix<f64>) -> Result<Self> {
        PointMatrix::new(value)
    }
}

/// Row-wise squared Euclidean norms, `(P o P) 1`.
pub fn squared_norms(points: &PointMatrix) -> DVector<f64> {
    points.component_mul(points).column_sum()
}

/// Symmetric `k x k` matrix of squared distances between the rows of `points`.
///
/// Negative cancellation noise is clamped to zero and the diagonal is exactly zero.
pub fn self_sq_dist(points: &PointMatrix) -> DMatrix<f64> {
    let k = points.rows();
    let norms = squared_norms(points);
    let gram = points.as_matrix() * points.transpose();
    let mut out = DMatrix::zeros(k, k);
    for j in 0..k {
        for i in 0..j {
            let v = (norms[i] + norms[j] - 2.0 * gram[(i, j)]).max(0.0);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

/// `r x k` matrix of squared distances between the rows of `x` and of `c`:
/// `N_x 1^T + 1 N_c^T - 2 X C^T`, clamped at zero.
pub fn cross_sq_dist(x: &PointMatrix, c: &PointMatrix) -> Result<DMatrix<f64>> {
    if x.dim() != c.dim() {
        return Err(Error::dims("cross_sq_dist (point dimension)", c.dim(), x.dim()));
    }
    let nx = squared_norms(x);
    let nc = squared_norms(c);
    let mut out = x.as_matrix() * c.transpose();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        for (i, v) in col.iter_mut().enumerate() {
            *v = (nx[i] + nc[j] - 2.0 * *v).max(0.0);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pm(rows: usize, cols: usize, data: &[f64]) -> PointMatrix {
        PointMatrix::from_row_slice(rows, cols, data).unwrap()
    }

    fn loop_sq_dist(x: &PointMatrix, c: &PointMatrix) -> DMatrix<f64> {
        DMatrix::from_fn(x.rows(), c.rows(), |i, p| {
            (0..x.dim()).map(|u| (x[(i, u)] - c[(p, u)]).powi(2)).sum()
        })
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn point_matrix_validation() {
        assert!(PointMatrix::new(DMatrix::zeros(0, 2)).is_err());
        assert!(PointMatrix::new(DMatrix::zeros(2, 0)).is_err());
        assert!(PointMatrix::new(DMatrix::from_element(1, 1, f64::NAN)).is_err());
        assert!(PointMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
    }

    #[test]
    fn norms() {
        assert_eq!(squared_norms(&pm(1, 2, &[0.0, 0.0]))[0], 0.0);
        assert_eq!(squared_norms(&pm(1, 2, &[3.0, 4.0]))[0], 25.0);
        let p = pm(4, 3, &[1.0, -2.0, 0.5, 3.0, 0.0, 1.0, -1.5, 2.5, 4.0, 0.1, 0.2, 0.3]);
        let n = squared_norms(&p);
        for i in 0..4 {
            let expected: f64 = (0..3).map(|u| p[(i, u)] * p[(i, u)]).sum();
            assert_eq!(n[i], expected);
        }
    }

    #[test]
    fn self_distances() {
        let m = self_sq_dist(&pm(2, 1, &[0.0, 3.0]));
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[0.0, 9.0, 9.0, 0.0]));
        assert_eq!(self_sq_dist(&pm(1, 3, &[1.0, 2.0, 3.0])), DMatrix::zeros(1, 1));

        let p = pm(5, 2, &[0.1, 0.2, -1.0, 3.0, 2.5, -0.7, 0.0, 0.0, 1.1, 1.2]);
        let m = self_sq_dist(&p);
        let oracle = loop_sq_dist(&p, &p);
        for i in 0..5 {
            assert_eq!(m[(i, i)], 0.0);
            for j in 0..5 {
                assert!(close(m[(i, j)], oracle[(i, j)], 1e-12));
            }
        }
    }

    #[test]
    fn cross_distances() {
        let m = cross_sq_dist(&pm(2, 1, &[0.0, 3.0]), &pm(2, 1, &[0.0, 4.0])).unwrap();
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[0.0, 16.0, 9.0, 1.0]));
        assert!(cross_sq_dist(&pm(1, 2, &[0.0, 0.0]), &pm(1, 3, &[0.0; 3])).is_err());

        let c = pm(3, 2, &[0.3, -0.4, 1.0, 1.0, -2.0, 0.5]);
        let cross = cross_sq_dist(&c, &c).unwrap();
        let own = self_sq_dist(&c);
        for i in 0..3 {
            for j in 0..3 {
                assert!(close(cross[(i, j)], own[(i, j)], 1e-14));
            }
        }
    }

    fn points(rows: std::ops::Range<usize>, dim: usize) -> impl Strategy<Value = PointMatrix> {
        rows.prop_flat_map(move |r| {
            prop::collection::vec(-5.0f64..5.0, r * dim)
                .prop_map(move |v| PointMatrix::from_row_slice(r, dim, &v).unwrap())
        })
    }

    proptest! {
        #[test]
        fn cross_matches_loops((x, c) in (1usize..5).prop_flat_map(|d| (points(1..8, d), points(1..6, d)))) {
            let m = cross_sq_dist(&x, &c).unwrap();
            let oracle = loop_sq_dist(&x, &c);
            let mt = cross_sq_dist(&c, &x).unwrap();
            for i in 0..x.rows() {
                for p in 0..c.rows() {
                    prop_assert!(m[(i, p)] >= 0.0);
                    prop_assert!(close(m[(i, p)], oracle[(i, p)], 1e-12));
                    prop_assert!(close(m[(i, p)], mt[(p, i)], 1e-15));
                }
            }
        }

        #[test]
        fn rigid_motion_invariance(
            (x, c) in (points(1..6, 3), points(1..6, 3)),
            shift in prop::collection::vec(-3.0f64..3.0, 3),
            angle in 0.0f64..std::f64::consts::TAU,
        ) {
            let rot = nalgebra::Rotation3::from_axis_angle(&nalgebra::Vector3::z_axis(), angle);
            let r = DMatrix::from_iterator(3, 3, rot.matrix().iter().copied());
            let t = nalgebra::RowDVector::from_vec(shift);
            let moved = |p: &PointMatrix| {
                let mut q = p.as_matrix() * r.transpose();
                for mut row in q.row_iter_mut() {
                    row += &t;
                }
                PointMatrix::new(q).unwrap()
            };
            let before = cross_sq_dist(&x, &c).unwrap();
            let after = cross_sq_dist(&moved(&x), &moved(&c)).unwrap();
            for (a, b) in before.iter().zip(after.iter()) {
                prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
            }
        }
    }
}
