//! Brute-force reference implementations for tests and gradient checks.
//!
//! Nothing here goes through the batched distance or kernel-matrix paths; the
//! only shared piece is the scalar [`kernel_value`].

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::PointMatrix;
use crate::kernel::kernel_value;
use crate::package::{GradientBatch, Package};

/// Central-difference settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdConfig {
    pub step: f64,
    pub rel_tol: f64,
    /// Entries whose magnitude is below this are compared absolutely.
    pub abs_floor: f64,
}

impl Default for FdConfig {
    fn default() -> Self {
        FdConfig {
            step: 1e-5,
            rel_tol: 1e-5,
            abs_floor: 1e-8,
        }
    }
}

impl FdConfig {
    pub fn with_step(step: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::Domain {
                what: "finite-difference step must be positive",
                value: step,
            });
        }
        Ok(FdConfig {
            step,
            ..Self::default()
        })
    }
}

/// `f_t(x) = sum_p lambda_pt k(||c_p - x||^2)` by explicit loops.
pub fn eval_scalar(package: &Package, x: &[f64]) -> Result<Vec<f64>> {
    let c = package.constellation();
    if x.len() != c.dim() {
        return Err(Error::dims("eval_scalar point", c.dim(), x.len()));
    }
    let lambda = package.lambda();
    let mut out = vec![0.0; package.output_dim()];
    for p in 0..c.rows() {
        let mut sq = 0.0;
        for (u, xu) in x.iter().enumerate() {
            let d = c[(p, u)] - xu;
            sq += d * d;
        }
        let k = kernel_value(sq, package.params())?;
        for (t, o) in out.iter_mut().enumerate() {
            *o += lambda[(p, t)] * k;
        }
    }
    Ok(out)
}

/// Squared distances by nested loops over rows and coordinates.
pub fn brute_sq_dist(x: &PointMatrix, c: &PointMatrix) -> Result<DMatrix<f64>> {
    if x.dim() != c.dim() {
        return Err(Error::dims("brute_sq_dist (point dimension)", c.dim(), x.dim()));
    }
    let mut out = DMatrix::zeros(x.rows(), c.rows());
    for i in 0..x.rows() {
        for p in 0..c.rows() {
            let mut s = 0.0;
            for u in 0..x.dim() {
                let d = c[(p, u)] - x[(i, u)];
                s += d * d;
            }
            out[(i, p)] = s;
        }
    }
    Ok(out)
}

/// Central differences of a per-row scalar map: entry `(i, j)` is
/// `(l_i(x + h e_ij) - l_i(x - h e_ij)) / 2h`.
///
/// `scalar_map` must return one value per row of its argument.
pub fn fd_gradient<F>(scalar_map: F, x: &PointMatrix, cfg: &FdConfig) -> Result<GradientBatch>
where
    F: Fn(&PointMatrix) -> Result<DVector<f64>>,
{
    let h = cfg.step;
    let mut grad = DMatrix::zeros(x.rows(), x.dim());
    for j in 0..x.dim() {
        let mut up = x.as_matrix().clone();
        let mut down = x.as_matrix().clone();
        for i in 0..x.rows() {
            up[(i, j)] += h;
            down[(i, j)] -= h;
        }
        // rows are independent, so one perturbed batch per column suffices
        let lu = scalar_map(&PointMatrix::new(up)?)?;
        let ld = scalar_map(&PointMatrix::new(down)?)?;
        if lu.len() != x.rows() || ld.len() != x.rows() {
            return Err(Error::dims("fd_gradient scalar map output", x.rows(), lu.len()));
        }
        for i in 0..x.rows() {
            if !(lu[i].is_finite() && ld[i].is_finite()) {
                return Err(Error::NonFinite("finite-difference function value"));
            }
            grad[(i, j)] = (lu[i] - ld[i]) / (2.0 * h);
        }
    }
    GradientBatch::new(grad)
}

/// Outcome of comparing an analytic gradient with a numeric one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    /// Largest per-entry discrepancy, relative where the entry exceeds the
    /// absolute floor and scaled by `rel_tol / abs_floor` elsewhere.
    pub max_discrepancy: f64,
    /// `(row, col)` of the worst entry.
    pub worst: (usize, usize),
    pub passed: bool,
}

/// Entry `(a, n)` passes when `|a - n| <= rel_tol * max(|a|, |n|)`, or
/// `|a - n| <= abs_floor` for entries whose magnitude is under the floor.
pub fn compare_gradients(
    analytic: &GradientBatch,
    numeric: &GradientBatch,
    cfg: &FdConfig,
) -> Result<GradCheckReport> {
    if analytic.shape() != numeric.shape() {
        return Err(Error::dims(
            "gradient comparison",
            format!("{:?}", analytic.shape()),
            format!("{:?}", numeric.shape()),
        ));
    }
    let mut report = GradCheckReport {
        max_discrepancy: 0.0,
        worst: (0, 0),
        passed: true,
    };
    for i in 0..analytic.nrows() {
        for j in 0..analytic.ncols() {
            let a = analytic[(i, j)];
            let n = numeric[(i, j)];
            let mag = a.abs().max(n.abs());
            let diff = (a - n).abs();
            let d = if mag < cfg.abs_floor {
                diff * cfg.rel_tol / cfg.abs_floor
            } else {
                diff / mag
            };
            if !d.is_finite() {
                return Err(Error::NonFinite("gradient comparison"));
            }
            if d > report.max_discrepancy {
                report.max_discrepancy = d;
                report.worst = (i, j);
            }
        }
    }
    report.passed = report.max_discrepancy <= cfg.rel_tol;
    Ok(report)
}
