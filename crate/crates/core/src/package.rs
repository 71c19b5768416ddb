//! Packages of polyharmonic splines.
//!
//! A package is a family of `m` functions sharing one constellation of `k`
//! centers. Each function is `f_t(x) = sum_p lambda_pt k(c_p - x)`, and the
//! coefficient matrix comes from one regularized Gram system
//! `(K_c + sigma2 I) Lambda = Y*` that is factorized once and reused for every
//! output column.

use std::ops::Deref;

use nalgebra::{DMatrix, Dyn, RowDVector, LU};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{cross_sq_dist, self_sq_dist, PointMatrix};
use crate::kernel::{kernel_matrix, theta_matrix, KernelParams};

/// Systems whose reciprocal condition estimate falls below this are rejected.
pub const SINGULAR_RCOND: f64 = f64::EPSILON;

/// Factorized `K_c + sigma2 I` over a fixed constellation.
///
/// `K_c = A + c 1 1^T`, where `A` holds the distance-dependent part of the
/// kernel. Adding `c` (typically ~1e6) to every entry rounds away the low
/// digits of `A`, so when `c != 0` the solver factorizes the equivalent
/// bordered system
///
/// ```text
/// [ A + sigma2 I   1    ] [ Lambda ]   [ Y* ]
/// [ 1^T           -1/c  ] [   mu   ] = [ 0  ]
/// ```
///
/// whose first block row reads `(A + c 1 1^T + sigma2 I) Lambda = Y*`.
#[derive(Debug, Clone)]
pub struct GramSystem {
    constellation: PointMatrix,
    params: KernelParams,
    system: DMatrix<f64>,
    lu: LU<f64, Dyn, Dyn>,
    bordered: bool,
    rcond: f64,
}

/// Assembles and factorizes the regularized Gram matrix of `constellation`.
///
/// Uses LU with partial pivoting: the matrix is symmetric but the large
/// constant `c` makes it indefinite in general.
pub fn build_gram(constellation: &PointMatrix, params: &KernelParams) -> Result<GramSystem> {
    let k = constellation.rows();
    let sq = self_sq_dist(constellation);
    let mut system = kernel_matrix(&sq, params)?;
    for i in 0..k {
        system[(i, i)] += params.sigma2();
    }

    let constant = params.scale() * params.c();
    let bordered = constant != 0.0;
    let factorized = if bordered {
        let mut m = DMatrix::zeros(k + 1, k + 1);
        for j in 0..k {
            for i in 0..k {
                m[(i, j)] = params.eval_centered(sq[(i, j)]);
            }
            m[(j, j)] += params.sigma2();
            m[(k, j)] = 1.0;
            m[(j, k)] = 1.0;
        }
        m[(k, k)] = -1.0 / constant;
        m
    } else {
        system.clone()
    };

    let lu = factorized.clone().lu();
    let rcond = match lu.try_inverse() {
        Some(inv) => {
            let r = 1.0 / (one_norm(&factorized) * one_norm(&inv));
            if r.is_finite() {
                r
            } else {
                0.0
            }
        }
        None => 0.0,
    };
    if !(rcond >= SINGULAR_RCOND) {
        return Err(Error::Singular {
            rcond,
            k,
            sigma2: params.sigma2(),
        });
    }
    Ok(GramSystem {
        constellation: constellation.clone(),
        params: *params,
        system,
        lu,
        bordered,
        rcond,
    })
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

impl GramSystem {
    pub fn constellation(&self) -> &PointMatrix {
        &self.constellation
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    /// Number of centers.
    pub fn k(&self) -> usize {
        self.constellation.rows()
    }

    /// The assembled `K_c + sigma2 I`.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.system
    }

    /// Reciprocal 1-norm condition number of the factorized system.
    pub fn rcond(&self) -> f64 {
        self.rcond
    }

    /// Solves `(K_c + sigma2 I) X = rhs`, column by column.
    pub fn solve(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let k = self.k();
        if rhs.nrows() != k {
            return Err(Error::dims("Gram solve (rows)", k, rhs.nrows()));
        }
        let singular = || Error::Singular {
            rcond: self.rcond,
            k,
            sigma2: self.params.sigma2(),
        };
        if self.bordered {
            let padded = rhs.clone().insert_row(k, 0.0);
            let full = self.lu.solve(&padded).ok_or_else(singular)?;
            Ok(full.remove_row(k))
        } else {
            self.lu.solve(rhs).ok_or_else(singular)
        }
    }

    /// Like [`solve`](Self::solve), also returning the constant term
    /// `scale * c * 1^T X` of each column. With the bordered factorization it
    /// comes out of the solve itself instead of a cancelling sum over `X`.
    pub fn solve_with_offset(&self, rhs: &DMatrix<f64>) -> Result<(DMatrix<f64>, RowDVector<f64>)> {
        let k = self.k();
        if !self.bordered || rhs.nrows() != k {
            let x = self.solve(rhs)?;
            let offset = x.row_sum() * (self.params.scale() * self.params.c());
            return Ok((x, offset));
        }
        let padded = rhs.clone().insert_row(k, 0.0);
        let full = self.lu.solve(&padded).ok_or(Error::Singular {
            rcond: self.rcond,
            k,
            sigma2: self.params.sigma2(),
        })?;
        let offset = full.row(k).into_owned();
        Ok((full.remove_row(k), offset))
    }

    /// Materializes `U = (K_c + sigma2 I)^-1`. Only useful for inspection.
    pub fn inverse(&self) -> DMatrix<f64> {
        self.solve(&DMatrix::identity(self.k(), self.k()))
            .expect("factorization was checked at construction")
    }
}

/// Solves for the coefficients that reproduce `targets` (`k x m`) at the centers.
pub fn fit(gram: &GramSystem, targets: &DMatrix<f64>) -> Result<Package> {
    if targets.nrows() != gram.k() || targets.ncols() == 0 {
        return Err(Error::dims(
            "fit targets",
            format!("{} x m (m >= 1)", gram.k()),
            format!("{} x {}", targets.nrows(), targets.ncols()),
        ));
    }
    if targets.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("fit targets"));
    }
    let (lambda, offset) = gram.solve_with_offset(targets)?;
    Package::with_offset(gram.constellation.clone(), lambda, gram.params, offset)
}

/// Picks `k` distinct rows of `data` uniformly at random, returned in ascending order.
pub fn subsample_constellation(
    data: &PointMatrix,
    k: usize,
    seed: u64,
) -> Result<(PointMatrix, Vec<usize>)> {
    if k == 0 || k > data.rows() {
        return Err(Error::dims(
            "constellation subsample size",
            format!("1..={}", data.rows()),
            k,
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = index::sample(&mut rng, data.rows(), k).into_vec();
    rows.sort_unstable();
    let picked = data.select_rows(rows.iter());
    Ok((PointMatrix::new(picked)?, rows))
}

/// A fitted package: constellation, coefficients and kernel constants.
#[derive(Debug, Clone, PartialEq)]
pub struct Package {
    constellation: PointMatrix,
    lambda: DMatrix<f64>,
    params: KernelParams,
    offset: RowDVector<f64>,
}

impl Package {
    /// Assembles a package from stored parts, e.g. when loading a model.
    pub fn from_parts(
        constellation: PointMatrix,
        lambda: DMatrix<f64>,
        params: KernelParams,
    ) -> Result<Self> {
        if lambda.nrows() != constellation.rows() || lambda.ncols() == 0 {
            return Err(Error::dims(
                "package coefficients",
                format!("{} x m (m >= 1)", constellation.rows()),
                format!("{} x {}", lambda.nrows(), lambda.ncols()),
            ));
        }
        if lambda.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("package coefficients"));
        }
        let offset = lambda.row_sum() * (params.scale() * params.c());
        Ok(Package {
            constellation,
            lambda,
            params,
            offset,
        })
    }

    /// Like [`from_parts`](Self::from_parts) with a precomputed constant term
    /// `scale * c * 1^T Lambda`, which must agree with `lambda` up to rounding.
    pub fn with_offset(
        constellation: PointMatrix,
        lambda: DMatrix<f64>,
        params: KernelParams,
        offset: RowDVector<f64>,
    ) -> Result<Self> {
        let mut package = Package::from_parts(constellation, lambda, params)?;
        if offset.len() != package.output_dim() {
            return Err(Error::dims("package offset", package.output_dim(), offset.len()));
        }
        if offset.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("package offset"));
        }
        let sc = (params.scale() * params.c()).abs();
        for (t, (&given, &summed)) in offset.iter().zip(package.offset.iter()).enumerate() {
            let mass: f64 = package.lambda.column(t).iter().map(|v| v.abs()).sum();
            let tol = 1e-8 * (sc * mass + given.abs());
            if (given - summed).abs() > tol {
                return Err(Error::Contract(format!(
                    "offset {given} of output {t} disagrees with the coefficients ({summed})"
                )));
            }
        }
        package.offset = offset;
        Ok(package)
    }

    pub fn constellation(&self) -> &PointMatrix {
        &self.constellation
    }

    /// The `k x m` coefficient matrix.
    pub fn lambda(&self) -> &DMatrix<f64> {
        &self.lambda
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    /// The constant term `scale * c * 1^T Lambda` added to every output row.
    pub fn offset(&self) -> &RowDVector<f64> {
        &self.offset
    }

    pub fn centers(&self) -> usize {
        self.constellation.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.constellation.dim()
    }

    pub fn output_dim(&self) -> usize {
        self.lambda.ncols()
    }

    /// Evaluates the package on a batch, keeping the kernel block in the cache.
    pub fn forward(&self, x: &PointMatrix) -> Result<(DMatrix<f64>, ForwardCache)> {
        self.forward_with(x, CacheMode::Full)
    }

    /// Evaluates `Y = K_xc Lambda` for every row of `x`.
    pub fn forward_with(
        &self,
        x: &PointMatrix,
        mode: CacheMode,
    ) -> Result<(DMatrix<f64>, ForwardCache)> {
        if x.dim() != self.input_dim() {
            return Err(Error::dims("package input", self.input_dim(), x.dim()));
        }
        let sq_dists = cross_sq_dist(x, &self.constellation)?;
        // K Lambda = (K - c) Lambda + c 1 (1^T Lambda). The constant part is
        // identical for every row, so differences between nearby inputs keep
        // the precision of the small distance-dependent terms.
        let centered = sq_dists.map(|m| self.params.eval_centered(m));
        let mut y = &centered * &self.lambda;
        for mut row in y.row_iter_mut() {
            row += &self.offset;
        }
        let kernel = match mode {
            CacheMode::Full => Some(kernel_matrix(&sq_dists, &self.params)?),
            CacheMode::DistancesOnly => None,
        };
        let cache = ForwardCache {
            inputs: x.clone(),
            sq_dists,
            kernel,
        };
        Ok((y, cache))
    }

    /// Evaluates a single point; identical to a one-row batch.
    pub fn forward_point(&self, x: &[f64]) -> Result<RowDVector<f64>> {
        let point = PointMatrix::from_row_slice(1, x.len(), x)?;
        let (y, _) = self.forward_with(&point, CacheMode::DistancesOnly)?;
        Ok(y.row(0).into_owned())
    }

    fn check_backward(&self, cache: &ForwardCache, g_y: &GradientBatch) -> Result<()> {
        if cache.sq_dists.ncols() != self.centers() || cache.inputs.dim() != self.input_dim() {
            return Err(Error::dims(
                "forward cache",
                format!("k = {}, n = {}", self.centers(), self.input_dim()),
                format!("k = {}, n = {}", cache.sq_dists.ncols(), cache.inputs.dim()),
            ));
        }
        if g_y.shape() != (cache.rows(), self.output_dim()) {
            return Err(Error::dims(
                "output gradient",
                format!("{} x {}", cache.rows(), self.output_dim()),
                format!("{} x {}", g_y.nrows(), g_y.ncols()),
            ));
        }
        Ok(())
    }

    /// Propagates `dL/dY` to `dL/dX`:
    /// `G_X = X o ((Psi 1) 1^T) - Psi C` with `Psi = Theta o (G_Y Lambda^T)`.
    pub fn backward(&self, cache: &ForwardCache, g_y: &GradientBatch) -> Result<GradientBatch> {
        let work = BackwardWorkspace::compute(self, cache, g_y)?;
        let row_sums = work.psi.column_sum();
        let mut g_x = -(&work.psi * self.constellation.as_matrix());
        for (i, mut row) in g_x.row_iter_mut().enumerate() {
            let s = row_sums[i];
            for (u, v) in row.iter_mut().enumerate() {
                *v += cache.inputs[(i, u)] * s;
            }
        }
        GradientBatch::new(g_x)
    }

    /// `dL/dLambda = K_xc^T G_Y`, rebuilding `K_xc` when the cache does not hold it.
    pub fn backward_lambda(
        &self,
        cache: &ForwardCache,
        g_y: &GradientBatch,
    ) -> Result<DMatrix<f64>> {
        self.check_backward(cache, g_y)?;
        let g = match &cache.kernel {
            Some(kernel) => kernel.tr_mul(g_y.as_matrix()),
            None => kernel_matrix(&cache.sq_dists, &self.params)?.tr_mul(g_y.as_matrix()),
        };
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("coefficient gradient"));
        }
        Ok(g)
    }
}

/// What `forward_with` retains for the backward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CacheMode {
    /// Keep distances and the kernel block.
    #[default]
    Full,
    /// Keep distances only; the kernel block is rebuilt on demand.
    DistancesOnly,
}

/// Per-batch intermediates of a package forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: PointMatrix,
    sq_dists: DMatrix<f64>,
    kernel: Option<DMatrix<f64>>,
}

impl ForwardCache {
    pub fn inputs(&self) -> &PointMatrix {
        &self.inputs
    }

    /// `r x k` squared distances between batch rows and centers.
    pub fn sq_dists(&self) -> &DMatrix<f64> {
        &self.sq_dists
    }

    pub fn kernel(&self) -> Option<&DMatrix<f64>> {
        self.kernel.as_ref()
    }

    /// Batch size.
    pub fn rows(&self) -> usize {
        self.inputs.rows()
    }
}

/// A matrix of partial derivatives with one row per batch row.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBatch(DMatrix<f64>);

impl GradientBatch {
    pub fn new(grad: DMatrix<f64>) -> Result<Self> {
        if grad.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("gradient batch"));
        }
        Ok(GradientBatch(grad))
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        GradientBatch(DMatrix::zeros(rows, cols))
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }
}

impl Deref for GradientBatch {
    type Target = DMatrix<f64>;

    fn deref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// `Theta` and `Psi` for one backward step, both `r x k`.
#[derive(Debug, Clone)]
pub struct BackwardWorkspace {
    pub theta: DMatrix<f64>,
    pub psi: DMatrix<f64>,
}

impl BackwardWorkspace {
    pub fn compute(package: &Package, cache: &ForwardCache, g_y: &GradientBatch) -> Result<Self> {
        package.check_backward(cache, g_y)?;
        let theta = theta_matrix(&cache.sq_dists, &package.params)?;
        // the kernel scale multiplies every derivative
        let weights = (g_y.as_matrix() * package.lambda.transpose()) * package.params.scale();
        let psi = theta.component_mul(&weights);
        Ok(BackwardWorkspace { theta, psi })
    }
}
