//! Packages of polyharmonic splines and cascades of packages.
//!
//! A [`Package`] holds `m` functions over one constellation of `k` centers,
//! all of the form `f_t(x) = sum_p lambda_pt k(c_p - x)` with the thin-plate
//! kernel `k(tau) = ||tau||^2 (ln ||tau|| - b) + c`. Their coefficients are
//! obtained from a single factorized Gram system. Packages evaluate whole
//! batches through squared-distance matrices and backpropagate gradients in
//! closed form, so they can be chained into a [`Cascade`].
//!
//! ```
//! use nalgebra::DMatrix;
//! use polyspline::{build_gram, default_constants, fit, PointMatrix};
//!
//! let centers = PointMatrix::from_row_slice(3, 1, &[0.0, 1.0, 2.0]).unwrap();
//! let params = default_constants(0.001, 0.0).unwrap();
//! let gram = build_gram(&centers, &params).unwrap();
//! let package = fit(&gram, &DMatrix::from_column_slice(3, 1, &[1.0, -1.0, 0.5])).unwrap();
//! let (y, _cache) = package.forward(&centers).unwrap();
//! assert!((y[(1, 0)] + 1.0).abs() < 1e-6);
//! ```

pub mod cascade;
pub mod error;
pub mod geometry;
pub mod kernel;
#[cfg(any(test, feature = "oracle"))]
pub mod oracle;
pub mod package;
pub mod persistence;

pub use cascade::{compose, init_output_gradient, Cascade, CascadeGradients, CascadeTrace};
pub use error::{Error, Result};
pub use geometry::{cross_sq_dist, self_sq_dist, squared_norms, PointMatrix};
pub use kernel::{
    default_constants, estimate_b, estimate_c, kernel_from_theta, kernel_matrix, kernel_value,
    theta_matrix, KernelParams, EULER_GAMMA,
};
pub use package::{
    build_gram, fit, subsample_constellation, BackwardWorkspace, CacheMode, ForwardCache,
    GradientBatch, GramSystem, Package,
};
pub use persistence::{load_dataset, load_model, save_model, Dataset, ModelFile};
