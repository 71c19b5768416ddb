//! Instance generators shared by the benchmarks.

use nalgebra::DMatrix;
use polyspline::{build_gram, compose, default_constants, fit, Cascade, Package, PointMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn points(rng: &mut ChaCha8Rng, rows: usize, dim: usize) -> PointMatrix {
    PointMatrix::new(DMatrix::from_fn(rows, dim, |_, _| rng.random_range(-1.0..1.0))).unwrap()
}

/// A ridge-fitted package with `k` random centers in `dim` dimensions and `m` outputs.
pub fn package(rng: &mut ChaCha8Rng, k: usize, dim: usize, m: usize) -> Package {
    let params = default_constants(0.001, 1e-3).unwrap();
    let centers = points(rng, k, dim);
    let targets = DMatrix::from_fn(k, m, |_, _| rng.random_range(-1.0..1.0));
    fit(&build_gram(&centers, &params).unwrap(), &targets).unwrap()
}

/// Cascade with the given layer widths and `k` centers per layer.
pub fn cascade(rng: &mut ChaCha8Rng, widths: &[usize], k: usize) -> Cascade {
    let layers = widths.windows(2).map(|w| package(rng, k, w[0], w[1])).collect();
    compose(layers).unwrap()
}
