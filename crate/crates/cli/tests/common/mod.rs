#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nalgebra::DMatrix;
use polyspline::{build_gram, compose, default_constants, fit, Cascade, KernelParams, Package, PointMatrix};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_polyspline"))
}

pub fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("spawn polyspline")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

/// `key=value` lookup in command output.
pub fn field(out: &str, key: &str) -> Option<String> {
    out.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")).map(str::to_owned))
}

pub fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(lo..hi))
}

/// Rejection-sampled points in `[-1, 1]^n` (stretched for crowded 1-D sets)
/// with pairwise distance at least `min_dist`.
pub fn separated_points(rng: &mut ChaCha8Rng, k: usize, n: usize, min_dist: f64) -> PointMatrix {
    let half = if n == 1 { (k as f64 * min_dist * 2.0).max(1.0) } else { 1.0 };
    let mut pts: Vec<Vec<f64>> = Vec::with_capacity(k);
    while pts.len() < k {
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(-half..half)).collect();
        let ok = pts.iter().all(|q| {
            q.iter().zip(&p).map(|(a, b)| (a - b).powi(2)).sum::<f64>() >= min_dist * min_dist
        });
        if ok {
            pts.push(p);
        }
    }
    PointMatrix::from_rows(&pts).unwrap()
}

/// A package fitted to random targets in `[-1, 1]` over well-separated centers.
pub fn fitted_package(
    rng: &mut ChaCha8Rng,
    k: usize,
    n: usize,
    m: usize,
    params: &KernelParams,
) -> Package {
    let centers = separated_points(rng, k, n, 0.05);
    let targets = uniform(rng, k, m, -1.0, 1.0);
    fit(&build_gram(&centers, params).unwrap(), &targets).unwrap()
}

/// Random cascade with the given layer widths, e.g. `[4, 3, 2, 1]`.
pub fn random_cascade(rng: &mut ChaCha8Rng, widths: &[usize], max_k: usize, omega0: f64) -> Cascade {
    let params = default_constants(omega0, 0.0).unwrap();
    let layers = widths
        .windows(2)
        .map(|w| {
            let k = rng.random_range(3..=max_k);
            fitted_package(rng, k, w[0], w[1], &params)
        })
        .collect();
    compose(layers).unwrap()
}

pub fn write_csv(path: &Path, m: &DMatrix<f64>) {
    let mut buf = Vec::new();
    polyspline::persistence::write_matrix_csv(&mut buf, m).unwrap();
    std::fs::write(path, buf).unwrap();
}

pub fn read_csv(path: &Path, cols: usize) -> DMatrix<f64> {
    polyspline::load_dataset(path, cols, 0, false)
        .unwrap()
        .features
        .into_inner()
}
