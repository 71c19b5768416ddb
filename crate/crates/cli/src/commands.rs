use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use nalgebra::{DMatrix, DVector};
use polyspline::oracle::{compare_gradients, fd_gradient, FdConfig};
use polyspline::persistence::write_matrix_csv;
use polyspline::{
    build_gram, compose, default_constants, estimate_b, estimate_c, fit, load_dataset,
    load_model, save_model, subsample_constellation, GradientBatch, PointMatrix,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{ConstantsArgs, FitArgs, GradcheckArgs, InspectArgs, PredictArgs};

#[derive(Debug, Clone, PartialEq)]
enum ConstellationSource {
    Data,
    Subsample { k: usize, seed: u64 },
    File(PathBuf),
}

fn parse_source(s: &str) -> Result<ConstellationSource> {
    if s == "data" {
        return Ok(ConstellationSource::Data);
    }
    if let Some(rest) = s.strip_prefix("subsample:") {
        let (k, seed) = rest
            .split_once(':')
            .with_context(|| format!("expected subsample:<k>:<seed>, got {s:?}"))?;
        return Ok(ConstellationSource::Subsample {
            k: k.parse().with_context(|| format!("bad subsample size {k:?}"))?,
            seed: seed.parse().with_context(|| format!("bad subsample seed {seed:?}"))?,
        });
    }
    Ok(ConstellationSource::File(PathBuf::from(s)))
}

pub fn run_fit(args: &FitArgs) -> Result<bool> {
    let data = load_dataset(&args.data, args.features, args.targets_cols, args.has_header)
        .with_context(|| format!("loading {}", args.data.display()))?;
    let targets = data.targets.clone().expect("targets_cols >= 1");

    let (centers, prescribed) = match parse_source(&args.constellation)? {
        ConstellationSource::Data => (data.features.clone(), targets.clone()),
        ConstellationSource::Subsample { k, seed } => {
            let (centers, rows) = subsample_constellation(&data.features, k, seed)?;
            (centers, targets.select_rows(rows.iter()))
        }
        ConstellationSource::File(path) => {
            let c = load_dataset(&path, args.features, args.targets_cols, args.has_header)
                .with_context(|| format!("loading constellation {}", path.display()))?;
            let values = c.targets.expect("targets_cols >= 1");
            (c.features, values)
        }
    };

    let params = default_constants(args.omega0, args.sigma2)?;
    let gram = build_gram(&centers, &params).context("building the Gram system")?;
    let package = fit(&gram, &prescribed)?;
    let (pred, _) = package.forward(&data.features)?;
    let residual = (pred - &targets).amax();

    let cascade = compose(vec![package])?;
    save_model(&cascade, &args.out)?;

    let mut out = io::stdout().lock();
    writeln!(out, "k={}", centers.rows())?;
    writeln!(out, "n={}", centers.dim())?;
    writeln!(out, "m={}", targets.ncols())?;
    writeln!(out, "sigma2={}", params.sigma2())?;
    writeln!(out, "b={}", params.b())?;
    writeln!(out, "c={}", params.c())?;
    writeln!(out, "rcond={:e}", gram.rcond())?;
    writeln!(out, "max_abs_residual={residual:e}")?;
    Ok(true)
}

fn load_inputs(
    path: &Path,
    n_inputs: usize,
    ignored: usize,
    has_header: bool,
) -> Result<PointMatrix> {
    let data = load_dataset(path, n_inputs, ignored, has_header).with_context(|| {
        format!(
            "loading {} (model expects {n_inputs} input columns + {ignored} ignored)",
            path.display()
        )
    })?;
    Ok(data.features)
}

pub fn run_predict(args: &PredictArgs) -> Result<bool> {
    let cascade = load_model(&args.model)
        .with_context(|| format!("loading model {}", args.model.display()))?;
    let x = load_inputs(&args.data, cascade.input_dim(), args.targets_cols, args.has_header)?;
    let y = cascade.predict(&x)?;
    match &args.out {
        Some(path) => {
            let mut w = BufWriter::new(
                fs::File::create(path).with_context(|| format!("creating {}", path.display()))?,
            );
            write_matrix_csv(&mut w, &y)?;
            w.flush()?;
        }
        None => write_matrix_csv(&mut io::stdout().lock(), &y)?,
    }
    Ok(true)
}

/// Uniform rows in the bounding box of `centers`, widened by 10% per side.
fn random_probes(centers: &PointMatrix, rows: usize, seed: u64) -> Result<PointMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bounds: Vec<(f64, f64)> = centers
        .column_iter()
        .map(|col| {
            let (lo, hi) = (col.min(), col.max());
            let pad = if hi > lo { 0.1 * (hi - lo) } else { 0.5 };
            (lo - pad, hi + pad)
        })
        .collect();
    let m = DMatrix::from_fn(rows, centers.dim(), |_, j| {
        rng.random_range(bounds[j].0..bounds[j].1)
    });
    Ok(PointMatrix::new(m)?)
}

pub fn run_gradcheck(args: &GradcheckArgs) -> Result<bool> {
    let cascade = load_model(&args.model)
        .with_context(|| format!("loading model {}", args.model.display()))?;
    let m = cascade.output_dim();
    if m > 1 && !args.sum_outputs {
        bail!("the last layer has {m} outputs; pass --sum-outputs to check their sum");
    }
    let x = match &args.data {
        Some(path) => load_inputs(path, cascade.input_dim(), args.targets_cols, args.has_header)?,
        None => random_probes(cascade.layers()[0].constellation(), args.probes, args.seed)?,
    };

    let (_, trace) = cascade.forward(&x)?;
    let ones = GradientBatch::new(DMatrix::from_element(x.rows(), m, 1.0))?;
    let analytic = cascade.backward(&trace, &ones)?.input;

    let cfg = FdConfig::with_step(args.step)?;
    let numeric = fd_gradient(
        |b: &PointMatrix| -> polyspline::Result<DVector<f64>> {
            Ok(cascade.predict(b)?.column_sum())
        },
        &x,
        &cfg,
    )?;
    let report = compare_gradients(&analytic, &numeric, &cfg)?;

    let mut out = io::stdout().lock();
    writeln!(out, "rows={}", x.rows())?;
    writeln!(out, "layers={}", cascade.len())?;
    writeln!(out, "max_rel_discrepancy={:e}", report.max_discrepancy)?;
    writeln!(out, "worst_entry={},{}", report.worst.0, report.worst.1)?;
    writeln!(out, "tolerance={:e}", cfg.rel_tol)?;
    writeln!(out, "status={}", if report.passed { "pass" } else { "fail" })?;
    if !report.passed {
        eprintln!(
            "gradient check failed: discrepancy {:e} exceeds {:e}",
            report.max_discrepancy, cfg.rel_tol
        );
    }
    Ok(report.passed)
}

pub fn run_constants(args: &ConstantsArgs) -> Result<bool> {
    let limit = default_constants(args.omega0, 0.0)?;
    let (b, c) = match args.tau {
        Some(tau) => (estimate_b(args.omega0, tau)?, estimate_c(args.omega0, tau)?),
        None => (limit.b(), limit.c()),
    };
    let mut out = io::stdout().lock();
    writeln!(out, "omega0={}", args.omega0)?;
    match args.tau {
        Some(tau) => writeln!(out, "tau={tau}")?,
        None => writeln!(out, "tau=0 (limit)")?,
    }
    writeln!(out, "b={b}")?;
    writeln!(out, "c={c}")?;
    writeln!(out, "T0={}", limit.period())?;
    Ok(true)
}

pub fn run_inspect(args: &InspectArgs) -> Result<bool> {
    let cascade = load_model(&args.model)
        .with_context(|| format!("loading model {}", args.model.display()))?;
    let mut out = io::stdout().lock();
    writeln!(
        out,
        "layer\tk\tn\tm\tomega0\tb\tc\tsigma2\teps_sq_dist\tscale\tlambda_fro\tlambda_max_abs"
    )?;
    for (i, layer) in cascade.layers().iter().enumerate() {
        let p = layer.params();
        writeln!(
            out,
            "{i}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{:e}\t{}\t{:e}\t{:e}",
            layer.centers(),
            layer.input_dim(),
            layer.output_dim(),
            p.omega0(),
            p.b(),
            p.c(),
            p.sigma2(),
            p.eps_sq_dist(),
            p.scale(),
            layer.lambda().norm(),
            layer.lambda().amax(),
        )?;
    }
    Ok(true)
}
