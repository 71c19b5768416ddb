//! On-disk formats: JSON model files and numeric CSV datasets.
//!
//! Model file (`format_version` 1):
//!
//! ```json
//! {
//!   "format_version": 1,
//!   "layers": [
//!     {
//!       "omega0": 0.001, "b": 7.330539..., "c": 1000000.0,
//!       "sigma2": 0.0, "eps_sq_dist": 1e-20,
//!       "constellation": [[0.0], [1.0]],
//!       "lambda": [[0.5], [-0.5]]
//!     }
//!   ]
//! }
//! ```
//!
//! `constellation` is `k x n` and `lambda` is `k x m`, both as arrays of rows.
//! An optional per-layer `scale` multiplies the kernel; it is omitted when 1.
//! An optional per-layer `offset` (length `m`) holds the constant term
//! `scale * c * 1^T lambda` as computed by the fit; when absent it is
//! recomputed from `lambda`.
//! Floats are written in shortest round-trip form and parsed exactly, so a
//! save/load cycle is bit-exact.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, RowDVector};
use serde::{Deserialize, Serialize};

use crate::cascade::{compose, Cascade};
use crate::error::{Error, Result};
use crate::geometry::PointMatrix;
use crate::kernel::KernelParams;
use crate::package::Package;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format_version: u32,
    pub layers: Vec<LayerRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerRecord {
    pub omega0: f64,
    pub b: f64,
    pub c: f64,
    pub sigma2: f64,
    pub eps_sq_dist: f64,
    #[serde(default = "unit_scale", skip_serializing_if = "is_unit_scale")]
    pub scale: f64,
    pub constellation: Vec<Vec<f64>>,
    pub lambda: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<Vec<f64>>,
}

fn unit_scale() -> f64 {
    1.0
}

fn is_unit_scale(s: &f64) -> bool {
    *s == 1.0
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl LayerRecord {
    fn from_package(p: &Package) -> Self {
        let k = p.params();
        LayerRecord {
            omega0: k.omega0(),
            b: k.b(),
            c: k.c(),
            sigma2: k.sigma2(),
            eps_sq_dist: k.eps_sq_dist(),
            scale: k.scale(),
            constellation: rows_of(p.constellation().as_matrix()),
            lambda: rows_of(p.lambda()),
            offset: Some(p.offset().iter().copied().collect()),
        }
    }

    fn to_package(&self, index: usize) -> Result<Package> {
        let ctx = |e: Error| Error::Model(format!("layer {index}: {e}"));
        let params = KernelParams::new(self.omega0, self.b, self.c, self.sigma2)
            .and_then(|p| p.with_eps_sq_dist(self.eps_sq_dist))
            .and_then(|p| p.with_scale(self.scale))
            .map_err(ctx)?;
        let constellation = PointMatrix::from_rows(&self.constellation).map_err(ctx)?;
        let m = self.lambda.first().map_or(0, Vec::len);
        if self.lambda.iter().any(|r| r.len() != m) {
            return Err(Error::Model(format!("layer {index}: ragged lambda rows")));
        }
        let flat: Vec<f64> = self.lambda.iter().flatten().copied().collect();
        let lambda = DMatrix::from_row_slice(self.lambda.len(), m, &flat);
        match &self.offset {
            Some(o) => Package::with_offset(constellation, lambda, params, RowDVector::from_row_slice(o)),
            None => Package::from_parts(constellation, lambda, params),
        }
        .map_err(ctx)
    }
}

impl ModelFile {
    pub fn from_cascade(cascade: &Cascade) -> Self {
        ModelFile {
            format_version: FORMAT_VERSION,
            layers: cascade.layers().iter().map(LayerRecord::from_package).collect(),
        }
    }

    /// Pretty-printed JSON; does not validate the layers.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model records always serialize")
    }

    /// Validates every layer and the dimension chain.
    pub fn into_cascade(self) -> Result<Cascade> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(self.format_version));
        }
        if self.layers.is_empty() {
            return Err(Error::Model("no layers".into()));
        }
        let layers = self
            .layers
            .iter()
            .enumerate()
            .map(|(i, l)| l.to_package(i))
            .collect::<Result<Vec<_>>>()?;
        compose(layers)
    }
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: u32,
}

pub fn model_to_json(cascade: &Cascade) -> String {
    ModelFile::from_cascade(cascade).to_json()
}

pub fn model_from_json(text: &str) -> Result<Cascade> {
    let probe: VersionProbe =
        serde_json::from_str(text).map_err(|e| Error::Model(e.to_string()))?;
    if probe.format_version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(probe.format_version));
    }
    let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::Model(e.to_string()))?;
    file.into_cascade()
}

pub fn save_model(cascade: &Cascade, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = model_to_json(cascade);
    text.push('\n');
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Cascade> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    model_from_json(&text)
}

/// Feature rows and, optionally, target rows read from one CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: PointMatrix,
    pub targets: Option<DMatrix<f64>>,
}

impl Dataset {
    pub fn rows(&self) -> usize {
        self.features.rows()
    }
}

/// Reads `n_features` feature columns followed by `n_targets` target columns.
///
/// Comma-delimited, period decimal separator, no quoting. `n_targets = 0`
/// yields a dataset without targets.
pub fn load_dataset(
    path: impl AsRef<Path>,
    n_features: usize,
    n_targets: usize,
    has_header: bool,
) -> Result<Dataset> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    parse_dataset(file, n_features, n_targets, has_header)
}

pub fn parse_dataset(
    reader: impl std::io::Read,
    n_features: usize,
    n_targets: usize,
    has_header: bool,
) -> Result<Dataset> {
    if n_features == 0 {
        return Err(Error::dims("dataset feature columns", ">= 1", 0));
    }
    let width = n_features + n_targets;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .quoting(false)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut features = Vec::new();
    let mut targets = Vec::new();
    let mut rows = 0usize;
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != width {
            return Err(Error::Parse {
                line,
                message: format!("expected {width} columns, found {}", record.len()),
            });
        }
        for (j, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                line,
                message: format!("column {}: not a number: {cell:?}", j + 1),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    message: format!("column {}: non-finite value", j + 1),
                });
            }
            if j < n_features {
                features.push(v);
            } else {
                targets.push(v);
            }
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Empty("dataset"));
    }
    Ok(Dataset {
        features: PointMatrix::from_row_slice(rows, n_features, &features)?,
        targets: (n_targets > 0).then(|| DMatrix::from_row_slice(rows, n_targets, &targets)),
    })
}

/// Writes a matrix as CSV, one row per line, in shortest round-trip form.
pub fn write_matrix_csv(out: &mut impl Write, m: &DMatrix<f64>) -> std::io::Result<()> {
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}
