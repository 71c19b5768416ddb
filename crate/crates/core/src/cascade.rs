//! Sequential composition of packages.
//!
//! The outputs of layer `i` are the input coordinates of layer `i + 1`. Forward
//! evaluation runs left to right and records a [`CascadeTrace`]; backward
//! consumes that trace and runs the package backward step right to left.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::geometry::PointMatrix;
use crate::package::{ForwardCache, GradientBatch, Package};

/// An immutable, dimension-checked chain of packages.
#[derive(Debug, Clone, PartialEq)]
pub struct Cascade {
    layers: Vec<Package>,
}

/// Per-layer forward caches, in forward order.
#[derive(Debug, Clone)]
pub struct CascadeTrace {
    caches: Vec<ForwardCache>,
}

impl CascadeTrace {
    pub fn caches(&self) -> &[ForwardCache] {
        &self.caches
    }

    pub fn len(&self) -> usize {
        self.caches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.caches.is_empty()
    }
}

/// Result of [`Cascade::backward`].
#[derive(Debug, Clone)]
pub struct CascadeGradients {
    /// Gradient with respect to the cascade input batch.
    pub input: GradientBatch,
    /// Coefficient gradient of every layer, in forward order.
    pub lambda: Vec<DMatrix<f64>>,
}

/// Validates the dimension chain and builds a cascade.
pub fn compose(layers: Vec<Package>) -> Result<Cascade> {
    if layers.is_empty() {
        return Err(Error::Contract("a cascade needs at least one layer".into()));
    }
    for (i, pair) in layers.windows(2).enumerate() {
        if pair[0].output_dim() != pair[1].input_dim() {
            return Err(Error::Composition {
                layer: i,
                outputs: pair[0].output_dim(),
                next_inputs: pair[1].input_dim(),
            });
        }
    }
    Ok(Cascade { layers })
}

/// All-ones `r x 1` output gradient that seeds backpropagation of `L = sum_i y_i`.
pub fn init_output_gradient(rows: usize) -> Result<GradientBatch> {
    if rows == 0 {
        return Err(Error::Empty("output gradient"));
    }
    GradientBatch::new(DMatrix::from_element(rows, 1, 1.0))
}

impl Cascade {
    pub fn layers(&self) -> &[Package] {
        &self.layers
    }

    pub fn into_layers(self) -> Vec<Package> {
        self.layers
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn forward(&self, x: &PointMatrix) -> Result<(DMatrix<f64>, CascadeTrace)> {
        if x.dim() != self.input_dim() {
            return Err(Error::dims("cascade input", self.input_dim(), x.dim()));
        }
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut current = x.clone();
        let mut output = None;
        for (i, layer) in self.layers.iter().enumerate() {
            let (y, cache) = layer.forward(&current)?;
            caches.push(cache);
            if i + 1 < self.layers.len() {
                current = PointMatrix::new(y)?;
            } else {
                output = Some(y);
            }
        }
        Ok((output.expect("cascade is non-empty"), CascadeTrace { caches }))
    }

    /// Evaluation without keeping a trace.
    pub fn predict(&self, x: &PointMatrix) -> Result<DMatrix<f64>> {
        Ok(self.forward(x)?.0)
    }

    /// Propagates `g_final` (gradient of the loss with respect to the last
    /// layer's outputs) back to the cascade inputs.
    pub fn backward(&self, trace: &CascadeTrace, g_final: &GradientBatch) -> Result<CascadeGradients> {
        if trace.len() != self.layers.len() {
            return Err(Error::Contract(format!(
                "trace has {} layers, cascade has {}",
                trace.len(),
                self.layers.len()
            )));
        }
        let rows = trace.caches[0].rows();
        if g_final.shape() != (rows, self.output_dim()) {
            return Err(Error::Contract(format!(
                "final gradient is {} x {}, expected {} x {}",
                g_final.nrows(),
                g_final.ncols(),
                rows,
                self.output_dim()
            )));
        }
        let mut lambda = vec![DMatrix::zeros(0, 0); self.layers.len()];
        let mut g = g_final.clone();
        for (i, (layer, cache)) in self.layers.iter().zip(&trace.caches).enumerate().rev() {
            if cache.rows() != rows {
                return Err(Error::Contract(format!(
                    "trace layer {i} has {} rows, expected {rows}",
                    cache.rows()
                )));
            }
            lambda[i] = layer
                .backward_lambda(cache, &g)
                .map_err(|e| Error::Contract(format!("layer {i}: {e}")))?;
            g = layer
                .backward(cache, &g)
                .map_err(|e| Error::Contract(format!("layer {i}: {e}")))?;
        }
        Ok(CascadeGradients { input: g, lambda })
    }
}
