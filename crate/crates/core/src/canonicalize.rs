//! L2 canonicalization of hidden ReLU layers.
//!
//! Each hidden neuron's incoming weights and bias are divided by the weight
//! norm; the outgoing column in the next layer is multiplied by the same
//! factor so the network computes the same function. The output layer is
//! compensated but never normalized.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Layer, Network};
use crate::scalar::{l2_norm, Real};

/// Rows whose norm falls below this are treated as the zero vector.
pub const ZERO_NORM_THRESHOLD: f64 = 1e-300;

/// Per-neuron norms removed from one layer. An entry of exactly 1 marks a
/// zero weight row (left untouched) or a row that was already unit norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ScaleFactors<T> {
    pub values: Vec<T>,
}

impl<T: Real> ScaleFactors<T> {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn normalize_layer<T: Real>(layer: &Layer<T>) -> Result<(Layer<T>, ScaleFactors<T>)> {
    layer.validate()?;
    let threshold = T::lit(ZERO_NORM_THRESHOLD);
    let mut out = layer.clone();
    let mut scales = Vec::with_capacity(layer.width());
    for (row, bias) in out.weights.iter_mut().zip(out.bias.iter_mut()) {
        let rho = l2_norm(row);
        if rho.is_zero() || rho < threshold {
            scales.push(T::one());
            continue;
        }
        row.iter_mut().for_each(|w| *w = *w / rho);
        *bias = *bias / rho;
        scales.push(rho);
    }
    Ok((out, ScaleFactors { values: scales }))
}

/// Multiplies column `j` of `next` by `scales[j]`. Biases are unchanged.
pub fn compensate_next_layer<T: Real>(next: &Layer<T>, scales: &ScaleFactors<T>) -> Result<Layer<T>> {
    if next.input_dim() != scales.len() {
        return Err(Error::Shape(format!(
            "next layer has {} inputs but {} scale factors were given",
            next.input_dim(),
            scales.len()
        )));
    }
    let mut out = next.clone();
    for row in &mut out.weights {
        for (w, &c) in row.iter_mut().zip(&scales.values) {
            *w = *w * c;
        }
    }
    Ok(out)
}

/// Canonicalizes every hidden layer in ascending order.
///
/// Returns one `ScaleFactors` per hidden layer (empty for a single-layer network).
pub fn canonicalize_network<T: Real>(network: &Network<T>) -> Result<(Network<T>, Vec<ScaleFactors<T>>)> {
    network.validate()?;
    let n = network.layers.len();
    for (k, layer) in network.layers[..n - 1].iter().enumerate() {
        if !layer.activation.is_positively_homogeneous() {
            return Err(Error::UnsupportedActivation {
                layer: k,
                activation: layer.activation.name().to_string(),
            });
        }
    }

    let mut layers = network.layers.clone();
    let mut all_scales = Vec::with_capacity(n - 1);
    for k in 0..n - 1 {
        let (normalized, scales) = normalize_layer(&layers[k])?;
        layers[k + 1] = compensate_next_layer(&layers[k + 1], &scales)?;
        layers[k] = normalized;
        all_scales.push(scales);
    }
    Ok((
        Network {
            format_version: network.format_version,
            layers,
        },
        all_scales,
    ))
}
