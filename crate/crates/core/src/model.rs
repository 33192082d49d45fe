//! Dense feed-forward networks and their JSON interchange format.
//!
//! Weights are stored row-major with one row per neuron: `weights[j][i]` is
//! the weight from input `i` to neuron `j`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{dot, Real};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Linear,
}

impl Activation {
    pub fn apply<T: Real>(self, z: T) -> T {
        match self {
            Activation::Relu => z.max(T::zero()),
            Activation::Sigmoid => T::one() / (T::one() + (-z).exp()),
            Activation::Linear => z,
        }
    }

    /// True for activations with `f(c z) = c f(z)` for all `c > 0`.
    pub fn is_positively_homogeneous(self) -> bool {
        matches!(self, Activation::Relu | Activation::Linear)
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Linear => "linear",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Layer<T> {
    pub weights: Vec<Vec<T>>,
    pub bias: Vec<T>,
    pub activation: Activation,
}

impl<T: Real> Layer<T> {
    pub fn new(weights: Vec<Vec<T>>, bias: Vec<T>, activation: Activation) -> Result<Self> {
        let layer = Self {
            weights,
            bias,
            activation,
        };
        layer.validate()?;
        Ok(layer)
    }

    /// Number of neurons (rows).
    pub fn width(&self) -> usize {
        self.bias.len()
    }

    pub fn input_dim(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.len() != self.bias.len() {
            return Err(Error::Shape(format!(
                "{} weight rows but {} biases",
                self.weights.len(),
                self.bias.len()
            )));
        }
        if self.weights.is_empty() {
            return Err(Error::Shape("layer has no neurons".into()));
        }
        let d = self.input_dim();
        if d == 0 {
            return Err(Error::Shape("layer has zero inputs".into()));
        }
        for (j, row) in self.weights.iter().enumerate() {
            if row.len() != d {
                return Err(Error::Shape(format!(
                    "row {j} has {} inputs, expected {d}",
                    row.len()
                )));
            }
            if let Some(i) = row.iter().position(|w| !w.is_finite()) {
                return Err(Error::NonFinite(format!("weights[{j}][{i}]")));
            }
        }
        if let Some(j) = self.bias.iter().position(|b| !b.is_finite()) {
            return Err(Error::NonFinite(format!("bias[{j}]")));
        }
        Ok(())
    }

    /// Pre-activation `W x + b` for a single input.
    pub fn pre_activation(&self, x: &[T]) -> Vec<T> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(row, &b)| dot(row, x) + b)
            .collect()
    }

    pub fn apply(&self, x: &[T]) -> Vec<T> {
        let act = self.activation;
        self.pre_activation(x).into_iter().map(|z| act.apply(z)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Network<T> {
    pub format_version: u32,
    pub layers: Vec<Layer<T>>,
}

impl<T: Real> Network<T> {
    pub fn new(layers: Vec<Layer<T>>) -> Result<Self> {
        let net = Self {
            format_version: FORMAT_VERSION,
            layers,
        };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Parse(format!(
                "unsupported format_version {}",
                self.format_version
            )));
        }
        if self.layers.is_empty() {
            return Err(Error::Shape("network has no layers".into()));
        }
        for (k, layer) in self.layers.iter().enumerate() {
            layer.validate().map_err(|e| match e {
                Error::Shape(m) => Error::Shape(format!("layer {k}: {m}")),
                Error::NonFinite(m) => Error::NonFinite(format!("layer {k} {m}")),
                other => other,
            })?;
        }
        for (k, pair) in self.layers.windows(2).enumerate() {
            if pair[0].width() != pair[1].input_dim() {
                return Err(Error::Shape(format!(
                    "layer {k} outputs {} values but layer {} expects {}",
                    pair[0].width(),
                    k + 1,
                    pair[1].input_dim()
                )));
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Layer::width)
    }

    /// Layer widths starting with the input dimension, e.g. `[2, 32, 1]`.
    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(Layer::width))
            .collect()
    }

    pub fn forward_one(&self, x: &[T]) -> Result<Vec<T>> {
        self.forward_through(self.layers.len(), x)
    }

    /// Output of the first `n_layers` layers; `n_layers == 0` returns the input.
    pub fn forward_through(&self, n_layers: usize, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has {} features, network expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        let mut h = x.to_vec();
        for layer in &self.layers[..n_layers.min(self.layers.len())] {
            h = layer.apply(&h);
        }
        Ok(h)
    }

    /// Row-wise forward pass over a batch.
    pub fn forward(&self, inputs: &[Vec<T>]) -> Result<Vec<Vec<T>>> {
        inputs.iter().map(|x| self.forward_one(x)).collect()
    }
}

pub fn load_network<T: Real>(path: impl AsRef<Path>) -> Result<Network<T>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_network(&text)
}

pub fn parse_network<T: Real>(text: &str) -> Result<Network<T>> {
    let net: Network<T> = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    net.validate()?;
    Ok(net)
}

pub fn save_network<T: Real>(network: &Network<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = to_json(network)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn to_json<T: Real>(network: &Network<T>) -> Result<String> {
    network.validate()?;
    serde_json::to_string(network).map_err(|e| Error::Parse(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_relu() -> Network<f64> {
        Network::new(vec![Layer::new(
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![0.0, 0.0],
            Activation::Relu,
        )
        .unwrap()])
        .unwrap()
    }

    #[test]
    fn parses_identity_layer() {
        let net: Network<f64> = parse_network(
            r#"{"format_version":1,"layers":[{"weights":[[1,0],[0,1]],"bias":[0,0],"activation":"relu"}]}"#,
        )
        .unwrap();
        assert_eq!(net.layers.len(), 1);
        assert_eq!(net.layers[0].width(), 2);
        assert_eq!(net.input_dim(), 2);
    }

    #[test]
    fn bias_length_mismatch_is_shape_error() {
        let r: Result<Network<f64>> = parse_network(
            r#"{"format_version":1,"layers":[{"weights":[[1,0],[0,1]],"bias":[0],"activation":"relu"}]}"#,
        );
        assert!(matches!(r, Err(Error::Shape(_))));
    }

    #[test]
    fn chained_width_mismatch_is_shape_error() {
        let r: Result<Network<f64>> = parse_network(
            r#"{"format_version":1,"layers":[
                {"weights":[[1,0],[0,1]],"bias":[0,0],"activation":"relu"},
                {"weights":[[1,0,0]],"bias":[0],"activation":"sigmoid"}]}"#,
        );
        assert!(matches!(r, Err(Error::Shape(_))));
    }

    #[test]
    fn unknown_activation_is_parse_error() {
        let r: Result<Network<f64>> = parse_network(
            r#"{"format_version":1,"layers":[{"weights":[[1]],"bias":[0],"activation":"tanh"}]}"#,
        );
        assert!(matches!(r, Err(Error::Parse(_))));
    }

    #[test]
    fn empty_network_rejected() {
        let r: Result<Network<f64>> = parse_network(r#"{"format_version":1,"layers":[]}"#);
        assert!(matches!(r, Err(Error::Shape(_))));
    }

    #[test]
    fn non_finite_rejected() {
        let r = Layer::new(vec![vec![f64::NAN]], vec![0.0], Activation::Relu);
        assert!(matches!(r, Err(Error::NonFinite(_))));
        let r = Layer::new(vec![vec![1.0]], vec![f64::INFINITY], Activation::Relu);
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }

    #[test]
    fn relu_clamps_negatives() {
        let out = identity_relu().forward_one(&[-1.0, 2.0]).unwrap();
        assert_eq!(out, vec![0.0, 2.0]);
    }

    #[test]
    fn linear_affine() {
        let net = Network::new(vec![
            Layer::new(vec![vec![2.0]], vec![3.0], Activation::Linear).unwrap()
        ])
        .unwrap();
        assert_eq!(net.forward_one(&[1.0]).unwrap(), vec![5.0]);
    }

    #[test]
    fn sigmoid_at_zero_is_half() {
        assert_eq!(Activation::Sigmoid.apply(0.0f64), 0.5);
    }

    #[test]
    fn wrong_input_width_is_shape_error() {
        assert!(matches!(
            identity_relu().forward_one(&[1.0]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn save_load_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");
        let net = Network::new(vec![
            Layer::new(
                vec![vec![0.1, -0.3], vec![1.0 / 3.0, 2.5e-17]],
                vec![0.7, -1e300],
                Activation::Relu,
            )
            .unwrap(),
            Layer::new(vec![vec![0.2, 0.30000000000000004]], vec![0.1], Activation::Sigmoid).unwrap(),
        ])
        .unwrap();
        save_network(&net, &path).unwrap();
        let back: Network<f64> = load_network(&path).unwrap();
        assert_eq!(back, net);
        for (a, b) in back.layers[0].weights[0].iter().zip(&net.layers[0].weights[0]) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn save_to_unwritable_path_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("missing").join("net.json");
        assert!(matches!(
            save_network(&identity_relu(), path),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn works_in_single_precision() {
        let net: Network<f32> = parse_network(
            r#"{"format_version":1,"layers":[{"weights":[[1,0],[0,1]],"bias":[0,0],"activation":"relu"}]}"#,
        )
        .unwrap();
        assert_eq!(net.forward_one(&[-1.0, 2.0]).unwrap(), vec![0.0f32, 2.0]);
    }
}
