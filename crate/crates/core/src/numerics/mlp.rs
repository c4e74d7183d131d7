use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::tape::{Gradients, NodeId, Tape};
use crate::error::{precondition, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, v: f32) -> f32 {
        match self {
            Activation::Relu => {
                if v > 0.0 {
                    v
                } else {
                    0.0
                }
            }
            Activation::Identity => v,
        }
    }
}

/// One affine layer `x·W + b` followed by an activation. `weights` is in×out.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Matrix,
    pub biases: Vec<f32>,
    pub activation: Activation,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.cols()
    }
}

/// Feed-forward network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    layers: Vec<Layer>,
}

/// Gradients shaped like an [`MlpParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f32>>,
}

/// Tape handles of the parameters recorded by [`MlpParams::record`].
#[derive(Debug, Clone)]
pub struct MlpNodes {
    pub output: NodeId,
    params: Vec<(NodeId, NodeId)>,
}

impl MlpParams {
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(precondition("an MLP needs at least one layer"));
        }
        for (i, w) in layers.windows(2).enumerate() {
            if w[0].out_dim() != w[1].in_dim() {
                return Err(Error::Dimension {
                    op: "mlp layers",
                    expected: (w[0].out_dim(), w[1].out_dim()),
                    found: (w[1].in_dim(), i + 1),
                });
            }
        }
        for l in &layers {
            if l.biases.len() != l.out_dim() {
                return Err(Error::Dimension { op: "mlp bias", expected: (1, l.out_dim()), found: (1, l.biases.len()) });
            }
        }
        Ok(MlpParams { layers })
    }

    /// All-zero network with the given layer sizes.
    pub fn zeros(sizes: &[usize], activations: &[Activation]) -> Result<Self> {
        check_sizes(sizes, activations)?;
        let layers = sizes
            .windows(2)
            .zip(activations)
            .map(|(w, &activation)| Layer {
                weights: Matrix::zeros(w[0], w[1]),
                biases: alloc::vec![0.0; w[1]],
                activation,
            })
            .collect();
        MlpParams::from_layers(layers)
    }

    /// He-uniform weights for ReLU layers, Glorot-uniform otherwise, zero biases.
    pub fn random<R: Rng + ?Sized>(sizes: &[usize], activations: &[Activation], rng: &mut R) -> Result<Self> {
        let mut net = MlpParams::zeros(sizes, activations)?;
        for layer in &mut net.layers {
            let (fan_in, fan_out) = (layer.in_dim() as f32, layer.out_dim() as f32);
            let limit = match layer.activation {
                Activation::Relu => libm::sqrtf(6.0 / fan_in),
                Activation::Identity => libm::sqrtf(6.0 / (fan_in + fan_out)),
            };
            for w in layer.weights.as_mut_slice() {
                *w = rng.random_range(-limit..limit);
            }
        }
        Ok(net)
    }

    /// Hidden layers ReLU, output layer identity.
    pub fn relu_activations(layer_count: usize) -> Vec<Activation> {
        (0..layer_count)
            .map(|i| if i + 1 == layer_count { Activation::Identity } else { Activation::Relu })
            .collect()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.layers.len() + 1);
        sizes.push(self.in_dim());
        sizes.extend(self.layers.iter().map(Layer::out_dim));
        sizes
    }

    pub fn activations(&self) -> Vec<Activation> {
        self.layers.iter().map(|l| l.activation).collect()
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.as_slice().len() + l.biases.len()).sum()
    }

    /// Plain forward pass without recording.
    pub fn forward(&self, input: &Matrix) -> Result<Matrix> {
        if input.cols() != self.in_dim() {
            return Err(Error::Dimension { op: "mlp forward", expected: (input.rows(), self.in_dim()), found: input.shape() });
        }
        let mut x = input.clone();
        for layer in &self.layers {
            let mut z = x.matmul(&layer.weights)?;
            for r in 0..z.rows() {
                for (v, b) in z.row_mut(r).iter_mut().zip(&layer.biases) {
                    *v = layer.activation.apply(*v + b);
                }
            }
            x = z;
        }
        Ok(x)
    }

    /// Records the forward pass of `input` on `tape`, with every weight and bias as a leaf.
    pub fn record(&self, tape: &mut Tape, input: NodeId) -> Result<MlpNodes> {
        let cols = tape.value(input).cols();
        if cols != self.in_dim() {
            return Err(Error::Dimension {
                op: "mlp record",
                expected: (tape.value(input).rows(), self.in_dim()),
                found: tape.value(input).shape(),
            });
        }
        let mut x = input;
        let mut params = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let w = tape.leaf(layer.weights.clone());
            let b = tape.leaf(Matrix::from_vec(1, layer.biases.len(), layer.biases.clone())?);
            let z = tape.matmul(x, w)?;
            let z = tape.add_bias(z, b)?;
            x = match layer.activation {
                Activation::Relu => tape.relu(z),
                Activation::Identity => z,
            };
            params.push((w, b));
        }
        Ok(MlpNodes { output: x, params })
    }

    pub fn zero_grads(&self) -> MlpGrads {
        MlpGrads {
            weights: self.layers.iter().map(|l| Matrix::zeros(l.in_dim(), l.out_dim())).collect(),
            biases: self.layers.iter().map(|l| alloc::vec![0.0; l.out_dim()]).collect(),
        }
    }

    /// Flattens weights then biases, layer by layer.
    pub fn to_flat(&self) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for l in &self.layers {
            out.extend_from_slice(l.weights.as_slice());
            out.extend_from_slice(&l.biases);
        }
        out
    }

    /// Inverse of [`MlpParams::to_flat`].
    pub fn from_flat(sizes: &[usize], activations: &[Activation], flat: &[f32]) -> Result<Self> {
        let mut net = MlpParams::zeros(sizes, activations)?;
        if flat.len() != net.parameter_count() {
            return Err(Error::Dimension { op: "mlp from_flat", expected: (net.parameter_count(), 1), found: (flat.len(), 1) });
        }
        let mut offset = 0;
        for l in &mut net.layers {
            let wn = l.weights.as_slice().len();
            l.weights.as_mut_slice().copy_from_slice(&flat[offset..offset + wn]);
            offset += wn;
            let bn = l.biases.len();
            l.biases.copy_from_slice(&flat[offset..offset + bn]);
            offset += bn;
        }
        Ok(net)
    }
}

impl MlpNodes {
    pub fn grads(&self, g: &Gradients) -> Result<MlpGrads> {
        let mut weights = Vec::with_capacity(self.params.len());
        let mut biases = Vec::with_capacity(self.params.len());
        for &(w, b) in &self.params {
            weights.push(g.get(w));
            biases.push(g.get(b).into_vec());
        }
        Ok(MlpGrads { weights, biases })
    }
}

impl MlpGrads {
    pub fn add_assign(&mut self, other: &MlpGrads) -> Result<()> {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.add_assign(b)?;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }

    pub fn squared_norm(&self) -> f64 {
        self.weights.iter().flat_map(|w| w.as_slice()).chain(self.biases.iter().flatten()).map(|&v| v as f64 * v as f64).sum()
    }

    pub fn scale(&mut self, s: f32) {
        for w in &mut self.weights {
            w.as_mut_slice().iter_mut().for_each(|v| *v *= s);
        }
        self.biases.iter_mut().flatten().for_each(|v| *v *= s);
    }

    pub fn to_flat(&self) -> Vec<f32> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b);
        }
        out
    }
}

fn check_sizes(sizes: &[usize], activations: &[Activation]) -> Result<()> {
    if sizes.len() < 2 {
        return Err(precondition("layer sizes need an input and an output dimension"));
    }
    if activations.len() != sizes.len() - 1 {
        return Err(precondition("one activation per layer is required"));
    }
    if sizes.contains(&0) {
        return Err(precondition("layer sizes must be positive"));
    }
    Ok(())
}
