use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::spectral::FeatureStats;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Identity,
}

impl Activation {
    fn apply(self, z: &mut Array2<f64>) {
        if self == Activation::Sigmoid {
            z.mapv_inplace(sigmoid);
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Activation::Sigmoid => 1,
            Activation::Identity => 0,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Sigmoid),
            _ => None,
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Fully connected layer computing `x·W + b` for row-vector inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `[inputs × outputs]`
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Fully connected regression network: sigmoid hidden layers, identity output.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub(crate) layer_sizes: Vec<usize>,
    pub(crate) layers: Vec<Dense>,
    pub(crate) hidden_activation: Activation,
    pub(crate) output_activation: Activation,
    pub(crate) feature_stats: FeatureStats,
    pub(crate) seed: u64,
}

/// Activations kept from a forward pass; entry 0 is the input batch and the
/// last entry is the network output.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub activations: Vec<Array2<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn as_slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| {
                [
                    l.weights.as_slice().expect("standard layout"),
                    l.bias.as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }
}

impl MlpModel {
    /// All parameters zero.
    pub fn zeros(layer_sizes: &[usize], feature_stats: FeatureStats) -> Result<Self> {
        Self::build(layer_sizes, feature_stats, 0, |_, _| 0.0)
    }

    /// Weights uniform on ±√(6/(fan_in+fan_out)), biases zero.
    pub fn init(layer_sizes: &[usize], feature_stats: FeatureStats, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::build(layer_sizes, feature_stats, seed, |fan_in, fan_out| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            rng.gen_range(-limit..=limit)
        })
    }

    fn build(
        layer_sizes: &[usize],
        feature_stats: FeatureStats,
        seed: u64,
        mut weight: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::Parameter(format!(
                "layer sizes {layer_sizes:?} need at least two positive entries"
            )));
        }
        let layers = layer_sizes
            .windows(2)
            .map(|pair| {
                let (fan_in, fan_out) = (pair[0], pair[1]);
                Dense {
                    weights: Array2::from_shape_simple_fn((fan_in, fan_out), || {
                        weight(fan_in, fan_out)
                    }),
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            layers,
            hidden_activation: Activation::Sigmoid,
            output_activation: Activation::Identity,
            feature_stats,
            seed,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn feature_stats(&self) -> &FeatureStats {
        &self.feature_stats
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Weight and bias buffers in layer order: `W1, b1, W2, b2, ...`.
    pub fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    l.weights.as_slice_mut().expect("standard layout"),
                    l.bias.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn forward(&self, batch: ArrayView2<f64>) -> Result<(Array2<f64>, ForwardCache)> {
        if batch.ncols() != self.input_size() {
            return Err(Error::Shape(format!(
                "batch width {} does not match input size {}",
                batch.ncols(),
                self.input_size()
            )));
        }
        if batch.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite network input".into()));
        }
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(batch.to_owned());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = activations[i].dot(&layer.weights);
            z += &layer.bias;
            let act = if i == last {
                self.output_activation
            } else {
                self.hidden_activation
            };
            act.apply(&mut z);
            activations.push(z);
        }
        let output = activations.last().unwrap().clone();
        Ok((output, ForwardCache { activations }))
    }

    /// Output only, evaluated in slices of `batch_rows` to bound memory.
    pub fn predict(&self, inputs: ArrayView2<f64>, batch_rows: usize) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((inputs.nrows(), self.output_size()));
        let step = batch_rows.max(1);
        let mut start = 0;
        while start < inputs.nrows() {
            let end = (start + step).min(inputs.nrows());
            let (y, _) = self.forward(inputs.slice(ndarray::s![start..end, ..]))?;
            out.slice_mut(ndarray::s![start..end, ..]).assign(&y);
            start = end;
        }
        Ok(out)
    }

    /// Gradients of `L = Σ(y − t)² / (B·outputs)`; returns them with `L`.
    pub fn backward(
        &self,
        batch: ArrayView2<f64>,
        targets: ArrayView2<f64>,
    ) -> Result<(Gradients, f64)> {
        let (output, cache) = self.forward(batch)?;
        if targets.dim() != output.dim() {
            return Err(Error::Shape(format!(
                "targets {:?} do not match outputs {:?}",
                targets.dim(),
                output.dim()
            )));
        }
        let diff = &output - &targets;
        let count = diff.len() as f64;
        let loss = diff.iter().map(|d| d * d).sum::<f64>() / count;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("loss is {loss}")));
        }

        let mut delta = diff * (2.0 / count);
        if self.output_activation == Activation::Sigmoid {
            delta *= &cache.activations[self.layers.len()].mapv(|a| a * (1.0 - a));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            let input = &cache.activations[i];
            let weights = input.t().dot(&delta);
            let bias = delta.sum_axis(Axis(0));
            if i > 0 {
                let mut upstream = delta.dot(&self.layers[i].weights.t());
                if self.hidden_activation == Activation::Sigmoid {
                    upstream.zip_mut_with(input, |d, &a| *d *= a * (1.0 - a));
                }
                delta = upstream;
            }
            grads.push(Dense { weights, bias });
        }
        grads.reverse();
        Ok((Gradients { layers: grads }, loss))
    }

    /// Mean squared error over every output cell.
    pub fn mse(&self, inputs: ArrayView2<f64>, targets: ArrayView2<f64>) -> Result<f64> {
        let y = self.predict(inputs, 256)?;
        if y.dim() != targets.dim() {
            return Err(Error::Shape("targets do not match outputs".into()));
        }
        Ok((&y - &targets).iter().map(|d| d * d).sum::<f64>() / y.len() as f64)
    }
}
