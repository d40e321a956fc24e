//! Fully connected ReLU network with inverted dropout on hidden layers,
//! batched forward pass and reverse-mode gradients of the MSE loss.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Affine layer `y = x · weights + bias` with `weights` stored `in × out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weights: Array2::zeros((inputs, outputs)),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weights.ncols()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DropoutMode {
    Off,
    /// Fresh masks drawn from a ChaCha8 stream seeded with this value.
    Sample(u64),
}

/// Per-parameter gradients, shaped like the network layers.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    /// Flattened views in the order of [`Network::parameters_mut`].
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

    pub fn max_abs(&self) -> f64 {
        self.as_slices()
            .iter()
            .flat_map(|s| s.iter())
            .fold(0.0, |m, g| m.max(g.abs()))
    }
}

/// Everything the backward pass needs from one forward pass.
struct Trace {
    /// Input of every layer; `inputs[0]` is the batch itself.
    inputs: Vec<Array2<f64>>,
    /// `d(activation)/d(pre-activation)` of each hidden layer: ReLU slope
    /// times the dropout scale (0 for dropped units).
    gates: Vec<Array2<f64>>,
    output: Array2<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    layers: Vec<Dense>,
    dropout: f64,
}

impl Network {
    /// He-normal weights and zero biases drawn from `seed`.
    pub fn new(dims: &[usize], dropout: f64, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(dims, dropout)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut net.layers {
            let std = (2.0 / layer.inputs() as f64).sqrt();
            let normal = Normal::new(0.0, std).map_err(|e| Error::Argument(e.to_string()))?;
            layer.weights.iter_mut().for_each(|w| *w = normal.sample(&mut rng));
        }
        Ok(net)
    }

    pub fn zeros(dims: &[usize], dropout: f64) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Argument(format!(
                "network needs at least two non-zero layer widths, got {dims:?}"
            )));
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::Argument(format!("dropout rate {dropout} outside [0, 1)")));
        }
        Ok(Self {
            layers: dims.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
            dropout,
        })
    }

    /// Assembles a network from explicit layers; widths must chain.
    pub fn from_layers(layers: Vec<Dense>, dropout: f64) -> Result<Self> {
        let mut dims = vec![layers.first().map_or(0, Dense::inputs)];
        for (i, l) in layers.iter().enumerate() {
            if l.inputs() != dims[i] || l.bias.len() != l.outputs() {
                return Err(Error::Shape {
                    what: "layer input width",
                    expected: dims[i],
                    got: l.inputs(),
                });
            }
            dims.push(l.outputs());
        }
        let mut net = Self::zeros(&dims, dropout)?;
        net.layers = layers;
        Ok(net)
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.layers[0].inputs()];
        d.extend(self.layers.iter().map(Dense::outputs));
        d
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn dropout(&self) -> f64 {
        self.dropout
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Flattened mutable views: weights then bias, layer by layer.
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

    pub fn forward(&self, x: ArrayView2<'_, f64>, mode: DropoutMode) -> Result<Array2<f64>> {
        Ok(self.trace(x, mode)?.output)
    }

    /// Mean squared error over the batch and all outputs.
    pub fn mse(&self, x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>, mode: DropoutMode) -> Result<f64> {
        let pred = self.forward(x, mode)?;
        if pred.dim() != y.dim() {
            return Err(Error::Shape {
                what: "target batch",
                expected: pred.len(),
                got: y.len(),
            });
        }
        Ok(pred.iter().zip(y.iter()).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len().max(1) as f64)
    }

    /// Mean squared error over the batch and all outputs, and its gradients.
    pub fn loss_and_gradients(
        &self,
        x: ArrayView2<'_, f64>,
        y: ArrayView2<'_, f64>,
        mode: DropoutMode,
    ) -> Result<(f64, Gradients)> {
        if x.nrows() == 0 {
            return Err(Error::Empty("training batch"));
        }
        if y.dim() != (x.nrows(), self.output_dim()) {
            return Err(Error::Shape {
                what: "target batch",
                expected: x.nrows() * self.output_dim(),
                got: y.len(),
            });
        }
        let trace = self.trace(x, mode)?;
        let mut delta = &trace.output - &y;
        let loss = delta.iter().map(|d| d * d).sum::<f64>() / delta.len() as f64;
        delta *= 2.0 / delta.len() as f64;

        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        for l in (0..self.layers.len()).rev() {
            let input = &trace.inputs[l];
            grads.push(Dense {
                weights: input.t().dot(&delta),
                bias: delta.sum_axis(Axis(0)),
            });
            if l > 0 {
                delta = delta.dot(&self.layers[l].weights.t());
                delta *= &trace.gates[l - 1];
            }
        }
        grads.reverse();
        Ok((loss, Gradients { layers: grads }))
    }

    fn trace(&self, x: ArrayView2<'_, f64>, mode: DropoutMode) -> Result<Trace> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Shape {
                what: "feature arity",
                expected: self.input_dim(),
                got: x.ncols(),
            });
        }
        let mut rng = match mode {
            DropoutMode::Sample(seed) if self.dropout > 0.0 => Some(ChaCha8Rng::seed_from_u64(seed)),
            _ => None,
        };
        // keep iff u32 draw >= drop_below, i.e. with probability 1 − d
        let drop_below = (self.dropout * 4_294_967_296.0) as u64;
        let scale = 1.0 / (1.0 - self.dropout);

        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut gates = Vec::with_capacity(last);
        let mut a = x.to_owned();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.weights);
            z += &layer.bias;
            inputs.push(a);
            if l == last {
                a = z;
                break;
            }
            let mut gate = Array2::zeros(z.raw_dim());
            for (g, v) in gate.iter_mut().zip(z.iter_mut()) {
                let kept = match rng.as_mut() {
                    Some(r) => u64::from(r.random::<u32>()) >= drop_below,
                    None => true,
                };
                *g = match (kept, *v > 0.0, rng.is_some()) {
                    (true, true, true) => scale,
                    (true, true, false) => 1.0,
                    _ => 0.0,
                };
                *v *= *g;
            }
            gates.push(gate);
            a = z;
        }
        Ok(Trace {
            inputs,
            gates,
            output: a,
        })
    }
}
