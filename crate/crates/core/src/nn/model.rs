//! The shape-estimation network: normalizer plus an 8 → … → 60 MLP, with
//! the binary checkpoint format.

use std::path::Path;

use ndarray::{Array2, Axis};

use crate::checkpoint::{self, Decoder, Encoder, ModelKind};
use crate::dataset::Normalizer;
use crate::error::{CheckpointError, Error, Result};
use crate::fbg::{WavelengthFrame, N_FEATURES};
use crate::kinematics::{ShapeFrame, N_MARKERS};

use super::network::{Dense, DropoutMode, Network};

pub const N_OUTPUTS: usize = 2 * N_MARKERS;
pub const HIDDEN: [usize; 2] = [512, 256];
pub const DEFAULT_DROPOUT: f64 = 0.3;

/// Rows per forward call when predicting large feature sets.
const CHUNK: usize = 1024;

#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    network: Network,
    normalizer: Normalizer,
}

impl MlpModel {
    pub fn new(normalizer: Normalizer, hidden: &[usize], dropout: f64, seed: u64) -> Result<Self> {
        let mut dims = vec![N_FEATURES];
        dims.extend_from_slice(hidden);
        dims.push(N_OUTPUTS);
        Self::from_parts(Network::new(&dims, dropout, seed)?, normalizer)
    }

    pub fn from_parts(network: Network, normalizer: Normalizer) -> Result<Self> {
        if network.input_dim() != N_FEATURES {
            return Err(Error::Shape {
                what: "network input width",
                expected: N_FEATURES,
                got: network.input_dim(),
            });
        }
        if network.output_dim() != N_OUTPUTS {
            return Err(Error::Shape {
                what: "network output width",
                expected: N_OUTPUTS,
                got: network.output_dim(),
            });
        }
        Ok(Self { network, normalizer })
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub(crate) fn network_mut(&mut self) -> &mut Network {
        &mut self.network
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    pub fn dropout(&self) -> f64 {
        self.network.dropout()
    }

    /// Normalized feature matrix, one row per frame.
    pub fn feature_matrix<'a>(
        &self,
        frames: impl ExactSizeIterator<Item = &'a WavelengthFrame>,
    ) -> Array2<f64> {
        let mut x = Array2::zeros((frames.len(), N_FEATURES));
        for (mut row, f) in x.axis_iter_mut(Axis(0)).zip(frames) {
            row.assign(&ndarray::ArrayView1::from(&self.normalizer.normalize(&f.0)));
        }
        x
    }

    /// Deterministic (dropout off) shape predictions.
    pub fn predict(&self, frames: &[WavelengthFrame]) -> Result<Vec<ShapeFrame>> {
        let mut out = Vec::with_capacity(frames.len());
        for chunk in frames.chunks(CHUNK) {
            let y = self.network.forward(self.feature_matrix(chunk.iter()).view(), DropoutMode::Off)?;
            for row in y.rows() {
                out.push(ShapeFrame::from_flat(row.as_slice().expect("standard layout"))?);
            }
        }
        Ok(out)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new(ModelKind::Mlp);
        let dims = self.network.dims();
        enc.u32(dims.len() as u32);
        for d in &dims {
            enc.u32(*d as u32);
        }
        enc.f64(self.network.dropout());
        enc.f64s(self.normalizer.min());
        enc.f64s(self.normalizer.max());
        // weights row-major as (inputs × outputs), then bias
        for layer in self.network.layers() {
            enc.f64s(layer.weights.iter());
            enc.f64s(layer.bias.iter());
        }
        enc.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut dec = Decoder::new(bytes, ModelKind::Mlp)?;
        let n_dims = dec.u32()? as usize;
        if !(2..=16).contains(&n_dims) {
            return Err(CheckpointError::Malformed(format!("{n_dims} layer widths")).into());
        }
        let dims = (0..n_dims)
            .map(|_| dec.u32().map(|d| d as usize))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        if dims.iter().any(|&d| d == 0 || d > 1 << 16) {
            return Err(CheckpointError::Malformed(format!("layer widths {dims:?}")).into());
        }
        let dropout = dec.f64()?;
        let min = dec.f64_array::<N_FEATURES>()?;
        let max = dec.f64_array::<N_FEATURES>()?;
        let mut layers = Vec::with_capacity(n_dims - 1);
        for w in dims.windows(2) {
            let weights = Array2::from_shape_vec((w[0], w[1]), dec.f64s(w[0] * w[1])?)
                .map_err(|e| CheckpointError::Malformed(e.to_string()))?;
            let bias = dec.f64s(w[1])?.into();
            layers.push(Dense { weights, bias });
        }
        dec.finish()?;
        let malformed = |e: Error| Error::from(CheckpointError::Malformed(e.to_string()));
        let network = Network::from_layers(layers, dropout).map_err(malformed)?;
        let normalizer = Normalizer::from_bounds(min, max).map_err(malformed)?;
        Self::from_parts(network, normalizer).map_err(malformed)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        checkpoint::write_file(path.as_ref(), &self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&checkpoint::read_file(path.as_ref())?)
    }
}
