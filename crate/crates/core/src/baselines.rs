//! Least-squares regression baselines on raw or second-order polynomial
//! features.

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{self, Decoder, Encoder, ModelKind};
use crate::dataset::Sample;
use crate::error::{CheckpointError, Error, Result};
use crate::fbg::{WavelengthFrame, N_FEATURES};
use crate::kinematics::ShapeFrame;
use crate::nn::N_OUTPUTS;

pub const POLY2_ARITY: usize = N_FEATURES + N_FEATURES + N_FEATURES * (N_FEATURES - 1) / 2;
pub const RIDGE: f64 = 1e-10;
/// Largest accepted condition estimate of the regularized normal matrix.
pub const MAX_CONDITION: f64 = 1e15;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureMap {
    Identity,
    Poly2,
}

impl FeatureMap {
    pub fn arity(self) -> usize {
        match self {
            FeatureMap::Identity => N_FEATURES,
            FeatureMap::Poly2 => POLY2_ARITY,
        }
    }

    fn tag(self) -> u32 {
        match self {
            FeatureMap::Identity => 0,
            FeatureMap::Poly2 => 2,
        }
    }

    fn from_tag(tag: u32) -> Option<Self> {
        match tag {
            0 => Some(FeatureMap::Identity),
            2 => Some(FeatureMap::Poly2),
            _ => None,
        }
    }

    fn apply_into(self, x: &[f64; N_FEATURES], out: &mut [f64]) {
        match self {
            FeatureMap::Identity => out.copy_from_slice(x),
            FeatureMap::Poly2 => out.copy_from_slice(&poly2(x)),
        }
    }
}

/// `[x_i] ++ [x_i²] ++ [x_i·x_j for i < j]`, pairs in lexicographic order.
pub fn polynomial_features(x: &[f64]) -> Result<[f64; POLY2_ARITY]> {
    let x: &[f64; N_FEATURES] = x.try_into().map_err(|_| Error::Shape {
        what: "polynomial feature input",
        expected: N_FEATURES,
        got: x.len(),
    })?;
    Ok(poly2(x))
}

fn poly2(x: &[f64; N_FEATURES]) -> [f64; POLY2_ARITY] {
    let mut out = [0.0; POLY2_ARITY];
    out[..N_FEATURES].copy_from_slice(x);
    for i in 0..N_FEATURES {
        out[N_FEATURES + i] = x[i] * x[i];
    }
    let mut k = 2 * N_FEATURES;
    for i in 0..N_FEATURES {
        for j in i + 1..N_FEATURES {
            out[k] = x[i] * x[j];
            k += 1;
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel {
    map: FeatureMap,
    /// `arity × 60`.
    weights: Array2<f64>,
    intercept: Array1<f64>,
    /// Training RMS residual, mm.
    residual: f64,
}

impl LinearModel {
    pub fn zeros(map: FeatureMap) -> Self {
        Self {
            map,
            weights: Array2::zeros((map.arity(), N_OUTPUTS)),
            intercept: Array1::zeros(N_OUTPUTS),
            residual: 0.0,
        }
    }

    pub fn feature_map(&self) -> FeatureMap {
        self.map
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn intercept(&self) -> &Array1<f64> {
        &self.intercept
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }

    fn design(&self, frames: &[WavelengthFrame]) -> Array2<f64> {
        design_matrix(self.map, frames.iter().map(|f| &f.0))
    }

    pub fn predict(&self, frames: &[WavelengthFrame]) -> Result<Vec<ShapeFrame>> {
        let mut y = self.design(frames).dot(&self.weights);
        y += &self.intercept;
        y.rows()
            .into_iter()
            .map(|r| ShapeFrame::from_flat(r.as_slice().expect("standard layout")))
            .collect()
    }

    /// Single-row prediction from an arbitrary-length slice.
    pub fn predict_row(&self, x: &[f64]) -> Result<ShapeFrame> {
        let x: [f64; N_FEATURES] = x.try_into().map_err(|_| Error::Shape {
            what: "regression input",
            expected: N_FEATURES,
            got: x.len(),
        })?;
        Ok(self.predict(&[WavelengthFrame(x)])?.remove(0))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new(ModelKind::Regression);
        enc.u32(self.map.tag());
        enc.u32(self.map.arity() as u32);
        enc.u32(N_OUTPUTS as u32);
        enc.f64(self.residual);
        enc.f64s(self.weights.iter());
        enc.f64s(self.intercept.iter());
        enc.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut dec = Decoder::new(bytes, ModelKind::Regression)?;
        let tag = dec.u32()?;
        let map = FeatureMap::from_tag(tag)
            .ok_or_else(|| CheckpointError::Malformed(format!("unknown feature map {tag}")))?;
        let (arity, outputs) = (dec.u32()? as usize, dec.u32()? as usize);
        if arity != map.arity() || outputs != N_OUTPUTS {
            return Err(CheckpointError::Malformed(format!(
                "coefficient shape {arity}×{outputs} does not match {map:?}"
            ))
            .into());
        }
        let residual = dec.f64()?;
        let weights = Array2::from_shape_vec((arity, outputs), dec.f64s(arity * outputs)?)
            .map_err(|e| CheckpointError::Malformed(e.to_string()))?;
        let intercept = dec.f64s(outputs)?.into();
        dec.finish()?;
        Ok(Self {
            map,
            weights,
            intercept,
            residual,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        checkpoint::write_file(path.as_ref(), &self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&checkpoint::read_file(path.as_ref())?)
    }
}

fn design_matrix<'a>(
    map: FeatureMap,
    rows: impl ExactSizeIterator<Item = &'a [f64; N_FEATURES]>,
) -> Array2<f64> {
    let mut x = Array2::zeros((rows.len(), map.arity()));
    for (mut out, row) in x.axis_iter_mut(Axis(0)).zip(rows) {
        map.apply_into(row, out.as_slice_mut().expect("standard layout"));
    }
    x
}

pub fn fit_samples(samples: &[Sample], map: FeatureMap) -> Result<LinearModel> {
    let features: Vec<_> = samples.iter().map(|s| s.features).collect();
    let targets: Vec<_> = samples.iter().map(|s| s.target).collect();
    fit(&features, &targets, map)
}

/// Least squares on centered data. Columns are scaled to unit RMS, the ridge
/// is added to that scaled normal matrix and the system is solved by
/// Cholesky; exactly collinear features (the two fibers mirror each other)
/// are thus resolved by the ridge instead of failing.
pub fn fit(features: &[WavelengthFrame], targets: &[ShapeFrame], map: FeatureMap) -> Result<LinearModel> {
    if features.len() != targets.len() {
        return Err(Error::Shape {
            what: "regression targets",
            expected: features.len(),
            got: targets.len(),
        });
    }
    let p = map.arity();
    let n = features.len();
    if n < p + 1 {
        return Err(Error::Argument(format!(
            "{map:?} regression needs at least {} rows, got {n}",
            p + 1
        )));
    }
    let mut x = design_matrix(map, features.iter().map(|f| &f.0));
    let mut y = Array2::zeros((n, N_OUTPUTS));
    for (mut row, t) in y.axis_iter_mut(Axis(0)).zip(targets) {
        row.assign(&ndarray::ArrayView1::from(&t.to_flat()));
    }
    let x_mean = x.mean_axis(Axis(0)).expect("n > 0");
    let y_mean = y.mean_axis(Axis(0)).expect("n > 0");
    x -= &x_mean;
    let yc = &y - &y_mean;

    let scale: Vec<f64> = x
        .axis_iter(Axis(1))
        .map(|c| {
            let rms = (c.dot(&c) / n as f64).sqrt();
            if rms > 0.0 { rms } else { 1.0 }
        })
        .collect();
    for (mut c, s) in x.axis_iter_mut(Axis(1)).zip(&scale) {
        c /= *s;
    }
    let gram = x.t().dot(&x) / n as f64;
    let cross = x.t().dot(&yc) / n as f64;

    let mut a = DMatrix::from_fn(p, p, |i, j| gram[[i, j]]);
    for i in 0..p {
        a[(i, i)] += RIDGE;
    }
    let eig = SymmetricEigen::new(a.clone()).eigenvalues;
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v.abs())));
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::RankDeficient { condition });
    }
    let chol = a.cholesky().ok_or(Error::RankDeficient { condition })?;
    let b = DMatrix::from_fn(p, N_OUTPUTS, |i, j| cross[[i, j]]);
    let ws = chol.solve(&b);

    let weights = Array2::from_shape_fn((p, N_OUTPUTS), |(i, j)| ws[(i, j)] / scale[i]);
    let intercept = &y_mean - &x_mean.dot(&weights);
    let mut model = LinearModel {
        map,
        weights,
        intercept,
        residual: 0.0,
    };
    let pred = model.predict(features)?;
    let sq: f64 = pred
        .iter()
        .zip(targets)
        .flat_map(|(p, t)| p.to_flat().into_iter().zip(t.to_flat()).map(|(a, b)| (a - b) * (a - b)))
        .sum();
    model.residual = (sq / (n * N_OUTPUTS) as f64).sqrt();
    Ok(model)
}
