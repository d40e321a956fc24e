use std::io::Write;
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Sample;
use crate::error::{Error, Result};

use super::adam::{AdamConfig, AdamState};
use super::model::{MlpModel, N_OUTPUTS};
use super::network::DropoutMode;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Fraction of training rows held back to report validation MSE.
    pub validation_fraction: f64,
    pub adam: AdamConfig,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 256,
            seed: 0,
            validation_fraction: 0.1,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainOptions {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config(format!(
                "validation_fraction {} outside [0, 1)",
                self.validation_fraction
            )));
        }
        self.adam.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLoss {
    /// 1-based.
    pub epoch: usize,
    /// Mean of the dropout-active minibatch losses, weighted by batch size.
    pub train_mse: f64,
    /// Dropout-off MSE on the held-back rows.
    pub val_mse: Option<f64>,
}

/// Minibatch Adam training with per-batch dropout masks; deterministic per
/// `opts.seed`. The model's normalizer must come from these samples.
pub fn train(model: &mut MlpModel, samples: &[Sample], opts: &TrainOptions) -> Result<Vec<EpochLoss>> {
    opts.validate()?;
    if opts.epochs == 0 {
        return Ok(Vec::new());
    }
    if samples.is_empty() {
        return Err(Error::Empty("training samples"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut rng);
    let n_val = ((samples.len() as f64 * opts.validation_fraction).round() as usize).min(samples.len() - 1);
    let (val_idx, train_idx) = order.split_at(n_val);

    let x_all = model.feature_matrix(samples.iter().map(|s| &s.features));
    let mut y_all = Array2::zeros((samples.len(), N_OUTPUTS));
    for (mut row, s) in y_all.axis_iter_mut(Axis(0)).zip(samples) {
        row.assign(&ndarray::ArrayView1::from(&s.target.to_flat()));
    }
    let x_val = x_all.select(Axis(0), val_idx);
    let y_val = y_all.select(Axis(0), val_idx);
    let mut train_idx = train_idx.to_vec();

    let sizes: Vec<usize> = model.network_mut().parameters_mut().iter().map(|p| p.len()).collect();
    let mut adam = AdamState::new(opts.adam.clone(), &sizes);
    let mut curve = Vec::with_capacity(opts.epochs);
    for epoch in 1..=opts.epochs {
        train_idx.shuffle(&mut rng);
        let mut weighted = 0.0;
        for batch in train_idx.chunks(opts.batch_size) {
            let x = x_all.select(Axis(0), batch);
            let y = y_all.select(Axis(0), batch);
            let mode = DropoutMode::Sample(rng.random());
            let (loss, grads) = model.network().loss_and_gradients(x.view(), y.view(), mode)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, loss });
            }
            weighted += loss * batch.len() as f64;
            adam.step(&mut model.network_mut().parameters_mut(), &grads.as_slices())?;
        }
        let train_mse = weighted / train_idx.len() as f64;
        let val_mse = if n_val > 0 {
            let mut sum = 0.0;
            for (xc, yc) in x_val
                .axis_chunks_iter(Axis(0), 1024)
                .zip(y_val.axis_chunks_iter(Axis(0), 1024))
            {
                sum += model.network().mse(xc, yc, DropoutMode::Off)? * xc.nrows() as f64;
            }
            Some(sum / n_val as f64)
        } else {
            None
        };
        if let Some(loss) = val_mse.filter(|v| !v.is_finite()) {
            return Err(Error::Divergence { epoch, loss });
        }
        curve.push(EpochLoss {
            epoch,
            train_mse,
            val_mse,
        });
    }
    Ok(curve)
}

/// `epoch,train_mse,val_mse`; the last field is empty without validation rows.
pub fn write_loss_curve(curve: &[EpochLoss], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::file(path, e))?;
    write_loss_curve_to(curve, std::io::BufWriter::new(file))
}

pub fn write_loss_curve_to<W: Write>(curve: &[EpochLoss], mut w: W) -> Result<()> {
    writeln!(w, "epoch,train_mse,val_mse")?;
    for e in curve {
        match e.val_mse {
            Some(v) => writeln!(w, "{},{},{}", e.epoch, e.train_mse, v)?,
            None => writeln!(w, "{},{},", e.epoch, e.train_mse)?,
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Normalizer, ScenarioKind};
    use crate::fbg::WavelengthFrame;
    use crate::kinematics::ShapeFrame;

    /// Rows of an exactly linear map from 8 features to 60 outputs.
    fn linear_samples(n: usize, seed: u64) -> Vec<Sample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coef: Vec<[f64; 8]> = (0..60)
            .map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0)))
            .collect();
        (0..n)
            .map(|i| {
                let x: [f64; 8] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
                let flat: Vec<f64> = coef
                    .iter()
                    .map(|c| c.iter().zip(&x).map(|(a, b)| a * b).sum())
                    .collect();
                Sample {
                    features: WavelengthFrame(x),
                    target: ShapeFrame::from_flat(&flat).unwrap(),
                    scenario: ScenarioKind::FreespaceLeft,
                    bend_id: 0,
                    t: i as f64,
                }
            })
            .collect()
    }

    fn model_for(samples: &[Sample], hidden: &[usize], dropout: f64) -> MlpModel {
        let norm = Normalizer::fit(samples.iter().map(|s| &s.features.0)).unwrap();
        MlpModel::new(norm, hidden, dropout, 7).unwrap()
    }

    #[test]
    fn learns_a_linear_map() {
        let samples = linear_samples(500, 1);
        let mut model = model_for(&samples, &[64, 64], 0.0);
        let opts = TrainOptions {
            epochs: 200,
            batch_size: 32,
            validation_fraction: 0.0,
            ..TrainOptions::default()
        };
        let curve = train(&mut model, &samples, &opts).unwrap();
        let last = curve.last().unwrap();
        assert!(last.train_mse < 1e-2, "final mse {}", last.train_mse);
        assert!(last.val_mse.is_none());
    }

    #[test]
    fn zero_epochs_leaves_model() {
        let samples = linear_samples(20, 2);
        let mut model = model_for(&samples, &[8], 0.3);
        let before = model.clone();
        let opts = TrainOptions {
            epochs: 0,
            ..TrainOptions::default()
        };
        assert!(train(&mut model, &samples, &opts).unwrap().is_empty());
        assert_eq!(model, before);
    }

    #[test]
    fn same_seed_same_curve() {
        let samples = linear_samples(200, 3);
        let opts = TrainOptions {
            epochs: 5,
            batch_size: 16,
            ..TrainOptions::default()
        };
        let mut a = model_for(&samples, &[16, 8], 0.3);
        let mut b = a.clone();
        let ca = train(&mut a, &samples, &opts).unwrap();
        let cb = train(&mut b, &samples, &opts).unwrap();
        assert_eq!(ca, cb);
        assert_eq!(a, b);
        assert!(ca.iter().all(|e| e.val_mse.is_some()));
    }

    #[test]
    fn divergence_is_reported() {
        let samples = linear_samples(50, 4);
        let mut model = model_for(&samples, &[8], 0.0);
        let opts = TrainOptions {
            epochs: 3,
            adam: AdamConfig {
                learning_rate: 1e300,
                ..AdamConfig::default()
            },
            ..TrainOptions::default()
        };
        assert!(matches!(
            train(&mut model, &samples, &opts),
            Err(Error::Divergence { .. })
        ));
    }

    #[test]
    fn loss_curve_csv() {
        let curve = [
            EpochLoss { epoch: 1, train_mse: 0.5, val_mse: Some(0.25) },
            EpochLoss { epoch: 2, train_mse: 0.125, val_mse: None },
        ];
        let mut buf = Vec::new();
        write_loss_curve_to(&curve, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "epoch,train_mse,val_mse\n1,0.5,0.25\n2,0.125,\n"
        );
    }
}
