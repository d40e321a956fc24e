//! Monte Carlo dropout: K stochastic forward passes give a mean shape, a
//! per-coordinate population variance and `ω·std` confidence intervals.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::fbg::WavelengthFrame;
use crate::kinematics::{ShapeFrame, N_MARKERS};
use crate::nn::{DropoutMode, MlpModel, N_OUTPUTS};
use crate::seed::derive_seed;

pub const DEFAULT_OMEGA: f64 = 3.0;

#[derive(Clone, Debug, PartialEq)]
pub struct McPrediction {
    /// mm, interleaved `x1, y1, …, x30, y30`.
    pub mean: [f64; N_OUTPUTS],
    /// mm².
    pub variance: [f64; N_OUTPUTS],
    /// mm.
    pub std: [f64; N_OUTPUTS],
    pub k: usize,
}

impl McPrediction {
    /// Mean and population variance of the given passes, reduced in order.
    /// Deviations are taken from the first pass, so identical passes give
    /// exactly zero variance.
    pub fn from_samples(samples: &[[f64; N_OUTPUTS]]) -> Result<Self> {
        let Some(first) = samples.first() else {
            return Err(Error::Argument("MC sample count K must be >= 1".into()));
        };
        let k = samples.len() as f64;
        let mut shift = [0.0; N_OUTPUTS];
        for s in samples {
            for ((m, v), f) in shift.iter_mut().zip(s).zip(first) {
                *m += v - f;
            }
        }
        shift.iter_mut().for_each(|m| *m /= k);
        let mut variance = [0.0; N_OUTPUTS];
        for s in samples {
            for (((acc, v), f), m) in variance.iter_mut().zip(s).zip(first).zip(&shift) {
                let d = v - f - m;
                *acc += d * d;
            }
        }
        variance.iter_mut().for_each(|v| *v /= k);
        Ok(Self {
            mean: std::array::from_fn(|j| first[j] + shift[j]),
            variance,
            std: variance.map(f64::sqrt),
            k: samples.len(),
        })
    }

    pub fn mean_shape(&self) -> ShapeFrame {
        ShapeFrame::from_flat(&self.mean).expect("60 values")
    }

    /// Per-axis std of marker `index` (0-based).
    pub fn marker_std(&self, index: usize) -> [f64; 2] {
        [self.std[2 * index], self.std[2 * index + 1]]
    }

    /// `‖(std_x, std_y)‖` at the tip marker.
    pub fn tip_std(&self) -> f64 {
        let [sx, sy] = self.marker_std(N_MARKERS - 1);
        sx.hypot(sy)
    }
}

/// K dropout-active passes over one feature frame, batched as K rows of one
/// forward call with masks drawn from `seed`.
pub fn mc_predict(model: &MlpModel, features: &WavelengthFrame, k: usize, seed: u64) -> Result<McPrediction> {
    if k == 0 {
        return Err(Error::Argument("MC sample count K must be >= 1".into()));
    }
    let row = model.normalizer().normalize(&features.0);
    let x = Array2::from_shape_fn((k, row.len()), |(_, j)| row[j]);
    let y = model.network().forward(x.view(), DropoutMode::Sample(seed))?;
    let samples: Vec<[f64; N_OUTPUTS]> = y
        .rows()
        .into_iter()
        .map(|r| std::array::from_fn(|j| r[j]))
        .collect();
    McPrediction::from_samples(&samples)
}

/// [`mc_predict`] for every frame; frame `i` uses the child seed
/// `derive_seed(seed, i)`, so results do not depend on batching.
pub fn mc_predict_all(
    model: &MlpModel,
    frames: &[WavelengthFrame],
    k: usize,
    seed: u64,
) -> Result<Vec<McPrediction>> {
    frames
        .iter()
        .enumerate()
        .map(|(i, f)| mc_predict(model, f, k, derive_seed(seed, i as u64)))
        .collect()
}

/// `u_i = ω · std_i`, mm.
pub fn confidence_interval(pred: &McPrediction, omega: f64) -> Result<[f64; N_OUTPUTS]> {
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::Argument(format!("omega must be positive, got {omega}")));
    }
    Ok(pred.std.map(|s| omega * s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Normalizer;

    fn model(dropout: f64) -> MlpModel {
        let norm = Normalizer::from_bounds([-1.0; 8], [1.0; 8]).unwrap();
        MlpModel::new(norm, &[32, 16], dropout, 9).unwrap()
    }

    fn frame() -> WavelengthFrame {
        WavelengthFrame([0.3, -0.1, 0.5, 0.9, -0.3, 0.1, -0.5, -0.9])
    }

    #[test]
    fn hand_evaluated_variance() {
        let mut a = [0.0; 60];
        let mut b = [0.0; 60];
        a[7] = 0.0;
        b[7] = 2.0;
        let p = McPrediction::from_samples(&[a, b]).unwrap();
        assert_eq!(p.mean[7], 1.0);
        assert_eq!(p.variance[7], 1.0);
        assert_eq!(p.std[7], 1.0);
        assert_eq!(p.variance[0], 0.0);
    }

    #[test]
    fn no_dropout_gives_zero_variance() {
        let m = model(0.0);
        let p = mc_predict(&m, &frame(), 20, 1).unwrap();
        let det = m.predict(&[frame()]).unwrap()[0].to_flat();
        assert!(p.variance.iter().all(|&v| v == 0.0));
        for (a, b) in p.mean.iter().zip(det) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn single_pass_has_zero_variance() {
        let p = mc_predict(&model(0.3), &frame(), 1, 4).unwrap();
        assert!(p.variance.iter().all(|&v| v == 0.0));
        assert!(matches!(mc_predict(&model(0.3), &frame(), 0, 4), Err(Error::Argument(_))));
    }

    #[test]
    fn seeded_and_nonnegative() {
        let m = model(0.3);
        let a = mc_predict(&m, &frame(), 50, 7).unwrap();
        let b = mc_predict(&m, &frame(), 50, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.variance.iter().all(|&v| v >= 0.0));
        assert!(a.tip_std() > 0.0);
        for (s, v) in a.std.iter().zip(&a.variance) {
            assert!((s * s - v).abs() <= 1e-12);
        }
    }

    #[test]
    fn variance_ignores_sample_order() {
        let samples: Vec<[f64; 60]> = (0..9).map(|i| [(i as f64 * 1.7).sin(); 60]).collect();
        let mut rev = samples.clone();
        rev.reverse();
        let (a, b) = (McPrediction::from_samples(&samples).unwrap(), McPrediction::from_samples(&rev).unwrap());
        for (x, y) in a.variance.iter().zip(&b.variance) {
            assert!((x - y).abs() <= 1e-15);
        }
    }

    #[test]
    fn mean_converges_with_k() {
        let m = model(0.3);
        let small = mc_predict(&m, &frame(), 100, 21).unwrap();
        let large = mc_predict(&m, &frame(), 1000, 22).unwrap();
        for j in 0..60 {
            let bound = 3.0 * large.std[j] / 10.0;
            assert!((small.mean[j] - large.mean[j]).abs() < bound.max(1e-12), "output {j}");
        }
    }

    #[test]
    fn interval_scales_with_omega() {
        let mut s = [0.0; 60];
        s[59] = 0.2;
        let p = McPrediction::from_samples(&[[0.0; 60], s]).unwrap();
        assert!((confidence_interval(&p, 3.0).unwrap()[59] - 0.3).abs() < 1e-15);
        assert_eq!(confidence_interval(&p, 3.0).unwrap()[0], 0.0);
        assert_eq!(confidence_interval(&p, 6.0).unwrap()[59], 2.0 * confidence_interval(&p, 3.0).unwrap()[59]);
        assert!(confidence_interval(&p, 0.0).is_err());
    }

    #[test]
    fn batch_matches_single_calls() {
        let m = model(0.3);
        let frames = [frame(), WavelengthFrame([0.0; 8])];
        let all = mc_predict_all(&m, &frames, 10, 3).unwrap();
        assert_eq!(all[1], mc_predict(&m, &frames[1], 10, derive_seed(3, 1)).unwrap());
    }
}
