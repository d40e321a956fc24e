use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;

use super::network::{DropoutMode, Network};

pub const FD_STEP: f64 = 1e-6;
const BATCH: usize = 4;

/// Builds a random network of widths `dims` and a random batch from `seed`,
/// then returns the worst analytic/finite-difference gradient deviation.
pub fn gradient_check(dims: &[usize], seed: u64) -> Result<f64> {
    let mut net = Network::new(dims, 0.0, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED);
    // Zero biases put a pre-activation exactly on the ReLU kink whenever a
    // whole hidden layer is inactive for a row; there is no derivative there.
    for bias in net.parameters_mut().into_iter().skip(1).step_by(2) {
        bias.iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
    }
    let x = Array2::from_shape_simple_fn((BATCH, dims[0]), || rng.random_range(-1.0..1.0));
    let y = Array2::from_shape_simple_fn((BATCH, dims[dims.len() - 1]), || rng.random_range(-1.0..1.0));
    gradient_check_on(&net, x.view(), y.view())
}

/// `max |g_a − g_fd| / max(1e-8, |g_a| + |g_fd|)` over all parameters, with
/// central differences of step [`FD_STEP`] and dropout off.
pub fn gradient_check_on(net: &Network, x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<f64> {
    let (_, grads) = net.loss_and_gradients(x, y, DropoutMode::Off)?;
    let analytic: Vec<Vec<f64>> = grads.as_slices().iter().map(|s| s.to_vec()).collect();
    let mut probe = net.clone();
    let mut worst = 0.0f64;
    for (t, ga_tensor) in analytic.iter().enumerate() {
        for (i, &ga) in ga_tensor.iter().enumerate() {
            let original = probe.parameters_mut()[t][i];
            probe.parameters_mut()[t][i] = original + FD_STEP;
            let up = probe.mse(x, y, DropoutMode::Off)?;
            probe.parameters_mut()[t][i] = original - FD_STEP;
            let down = probe.mse(x, y, DropoutMode::Off)?;
            probe.parameters_mut()[t][i] = original;
            let fd = (up - down) / (2.0 * FD_STEP);
            worst = worst.max((ga - fd).abs() / (ga.abs() + fd.abs()).max(1e-8));
        }
    }
    Ok(worst)
}
