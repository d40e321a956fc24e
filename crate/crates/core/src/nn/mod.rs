//! From-scratch multilayer perceptron: network, Adam, training loop,
//! checkpointing and finite-difference gradient verification.

pub mod adam;
pub mod gradcheck;
pub mod model;
pub mod network;
pub mod train;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{gradient_check, gradient_check_on};
pub use model::{MlpModel, DEFAULT_DROPOUT, HIDDEN, N_OUTPUTS};
pub use network::{Dense, DropoutMode, Gradients, Network};
pub use train::{train, write_loss_curve, EpochLoss, TrainOptions};
