//! Minimal numerical core: dense and LSTM layers with exact backward passes,
//! binary cross-entropy, Adam and a finite-difference gradient checker.
//!
//! Everything is `f64`. Matrix products go through `matrixmultiply`.

mod adam;
mod gradcheck;
mod layers;
mod nets;
mod ops;
mod params;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{finite_diff_check, GradCheckReport};
pub use layers::{glorot_uniform, lstm_forward, Dense, Lstm, Mlp};
pub use nets::{Batch, DnnNet, LogisticNet, LstmNet, Network};
pub use ops::{bce_loss, bce_with_logit, dense_forward, relu, sigmoid, sigmoid_scalar, BCE_EPS};
pub use params::{ParamStore, Tensor};
pub use train::{fit, predict_rows, TrainOptions};
