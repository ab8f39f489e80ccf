//! Dense layers, LSTM cells, softmax and the Adam optimizer.

pub mod adam;
pub mod lstm;
pub mod matrix;
pub mod softmax;

pub use adam::{clip_global_norm, Adam, AdamConfig};
pub use lstm::{lstm_gates, lstm_step, lstm_step_backward, lstm_step_cached, sigmoid, LstmParams, LstmStep};
pub use matrix::{axpy, dot, DenseMatrix};
pub use softmax::{log_softmax, softmax, softmax_cross_entropy};
