//! Minimal deterministic numeric kernel: dense tensors, LSTM and MLP layers
//! with hand-written backward passes, losses, Adam, gradient clipping, a
//! finite-difference gradient checker, and a binary checkpoint container.
//!
//! Everything is generic over [`Scalar`]; training code instantiates `f32`,
//! gradient checking instantiates `f64`.

pub mod checkpoint;
pub mod gradcheck;
pub mod loss;
pub mod lstm;
pub mod matrix;
pub mod mlp;
pub mod optim;
pub mod store;

pub use checkpoint::{load_store, load_store_from_path, save_store, save_store_to_path};
pub use gradcheck::finite_diff_check;
pub use loss::{
    categorical_grad_logits, log_softmax, logsumexp, loss_categorical, loss_multilabel,
    multilabel_grad_logits, sigmoid, softmax,
};
pub use lstm::{lstm_step, LstmLayerNames, LstmState, StackedLstm};
pub use matrix::{DenseMatrix, Scalar};
pub use mlp::{Activation, LinearNames, MlpSpec};
pub use optim::{adam_update, clip_gradients, AdamHyper};
pub use store::{Param, ParamStore};
