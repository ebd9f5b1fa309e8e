//! Dense float64 tensors, the layer vocabulary of the search space, and
//! reverse-mode differentiation through it.

mod loss;
mod lstm;
mod model;
pub mod ops;
mod optim;
mod params;
mod tensor;

pub use loss::{cross_entropy_loss, softmax};
pub use lstm::{lstm_backward, lstm_forward, LstmCache};
pub use model::{ActivationGrad, BackwardOutput, Layer, Model, ModelBuilder};
pub use optim::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use params::{xavier_normal_init, xavier_std, ParamRole, ParamSet, Parameter};
pub use tensor::TensorValue;
