//! Dense matrices, reverse-mode differentiation for feed-forward networks,
//! momentum SGD and the small vector transforms used throughout the crate.

mod matrix;
mod mlp;
mod optim;
mod tape;
mod transform;

pub use matrix::{dot, squared_distance, Matrix};
pub use mlp::{Activation, Layer, MlpGrads, MlpNodes, MlpParams};
pub use optim::{Sgd, StepSchedule};
pub use tape::{Gradients, NodeId, Tape, LOG_EPS};
pub use transform::{argmax, minmax_rescale, softmax, top2};
