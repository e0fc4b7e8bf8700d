//! Dense ReLU networks with exact backpropagation, RMSprop and a
//! finite-difference gradient checker.

mod gradcheck;
mod mlp;
mod optim;

pub use gradcheck::{gradient_check, relative_error, GradCheckReport, Objective, QuadraticObjective, FD_STEP};
pub use mlp::{ForwardCache, Layer, MlpParams};
pub use optim::{lr_at_epoch, rmsprop_step, GuessMode, RmspropState, TrainConfig};
