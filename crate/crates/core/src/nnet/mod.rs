//! Small feedforward network with exact reverse-mode gradients.

mod gradcheck;
mod io;
mod matrix;
mod mlp;
mod optim;

pub use gradcheck::{finite_diff_check, relative_error, GradCheckReport, FD_STEP};
pub use io::MODEL_FORMAT_VERSION;
pub use matrix::Matrix;
pub use mlp::{
    Activation, Dense, Gradients, MlpModel, OodHead, ParamBlock, ParamBlockMut, ParamRole,
    ParamSet, Trace, DEFAULT_ENERGY_SLOPE, DEFAULT_HEAD_WIDTH,
};
pub use optim::{sgd_step, OptimizerState, SgdConfig};
