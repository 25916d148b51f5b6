//! Dense networks with hand-written reverse-mode gradients.

mod gradcheck;
mod mlp;
mod optim;

pub use gradcheck::{
    compare_with_finite_differences, finite_difference_check, numeric_input_gradient, numeric_parameter_gradient,
    relative_error, FD_STEP,
};
pub use mlp::{Activation, Dense, ForwardCache, Gradients, Mlp};
pub use optim::{apply_update, Direction, Method, Optimizer};
