//! Dense tensors, a reverse-mode tape, finite-difference checks and Adam.

mod gradcheck;
mod matrix;
mod optim;
mod tape;

pub use gradcheck::{grad_check, GradCheckOptions};
pub use matrix::DenseMatrix;
pub use optim::Adam;
pub use tape::{softmax_cross_entropy, softmax_xent_rows, Gradients, Tape, Var};
