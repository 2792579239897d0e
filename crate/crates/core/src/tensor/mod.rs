//! Dense f64 matrices, a reverse-mode tape over a fixed primitive set, and
//! an Adam optimizer. Everything downstream (model, losses, trainer) is
//! built from these three pieces.

mod adam;
mod matrix;
mod tape;

pub use adam::AdamState;
pub use matrix::{cosine, Matrix};
pub use tape::{Gradients, NodeId, Tape, COSINE_NORM_EPS};
