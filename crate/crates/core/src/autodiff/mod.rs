//! Tape-based reverse-mode differentiation, the multi-label loss and the Adam optimizer.

mod adam;
mod tape;

pub use adam::{AdamConfig, AdamState};
pub use tape::{Gradients, Tape, Var, BCE_EPS};

use crate::error::Result;
use crate::tensor::{Real, Tensor};

/// Mean binary cross-entropy of `probs` against `targets`, evaluated without a tape.
pub fn bce_loss<T: Real>(probs: &Tensor<T>, targets: &Tensor<T>) -> Result<T> {
    let mut tape = Tape::new();
    let p = tape.constant_ref(probs);
    let loss = tape.bce_loss(p, targets)?;
    Ok(tape.value(loss).data()[0])
}
