//! Minimal differentiable compute core: dense and gated recurrent layers,
//! smooth nonlinearities, the missingness transform, hand-derived reverse
//! mode gradients, an adaptive-moment optimizer and a parameter checkpoint
//! container.
//!
//! Networks built from these parts follow one convention: `forward` takes
//! `&self` and returns the outputs together with a [`Tape`] of everything
//! the backward pass needs; `backward` takes that tape and accumulates into
//! the `grad` buffers of the parameter tensors without touching values.

mod adam;
mod checkpoint;
mod dense;
mod lstm;
mod mask;
pub mod ops;
mod tensor;

pub use adam::{opt_step, Adam, AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, CheckpointHeader, TensorEntry, FORMAT_VERSION, MAGIC};
pub use dense::Dense;
pub use lstm::{LstmCell, LstmTrace};
pub use mask::{mask_transform, MaskedSequence};
pub use tensor::{scoped, Parameterized, Tensor};

use crate::error::{Result, TcsError};

/// Record of one forward pass. A default (empty) tape has recorded nothing.
#[derive(Debug, Clone)]
pub struct Tape<T> {
    record: Option<T>,
}

impl<T> Default for Tape<T> {
    fn default() -> Self {
        Tape { record: None }
    }
}

impl<T> Tape<T> {
    pub fn recorded(record: T) -> Self {
        Tape { record: Some(record) }
    }

    pub fn is_recorded(&self) -> bool {
        self.record.is_some()
    }

    /// The recorded forward state, or a usage error if nothing was recorded.
    pub fn get(&self) -> Result<&T> {
        self.record
            .as_ref()
            .ok_or_else(|| TcsError::Usage("backward called before forward".into()))
    }
}

/// Central finite-difference gradient of `loss` with respect to every
/// parameter of `model`.
pub fn finite_difference_grad<P, F>(model: &P, eps: f64, mut loss: F) -> Result<Vec<f64>>
where
    P: Parameterized + Clone,
    F: FnMut(&P) -> Result<f64>,
{
    let base = model.flat_values();
    let mut probe = model.clone();
    let mut out = Vec::with_capacity(base.len());
    let mut values = base.clone();
    for i in 0..base.len() {
        values[i] = base[i] + eps;
        probe.set_flat_values(&values)?;
        let plus = loss(&probe)?;
        values[i] = base[i] - eps;
        probe.set_flat_values(&values)?;
        let minus = loss(&probe)?;
        values[i] = base[i];
        out.push((plus - minus) / (2.0 * eps));
    }
    Ok(out)
}

/// Largest elementwise relative error `|a - n| / max(|a|, |n|, floor)`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}
