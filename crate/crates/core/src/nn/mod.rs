//! Small from-scratch networks: dense layers, an LSTM cell with
//! backpropagation through time, Adam, and a binary checkpoint container.

mod adam;
mod checkpoint;
mod dense;
mod lstm;
mod nets;
mod tensor;

use thiserror::Error;

pub use adam::Adam;
pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use dense::{sigmoid, Activation, Dense, DenseCache};
pub use lstm::{LstmCell, LstmStepCache};
pub use nets::{PolicyNet, PolicyShape, PolicyTape, RecurrentState, ValueNet, ValueTape};
pub use tensor::Tensor2;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("missing forward cache: {0}")]
    MissingCache(String),
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    CheckpointVersionMismatch { found: u32, expected: u32 },
    #[error("malformed checkpoint: {0}")]
    BadCheckpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A bundle of trainable tensors with a fixed order.
pub trait Parameterized: Clone {
    fn named_tensors(&self) -> Vec<(&'static str, &Tensor2)>;
    fn tensors_mut(&mut self) -> Vec<&mut Tensor2>;

    fn tensors(&self) -> Vec<&Tensor2> {
        self.named_tensors().into_iter().map(|(_, t)| t).collect()
    }

    /// Same-shaped copy with every entry zero, used as a gradient buffer.
    fn zeroed(&self) -> Self {
        let mut out = self.clone();
        for t in out.tensors_mut() {
            t.fill(0.0);
        }
        out
    }

    fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.data().len()).sum()
    }

    fn flat(&self) -> Vec<f64> {
        self.tensors().iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    fn global_norm(&self) -> f64 {
        self.tensors().iter().map(|t| t.sum_squares()).sum::<f64>().sqrt()
    }

    /// Rescales all tensors so the global norm is at most `max_norm`.
    /// Returns the norm before clipping.
    fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm && norm > 0.0 {
            let k = max_norm / norm;
            for t in self.tensors_mut() {
                t.scale(k);
            }
        }
        norm
    }

    fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    /// Order-sensitive hash of the exact parameter bits.
    fn checksum(&self) -> u64 {
        let mut acc = 0xcbf2_9ce4_8422_2325u64;
        for v in self.flat() {
            acc ^= v.to_bits();
            acc = acc.wrapping_mul(0x0100_0000_01b3);
        }
        acc
    }
}

#[cfg(test)]
mod gradcheck;
