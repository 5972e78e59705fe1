//! A small, deterministic neural-network kit with hand-written gradients.
//!
//! Sequences are `T x D` [`Matrix`] values (one frame per row). A
//! [`Network`] is a stack of [`Layer`]s built from [`LayerSpec`]s; a
//! training-mode forward pass returns a [`Tape`] that [`Network::backward`]
//! consumes to accumulate parameter gradients. [`train`] runs mini-batch
//! ADAM with validation-driven learning-rate decay and early stopping.
//!
//! Everything runs in `f64` on one thread, and all randomness comes from
//! seeded ChaCha generators, so training is bit-reproducible.

mod error;
pub mod gradcheck;
mod layer;
pub mod loss;
mod lstm;
mod matrix;
mod network;
pub mod optim;
mod train;

pub use error::{NnError, Result};
pub use layer::{log_softmax_in_place, Blstm, Dense, Layer, LayerNorm, LayerSpec, Mode, Param};
pub use lstm::Lstm;
pub use matrix::Matrix;
pub use network::{Network, Tape};
pub use optim::{Adam, AdamConfig};
pub use train::{evaluate, train, CheckRecord, FrameLoss, Objective, TrainConfig, TrainHistory};
