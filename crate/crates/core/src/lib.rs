//! Face-embedding training and evaluation toolkit.
//!
//! The crate covers the whole desk-scale pipeline: landmark alignment
//! ([`align`]), dataset balancing and augmentation ([`data`]), a zoo of
//! margin-based heads with analytic gradients ([`heads`]), a simulated
//! model-parallel classifier ([`sharded`]), learning-rate schedules and label
//! smoothing ([`schedules`]), a toy trainer with distillation and self-training
//! ([`trainer`]) and the k-fold verification protocol ([`eval`]).

pub mod align;
pub mod data;
pub mod error;
pub mod eval;
pub mod heads;
pub mod numerics;
pub mod schedules;
pub mod sharded;
pub mod trainer;

pub use error::{Error, Result};
pub use heads::{HeadConfig, HeadKind, HeadState, LossGrad};
pub use numerics::{Mat, Prng};
