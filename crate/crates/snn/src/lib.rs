//! A small discrete-time spiking network library: LIF layers with a
//! Heaviside forward pass and surrogate-gradient BPTT, learnable axonal
//! delays, final-potential cross-entropy and Spikemax losses, an Adam
//! optimizer, and a spike-count MLP baseline.

pub mod checkpoint;
pub mod delay;
pub mod error;
pub mod layer;
pub mod loss;
pub mod mlp;
pub mod model;
pub mod optim;
pub mod surrogate;
pub mod train;

pub use error::{Error, Result};
pub use model::{Architecture, Encoded, LossKind, SnnModel};
pub use surrogate::{surrogate_grad, SpikeFn};
pub use checkpoint::{Checkpoint, Trained};
pub use mlp::{mlp_count_baseline, MlpModel};
pub use train::{evaluate, train, Evaluation, TrainConfig, TrainOutcome};
