//! Event-domain spike data: the sample/dataset model and its NDJSON
//! interchange format, the synthetic ISI and coincidence tasks, the timing
//! perturbation operators and the Whole → Part → Norm count normalization.

pub mod error;
pub mod perturb;
pub mod pipeline;
pub mod seed;
pub mod spike;
pub mod synth;

pub use error::{Error, Result};
pub use spike::{
    bin_sample, read_ndjson, spike_counts, write_ndjson, DenseSpikeGrid, SpikeDataset,
    SpikeTrainSample, TransformRecord, Variant,
};
