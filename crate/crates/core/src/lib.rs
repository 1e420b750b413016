//! Lightweight attention-based 1-D CNN for classifying lower-limb activities
//! from 4-channel sEMG windows, with everything needed around it: a small
//! differentiable layer toolkit, CSV ingestion, windowing and
//! leave-one-subject-out splits, wavelet denoising, training, metrics and a
//! latency benchmark.

pub mod bench;
pub mod config;
pub mod dataset;
pub mod experiment;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod optim;
pub mod pipeline;
pub mod rng;
pub mod tensor;
pub mod train;

pub use rng::Rng;
pub use tensor::Tensor;
