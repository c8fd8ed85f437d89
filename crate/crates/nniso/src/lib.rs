//! Non-negative isomorphic neural networks with photonic activations.
//!
//! Incoherent photonic accelerators carry signals as optical power, which
//! cannot go negative. This crate trains small dense/convolutional/recurrent
//! networks built on two photonic transfer functions, and provides:
//!
//! * [`transform::nnt_transform`] — rewrites any such trained (or untrained)
//!   network into an exactly-equivalent form whose weights, biases and every
//!   intermediate signal are non-negative;
//! * [`transform::nnf_forward`] — the rotated forward pass that executes the
//!   transformed network, plus a matching backward pass so training can
//!   continue after the transform;
//! * [`optim`] — plain SGD, the clipping baseline CSGD, and the
//!   sign-preserving multiplicative rule NNSGD, selectable by name through a
//!   runtime registry;
//! * [`train::train_loop`] — seeded, bit-reproducible mini-batch training
//!   with per-epoch loss/accuracy/variance metrics;
//! * [`data`] / [`model_io`] — IDX dataset ingestion, synthetic tasks, and a
//!   checksummed model file format that round-trips bitwise.
//!
//! Everything is `f64` and deterministically ordered; a fixed seed gives a
//! fixed result.

pub mod activation;
pub mod data;
pub mod defaults;
pub mod gradcheck;
pub mod layer;
pub mod loss;
pub mod model_io;
pub mod network;
pub mod optim;
pub mod presets;
pub mod rng;
pub mod tensor;
pub mod train;
pub mod transform;

pub use activation::{Activation, ActivationKind};
pub use data::Dataset;
pub use network::{ForwardCache, Gradients, Network};
pub use optim::{OptimizerRegistry, RateConfig, UpdateRule};
pub use presets::{build_preset, InitScheme, Preset};
pub use tensor::Tensor;
pub use train::{train_loop, MetricsRecord, TrainableModel, TrainParams};
pub use transform::{
    nnf_forward, nnt_transform, nnt_transform_model, verify_isomorphism, TransformBundle,
};
