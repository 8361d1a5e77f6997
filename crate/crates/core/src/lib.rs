//! Type-enriched distantly supervised relation extraction.
//!
//! The crate is `no_std` (with `alloc`) and carries everything that is pure
//! computation: a small dense tensor library with reverse-mode
//! differentiation, the corpus data model and synthetic corpus generator,
//! the model itself (type-enriched embedding, piecewise CNN encoder,
//! hierarchical type-sentence alignment, multi-granular selective
//! attention), the AdaDelta trainer and the evaluation metrics.
//!
//! File formats, configuration files and the command line live in the
//! companion `hiram` crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod alignment;
pub mod bag;
pub mod config;
pub mod corpus;
pub mod embedding;
mod error;
pub mod gradcheck;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod params;
pub mod pcnn;
pub mod synth;
pub mod tensor;
pub mod trainer;

pub use config::{CorpusConfig, ModelConfig, Preset, TrainConfig, TypeAug};
pub use error::{Error, Result};
pub use graph::{Elementwise, Gradients, Graph, NodeId, PoolMode};
pub use model::Hiram;
pub use params::{ParamId, ParamSet};
pub use tensor::Tensor;
