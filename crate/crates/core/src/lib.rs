//! Layer-wise unsupervised convolutional feature extraction with one-vs-all
//! linear SVMs and score-summing committees.
//!
//! Each layer learns its filters by k-means on normalized, ZCA-whitened
//! patches, then runs convolution, rectification, local contrast
//! normalization and pooling. No backpropagation is involved.

// `!(x > 0.0)` style checks reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod augment;
pub mod committee;
pub mod config;
pub mod container;
pub mod error;
pub mod kmeans;
pub mod layer;
pub mod network;
pub mod patch;
pub mod protocol;
pub mod rng;
pub mod stl10;
pub mod store;
pub mod svm;
pub mod synthetic;
pub mod tensor;

pub use config::{ExperimentConfig, NetworkConfig};
pub use error::{Error, Result};
pub use network::{extract_descriptors, train_network, Network};
pub use protocol::{evaluate_protocol, EvalOptions, ExperimentReport};
pub use rng::SeededRng;
pub use tensor::FeatureMapSet;
