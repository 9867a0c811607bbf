//! Distribution-conditioned transport.
//!
//! Sample sets are embedded by permutation-invariant set encoders and the
//! embeddings condition transport maps (deterministic regression maps trained
//! with sliced-Wasserstein or energy losses, or flow-matching velocity
//! fields). The crate also carries the Gaussian / Gaussian-mixture benchmark
//! generators, distributional metrics and the diagnostic suite used to check
//! the trained models.

pub mod datagen;
pub mod diagnostics;
pub mod encoder;
pub mod error;
pub mod graph;
pub mod linalg;
pub mod metrics;
pub mod nn;
pub mod records;
pub mod rng;
pub mod sample;
pub mod semisup;
pub mod tensor;
pub mod training;
pub mod transport;

pub use datagen::{Dataset, DistributionParams, GmmParams, MvnPrior, PairedDataset, Prior};
pub use error::{DctError, Result};
pub use graph::{Gradients, Graph, NodeId, ParamId, Segments};
pub use metrics::{GaussianFit, GaussianParams};
pub use nn::{Activation, AdamState, Linear, Mlp, ParamStore};
pub use tensor::Tensor;
pub use sample::SampleSet;
