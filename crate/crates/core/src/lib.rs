//! Cluster-aware representation learning over precomputed text embeddings.
//!
//! A self-expressive head turns a batch of latents into an affinity matrix
//! whose rows reconstruct each sample from the others; those reconstructions
//! serve as virtual positive pairs for a cluster-wise contrastive loss with
//! an adaptive temperature. Spectral clustering on the learned affinity (or
//! k-means on the latents) produces labels, scored by Hungarian-matched
//! accuracy and NMI.
//!
//! Module map:
//! - [`tensor`]: matrices, the reverse-mode tape, Adam
//! - [`model`]: projection head + self-expressive module
//! - [`losses`]: contrastive / regularization / temperature terms
//! - [`trainer`]: batching, the epoch loop, the dropout-pair baseline
//! - [`clustering`]: Jacobi eigensolver, spectral clustering, k-means
//! - [`metrics`]: Hungarian assignment, clustering accuracy, NMI
//! - [`data_io`]: embedding/label/checkpoint files, synthetic data, exports
//!
//! ```
//! use scl_core::clustering::{spectral_cluster, symmetrize, KChoice};
//! use scl_core::data_io::{synth_subspace_dataset, SynthSpec};
//! use scl_core::metrics::clustering_accuracy;
//! use scl_core::model::affinity;
//! use scl_core::trainer::{train, TrainConfig};
//!
//! let spec = SynthSpec { k: 2, subspace_dim: 2, ambient_dim: 8,
//!     points_per_cluster: 15, noise_sigma: 0.01, seed: 5 };
//! let (embeddings, truth) = synth_subspace_dataset(&spec)?;
//!
//! let cfg = TrainConfig { epochs: 60, lr: 1e-3, batch_size: 30, min_batch: 2,
//!     ..TrainConfig::default() };
//! let (model, _report) = train(&embeddings, &cfg)?;
//!
//! let affinities = affinity(&model, &embeddings)?;
//! let result = spectral_cluster(&symmetrize(&affinities)?, KChoice::Fixed(2), 1)?;
//! assert!(clustering_accuracy(&result.labels, &truth)? >= 0.9);
//! # Ok::<(), scl_core::SclError>(())
//! ```

pub mod clustering;
pub mod data_io;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod tensor;
pub mod trainer;

pub use error::{Result, SclError};
pub use tensor::Matrix;
