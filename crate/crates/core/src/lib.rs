//! Channel-imposed fusion (CIF) and the HM-BiTCN classifier.
//!
//! The crate is organised by capability:
//!
//! - [`tensor`]: dense `f64` tensors with a reverse-mode tape
//! - [`cif`]: channel-imposed fusion and its pairwise (PSF) variant
//! - [`snr`]: closed-form and Monte-Carlo SNR gain of a two-channel linear fusion
//! - [`svd`]: one-sided Jacobi SVD and subspace diagnostics of fused blocks
//! - [`model`]: bidirectional dilated causal convolution network
//! - [`train`]: Adam, early stopping, subject-aware splits, classification metrics
//! - [`data`]: dataset container, synthetic generator, experiment configuration
//! - [`cli`]: the `hmbitcn` command-line driver
//! - [`io`]: atomic writes and byte helpers for the binary formats
//!
//! Runnable walkthroughs for each capability live under `examples/`.

pub mod ablation;
pub mod cif;
pub mod cli;
pub mod data;
pub mod error;
pub mod io;
pub mod model;
pub mod rng;
pub mod snr;
pub mod svd;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Graph, Tensor, Var};
