//! Gated residual networks with learned run/skip routers.
//!
//! Every gated block owns a small router that decides, per sample, whether
//! the block runs or is bypassed through its identity connection. Training
//! relaxes the binary decisions with Gumbel-Softmax and regularizes the
//! distribution of routing paths: augmentations of one image are pulled
//! toward a shared path (consistency), different images are pushed apart
//! (diversity), and the expected compute is penalized (cost).
//!
//! The crate is `no_std` with `alloc`. File formats, configuration and the
//! command line live in the `codinet` companion crate.
//!
//! Module map:
//!
//! * [`tensor`], [`graph`], [`kernels`], [`gradcheck`], [`optim`], [`rng`]: numeric core
//!   with tape-based reverse-mode differentiation.
//! * [`blocks`]: residual blocks, stem/head and the per-block cost table.
//! * [`router`]: pool → FC → ReLU → FC routers and the Gumbel relaxation.
//! * [`net`]: the composed network with relaxed and binary forwards.
//! * [`losses`]: classification, consistency, diversity and cost objectives.
//! * [`data`]: CIFAR-10 records, the synthetic blob dataset, augmentation, grouped batches.
//! * [`train`]: two-stage training.
//! * [`analytics`]: path statistics, KL, Pearson correlation, cost reports.

#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod analytics;
pub mod blocks;
pub mod data;
mod error;
pub mod gradcheck;
pub mod graph;
pub mod kernels;
pub mod losses;
pub mod math;
pub mod net;
pub mod optim;
pub mod rng;
pub mod router;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use graph::{Graph, Var};
pub use rng::Rng;
pub use tensor::Tensor;
