//! Desk-scale laboratory for embedding learning on synthetic identities.
//!
//! The crate is organized around four stages:
//!
//! * [`factor`] — disentangled latent factors (identity, expression,
//!   illumination, pose, noise), the fixed z-to-lambda mapper, and identity
//!   mixup.
//! * [`synth`] — rendering lambda factors into observation vectors for two
//!   domains, dataset construction (width/depth grids, long tails, attribute
//!   ablations), and the pair-verification protocol.
//! * [`train`] — a small tanh MLP embedder trained with the unified
//!   margin-based softmax loss, analytical gradients, SGD with momentum, and
//!   optional domain mixup.
//! * [`eval`] — 10-fold verification, cross-domain matrices, classical MDS,
//!   and intra-class spread statistics.
//!
//! Everything is deterministic given explicit seeds: every random stream is
//! derived from a base seed through [`seed::derive`], so datasets, training
//! trajectories, and evaluation results reproduce bit-exactly.
//!
//! The crate is `no_std` (with `alloc`); all file formats, CLI, and reporting
//! live in the companion `synlab` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod eval;
pub mod factor;
pub mod fmath;
pub mod linalg;
pub mod seed;
pub mod synth;
pub mod train;

pub use seed::CoreRng;
