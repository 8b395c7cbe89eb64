//! Semantic-visual embedding for generalized zero-shot recognition.
//!
//! The crate trains three semantic-to-visual projection heads (one shared
//! across domains, one per domain) together with a shared attribute decoder
//! and a seen-class softmax classifier, all over precomputed per-image
//! feature vectors. Inference routes each sample either to the softmax
//! classifier or to a cosine ranking over unseen-class embeddings, depending
//! on whether the maximum classification score clears a threshold.
//!
//! Everything here is pure computation over `f64` values; file formats and
//! the command-line front end live in the companion `dsen` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod data;
pub mod error;
pub mod eval;
pub mod losses;
pub mod matrix;
pub mod model;
pub mod nn;
pub mod train;

pub use data::{GenSpec, Split, ZslDataset};
pub use error::DsenError;
pub use eval::{EvalResult, Prediction};
pub use losses::{LossBreakdown, LossToggles, LossWeights};
pub use matrix::Matrix2D;
pub use model::DsenModel;
pub use train::{TrainConfig, TrainReport};
