//! Contrastive k-mer embeddings for read mapping.
//!
//! The pipeline: parse a reference ([`seq`]), train an encoder with the
//! coordinate-thresholded contrastive loss ([`contrastive`], [`encoder`]),
//! train a position head on frozen representations ([`heads`]), then map reads
//! by head prediction plus local alignment ([`mapper`]). [`analysis`] holds the
//! embedding diagnostics.

pub mod analysis;
pub mod codec;
pub mod contrastive;
pub mod encoder;
mod error;
pub mod heads;
pub mod mapper;
mod nn;
pub mod noise;
pub mod rng;
pub mod seq;

pub use error::{Error, Result};
