//! Minimal reverse-mode automatic differentiation for the kmerspace models.
//!
//! Graphs are define-by-run: build a [`Tape`] per step, register parameters
//! from a [`ParamStore`], run forward ops, call [`Tape::backward`] on a scalar
//! loss and feed [`Tape::param_grads`] to [`AdamW::step`].

pub mod checkpoint;
mod error;
pub mod gradcheck;
mod init;
mod ops;
mod optim;
mod params;
mod scalar;
mod schedule;
mod tape;
mod tensor;

pub use error::{AutodiffError, Result};
pub use init::init_truncated_normal;
pub use ops::AttentionMask;
pub use optim::{grad_norm, AdamW, AdamWConfig};
pub use params::{ParamId, ParamStore};
pub use scalar::{gemm, Scalar};
pub use schedule::cosine_warmup_lr;
pub use tape::{Tape, Var, VjpCtx, VjpFn};
pub use tensor::Tensor;
