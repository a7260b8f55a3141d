//! Forward ops with exact vector-Jacobian products.
//!
//! Layout conventions: sequence tensors are `[batch, length, channels]`;
//! dense weights are `[in, out]`; conv weights are `[kernel, in, out]`.

mod attention;
mod basic;
mod loss;
mod nn;

pub use attention::AttentionMask;
