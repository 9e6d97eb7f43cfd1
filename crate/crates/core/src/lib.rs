//! Resource allocation for split federated fine-tuning over a shared
//! wireless uplink, with semantic token pruning on the client side.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod harness;
pub mod mobility;
pub mod model;
pub mod optimizer;
pub mod oracle;
pub mod tokens;

pub use error::{HarnessError, ModelError, OptimizeError};
