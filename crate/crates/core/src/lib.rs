//! Principal and agent on a shared finite-horizon MDP. The agent learns from
//! its own reward plus transfers; the principal learns which transfers make
//! each action worthwhile and then steers play toward maximum social welfare.

// `!(x >= 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agents;
pub mod aggregation;
pub mod envs;
pub mod episode;
pub mod error;
pub mod exec;
pub mod harness;
pub mod mdp;
pub mod mechanism;
pub mod rng;

pub use error::{Error, ErrorCategory, Result};
pub use exec::Execution;
