//! Group-relative policy optimization with guided rollouts.
//!
//! The crate trains a small tabular autoregressive policy on synthetic tasks
//! with verifiable rewards. A fraction of each group's rollouts start from a
//! prefix of the reference reasoning trace; how long that prefix is comes from
//! a fixed value, a decay schedule, or an adaptive controller driven by recent
//! rewards.
//!
//! Module map:
//!
//! * [`tasks`]: token vocabulary, prompt generation, reward verification.
//! * [`policy`]: the differentiable policy, sampling, snapshots, checkpoints.
//! * [`rollout`]: group sampling with guidance injection.
//! * [`grpo`]: advantages, clipped surrogate, KL, both losses and their gradients.
//! * [`guidance`]: guided-count rule, decay schedules, adaptive controller.
//! * [`curriculum`]: dataset ordering and hard-sample filtering.
//! * [`harness`]: configuration, training loop, sweeps, exports.

pub mod curriculum;
pub mod error;
pub mod grpo;
pub mod guidance;
pub mod harness;
pub mod policy;
pub mod rng;
pub mod rollout;
pub mod tasks;

pub use error::{Error, Result};
pub use rng::RngStream;
