//! Dual-world attentive feature selection for reinforcement-learning control.
//!
//! The actor of a policy-gradient (or value-based) agent acts on the raw
//! sensor vector while the critic learns from a "virtual" observation, the
//! raw vector scaled elementwise by per-feature selection probabilities from
//! an attention evaluator. Training the critic through that mask yields
//! per-feature importance weights that rank sensors for Top-K selection.

pub mod agents;
pub mod attention;
pub mod envs;
pub mod error;
pub mod nn;
pub mod rng;
pub mod selection;
pub mod trainer;

pub use error::{Error, Result};
