//! Dual-world agents. Policies read raw observations; value functions read
//! the virtual observation `s_r ⊙ p` produced by the attention evaluator, and
//! their regression loss is what trains the attention weights. Every agent
//! also runs single-world (no attention, value function on `s_r`) for subset
//! re-evaluation.

mod ddpg;
mod dqn;
mod heads;
mod ppo;
mod replay;
mod returns;
pub mod trace;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

pub use ddpg::{DdpgAgent, DdpgConfig, DdpgStats};
pub use dqn::{DqnAgent, DqnConfig};
pub use heads::{beta_log_pdf, beta_params, softmax, PolicyHead, SampleMode};
pub use ppo::{
    clip_gradient_coefficient, clip_objective, ActorGradients, ActorStats, AdvantageKind, PpoAgent, PpoBatch, PpoConfig,
};
pub use replay::ReplayBuffer;
pub use returns::{compute_returns, compute_returns_bootstrapped, gae, normalize, simple_advantages};

use crate::attention::{map_virtual_backward, map_virtual_batch, AttentionEvaluator};
use crate::envs::Action;
use crate::error::{Error, Result};
use crate::nn::{average_gradients, AdamConfig, ParamVector};

/// One environment step as stored for learning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Action,
    pub reward: f64,
    pub next_state: Vec<f64>,
    /// The episode reached a terminal state (no bootstrap).
    pub terminal: bool,
    /// The episode ended here, by termination or by the step limit.
    pub done: bool,
    /// The stored trajectory segment ends here (episode end or end of a
    /// worker's share of a collection round).
    pub cut: bool,
    /// Log-probability under the behaviour policy (zero when not applicable).
    pub log_prob: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Ppo,
    Dqn,
    Ddpg,
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ppo" => Ok(Self::Ppo),
            "dqn" => Ok(Self::Dqn),
            "ddpg" => Ok(Self::Ddpg),
            other => Err(Error::InvalidArgument(format!("unknown algorithm `{other}` (expected ppo, dqn or ddpg)"))),
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Ppo => "ppo",
            Self::Dqn => "dqn",
            Self::Ddpg => "ddpg",
        })
    }
}

/// Averages per-worker gradient sets computed from the same parameters and
/// applies the mean once with Adam.
pub fn averaged_update(params: &mut ParamVector, grads: &[Vec<f64>], adam: &AdamConfig, max_norm: Option<f64>) -> Result<()> {
    let mean = average_gradients(grads)?;
    params.set_grads(&mean)?;
    if let Some(limit) = max_norm {
        params.clip_grad_norm(limit);
    }
    params.adam_step(adam)
}

/// Rows of `states` selected by `idx`.
pub(crate) fn rows(states: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    states.select(Axis(0), idx)
}

pub(crate) fn stack(rows: &[&[f64]]) -> Result<Array2<f64>> {
    let width = rows.first().map_or(0, |r| r.len());
    let mut flat = Vec::with_capacity(rows.len() * width);
    for r in rows {
        crate::error::check_dim("state batch", width, r.len())?;
        flat.extend_from_slice(r);
    }
    Array2::from_shape_vec((rows.len(), width), flat).map_err(|e| Error::InvalidArgument(e.to_string()))
}

/// Raw states of `transitions` as a `[T × m]` matrix.
pub fn stack_states(transitions: &[Transition]) -> Result<Array2<f64>> {
    stack(&transitions.iter().map(|t| t.state.as_slice()).collect::<Vec<_>>())
}

/// Splits a minibatch into `shards` contiguous, non-empty pieces.
pub(crate) fn shard(idx: &[usize], shards: usize) -> Vec<&[usize]> {
    let shards = shards.clamp(1, idx.len().max(1));
    let base = idx.len() / shards;
    let extra = idx.len() % shards;
    let mut out = Vec::with_capacity(shards);
    let mut start = 0;
    for s in 0..shards {
        let len = base + usize::from(s < extra);
        if len > 0 {
            out.push(&idx[start..start + len]);
        }
        start += len;
    }
    out
}

/// Forward through the attention evaluator in training mode: returns
/// `(p, s_v)` with activations cached for [`attention_backward`].
pub(crate) fn attention_forward(ae: &mut AttentionEvaluator, s_r: ArrayView2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
    let p = ae.forward_train(s_r)?;
    let s_v = map_virtual_batch(s_r, p.view())?;
    Ok((p, s_v))
}

/// Pushes `dℓ/ds_v` into the attention parameters.
pub(crate) fn attention_backward(
    ae: &mut AttentionEvaluator,
    grad_sv: ArrayView2<f64>,
    s_r: ArrayView2<f64>,
    p: ArrayView2<f64>,
) -> Result<()> {
    let (_, grad_p) = map_virtual_backward(grad_sv, s_r, p);
    ae.backward(grad_p.view())?;
    Ok(())
}

/// `s_r ⊙ p(s_r)` without caching.
pub(crate) fn virtual_states(ae: &AttentionEvaluator, s_r: ArrayView2<f64>) -> Result<Array2<f64>> {
    let p = ae.weights(s_r)?;
    map_virtual_batch(s_r, p.view())
}
