use ndarray::{Array1, Array2, ArrayView2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::heads::{PolicyHead, SampleMode};
use super::returns::{compute_returns_bootstrapped, gae, normalize, simple_advantages};
use super::trace::{self, Input, Net, Phase};
use super::{attention_backward, attention_forward, averaged_update, rows, shard, stack, virtual_states, Transition};
use crate::attention::AttentionEvaluator;
use crate::envs::{Action, EnvSpec};
use crate::error::{Error, Result};
use crate::nn::{Activation, AdamConfig, Mlp, NetSnapshot, ParamVector, Parameterized, SnapshotBundle};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdvantageKind {
    /// GAE(λ) over TD residuals of the value function.
    Gae,
    /// `R_t − V_t`.
    Simple,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub clip: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub attention_hidden: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub attention_lr: f64,
    pub advantage: AdvantageKind,
    pub normalize_advantages: bool,
    pub max_grad_norm: Option<f64>,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lambda: 0.95,
            clip: 0.2,
            epochs: 4,
            minibatch: 64,
            actor_hidden: vec![64, 64],
            critic_hidden: vec![512, 512],
            attention_hidden: 20,
            actor_lr: 3e-4,
            critic_lr: 1e-3,
            attention_lr: 1e-3,
            advantage: AdvantageKind::Gae,
            normalize_advantages: true,
            max_grad_norm: Some(0.5),
        }
    }
}

/// One collection round prepared for the update.
#[derive(Debug, Clone)]
pub struct PpoBatch {
    pub states: Array2<f64>,
    pub actions: Vec<Action>,
    pub rewards: Vec<f64>,
    pub cuts: Vec<bool>,
    pub terminals: Vec<bool>,
    pub log_probs_old: Vec<f64>,
    pub values: Vec<f64>,
    pub returns: Vec<f64>,
    pub advantages: Vec<f64>,
}

impl PpoBatch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// `min(r·A, clip(r, 1 − ε, 1 + ε)·A)`.
pub fn clip_objective(ratio: f64, advantage: f64, eps: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - eps, 1.0 + eps) * advantage)
}

/// Derivative of [`clip_objective`] with respect to `ln π`: zero where the
/// clipped branch is active, `A·r` elsewhere.
pub fn clip_gradient_coefficient(ratio: f64, advantage: f64, eps: f64) -> f64 {
    if (advantage > 0.0 && ratio > 1.0 + eps) || (advantage < 0.0 && ratio < 1.0 - eps) {
        0.0
    } else {
        advantage * ratio
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ActorStats {
    /// Mean clipped surrogate over all samples used.
    pub objective: f64,
    /// Samples dropped because their probability ratio was not finite.
    pub skipped: usize,
    /// Fraction of samples whose gradient was clipped to zero.
    pub clip_fraction: f64,
}

/// Gradient of the negated surrogate for one shard.
#[derive(Debug, Clone)]
pub struct ActorGradients {
    pub objective_sum: f64,
    pub used: usize,
    pub skipped: usize,
    pub clipped: usize,
}

#[derive(Debug, Clone)]
pub struct PpoAgent {
    cfg: PpoConfig,
    head: PolicyHead,
    actor: Mlp,
    critic: Mlp,
    attention: Option<AttentionEvaluator>,
}

fn sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    std::iter::once(input).chain(hidden.iter().copied()).chain(std::iter::once(output)).collect()
}

impl PpoAgent {
    /// `dual` adds the attention evaluator between raw states and the critic.
    pub fn new(spec: &EnvSpec, cfg: &PpoConfig, dual: bool, rng: &mut Rng) -> Result<Self> {
        let head = PolicyHead::stochastic_for(&spec.action_space)?;
        let m = spec.state_dim;
        let actor = Mlp::new(&sizes(m, &cfg.actor_hidden, head.raw_dim()), Activation::Tanh, Activation::Identity, rng);
        let critic = Mlp::new(&sizes(m, &cfg.critic_hidden, 1), Activation::Tanh, Activation::Identity, rng);
        let attention = dual.then(|| AttentionEvaluator::new(m, cfg.attention_hidden, rng));
        Ok(Self {
            cfg: cfg.clone(),
            head,
            actor,
            critic,
            attention,
        })
    }

    pub fn config(&self) -> &PpoConfig {
        &self.cfg
    }

    pub fn head(&self) -> &PolicyHead {
        &self.head
    }

    pub fn actor(&self) -> &Mlp {
        &self.actor
    }

    pub fn critic(&self) -> &Mlp {
        &self.critic
    }

    pub fn attention(&self) -> Option<&AttentionEvaluator> {
        self.attention.as_ref()
    }

    pub fn attention_mut(&mut self) -> Option<&mut AttentionEvaluator> {
        self.attention.as_mut()
    }

    pub fn actor_mut(&mut self) -> &mut Mlp {
        &mut self.actor
    }

    pub fn critic_mut(&mut self) -> &mut Mlp {
        &mut self.critic
    }

    /// Acts on a raw observation.
    pub fn act(&self, state: &[f64], rng: &mut Rng, mode: SampleMode) -> Result<(Action, f64)> {
        trace::record(Phase::Act, Net::Actor, Input::Real);
        let raw = self.actor.forward_one(state)?;
        self.head.sample(&raw, rng, mode)
    }

    /// `V(s_v)` (or `V(s_r)` without attention) for a batch of raw states.
    pub fn values(&self, s_r: ArrayView2<f64>) -> Result<Vec<f64>> {
        let v = match &self.attention {
            Some(ae) => {
                trace::record(Phase::Evaluate, Net::Attention, Input::Real);
                trace::record(Phase::Evaluate, Net::Critic, Input::Virtual);
                self.critic.forward(virtual_states(ae, s_r)?.view())?
            }
            None => {
                trace::record(Phase::Evaluate, Net::Critic, Input::Real);
                self.critic.forward(s_r)?
            }
        };
        Ok(v.into_raw_vec_and_offset().0)
    }

    /// Computes values, bootstrapped returns and advantages for a round of
    /// transitions stored in collection order.
    pub fn prepare(&self, transitions: &[Transition]) -> Result<PpoBatch> {
        if transitions.is_empty() {
            return Err(Error::InvalidArgument("empty PPO batch".into()));
        }
        let states = stack(&transitions.iter().map(|t| t.state.as_slice()).collect::<Vec<_>>())?;
        let values = self.values(states.view())?;
        let n = transitions.len();
        let cuts: Vec<bool> = transitions.iter().enumerate().map(|(i, t)| t.cut || i + 1 == n).collect();
        let boot_idx: Vec<usize> = (0..n).filter(|&i| cuts[i] && !transitions[i].terminal).collect();
        let mut bootstrap = vec![0.0; n];
        if !boot_idx.is_empty() {
            let next = stack(&boot_idx.iter().map(|&i| transitions[i].next_state.as_slice()).collect::<Vec<_>>())?;
            for (i, v) in boot_idx.iter().zip(self.values(next.view())?) {
                bootstrap[*i] = v;
            }
        }
        let rewards: Vec<f64> = transitions.iter().map(|t| t.reward).collect();
        let terminals: Vec<bool> = transitions.iter().map(|t| t.terminal).collect();
        let returns = compute_returns_bootstrapped(&rewards, &cuts, &bootstrap, self.cfg.gamma)?;
        let mut advantages = match self.cfg.advantage {
            AdvantageKind::Gae => {
                let next_values: Vec<f64> = (0..n).map(|i| if cuts[i] { bootstrap[i] } else { values[i + 1] }).collect();
                gae(&rewards, &values, &next_values, &cuts, self.cfg.gamma, self.cfg.lambda)?
            }
            AdvantageKind::Simple => simple_advantages(&returns, &values)?,
        };
        if self.cfg.normalize_advantages {
            normalize(&mut advantages)?;
        }
        Ok(PpoBatch {
            states,
            actions: transitions.iter().map(|t| t.action.clone()).collect(),
            rewards,
            cuts,
            terminals,
            log_probs_old: transitions.iter().map(|t| t.log_prob).collect(),
            values,
            returns,
            advantages,
        })
    }

    /// Accumulates the gradient of the negated clipped surrogate over
    /// `idx` into the actor's gradient buffer. Reads raw states only.
    pub fn actor_gradients(&mut self, batch: &PpoBatch, idx: &[usize]) -> Result<ActorGradients> {
        let x = rows(&batch.states, idx);
        trace::record(Phase::ActorUpdate, Net::Actor, Input::Real);
        let raw = self.actor.forward_train(x.view())?;
        let mut grad = Array2::zeros(raw.raw_dim());
        let mut out = ActorGradients {
            objective_sum: 0.0,
            used: 0,
            skipped: 0,
            clipped: 0,
        };
        let eps = self.cfg.clip;
        for (row, &i) in idx.iter().enumerate() {
            let raw_row = raw.row(row);
            let (lp, g) = self.head.log_prob_grad(raw_row.as_slice().expect("row"), &batch.actions[i])?;
            let ratio = (lp - batch.log_probs_old[i]).exp();
            if !ratio.is_finite() {
                out.skipped += 1;
                continue;
            }
            let adv = batch.advantages[i];
            out.objective_sum += clip_objective(ratio, adv, eps);
            out.used += 1;
            let coeff = clip_gradient_coefficient(ratio, adv, eps);
            if coeff == 0.0 && adv != 0.0 {
                out.clipped += 1;
            }
            for (gj, dj) in grad.row_mut(row).iter_mut().zip(&g) {
                *gj = -coeff * dj;
            }
        }
        self.actor.backward(grad.view())?;
        Ok(out)
    }

    /// Ascends the clipped surrogate for `epochs` passes over shuffled
    /// minibatches. Each minibatch is split into `shards` pieces whose
    /// gradients are averaged before a single Adam step.
    pub fn actor_update(&mut self, batch: &PpoBatch, shards: usize, rng: &mut Rng) -> Result<ActorStats> {
        let adam = AdamConfig::with_lr(self.cfg.actor_lr);
        let mut order: Vec<usize> = (0..batch.len()).collect();
        let (mut objective, mut used, mut skipped, mut clipped) = (0.0, 0usize, 0usize, 0usize);
        for _ in 0..self.cfg.epochs {
            order.shuffle(rng);
            for mb in order.chunks(self.cfg.minibatch.max(1)) {
                let mut sets = Vec::new();
                for part in shard(mb, shards) {
                    self.actor.params_mut().zero_grad();
                    let g = self.actor_gradients(batch, part)?;
                    objective += g.objective_sum;
                    used += g.used;
                    skipped += g.skipped;
                    clipped += g.clipped;
                    sets.push(self.actor.params().grads().to_vec());
                }
                averaged_update(self.actor.params_mut(), &sets, &adam, self.cfg.max_grad_norm)?;
            }
        }
        Ok(ActorStats {
            objective: if used > 0 { objective / used as f64 } else { 0.0 },
            skipped,
            clip_fraction: if used > 0 { clipped as f64 / used as f64 } else { 0.0 },
        })
    }

    /// Accumulates the gradient of `mean (V(s_r ⊙ p) − R)²` over `idx` into
    /// the critic and attention gradient buffers. Returns the loss.
    pub fn critic_gradients(&mut self, states: &Array2<f64>, returns: &[f64], idx: &[usize]) -> Result<f64> {
        let x = rows(states, idx);
        let target = Array1::from_iter(idx.iter().map(|&i| returns[i]));
        let (v, p) = match self.attention.as_mut() {
            Some(ae) => {
                trace::record(Phase::CriticUpdate, Net::Attention, Input::Real);
                let (p, s_v) = attention_forward(ae, x.view())?;
                trace::record(Phase::CriticUpdate, Net::Critic, Input::Virtual);
                (self.critic.forward_train(s_v.view())?, Some(p))
            }
            None => {
                trace::record(Phase::CriticUpdate, Net::Critic, Input::Real);
                (self.critic.forward_train(x.view())?, None)
            }
        };
        let err = &v.column(0) - &target;
        let loss = err.mapv(|e| e * e).mean().unwrap_or(0.0);
        if !loss.is_finite() {
            self.critic.clear_cache();
            return Err(Error::NonFinite("critic loss".into()));
        }
        let grad_v = (2.0 * &err).insert_axis(ndarray::Axis(1));
        let grad_sv = self.critic.backward(grad_v.view())?;
        if let (Some(ae), Some(p)) = (self.attention.as_mut(), p) {
            attention_backward(ae, grad_sv.view(), x.view(), p.view())?;
        }
        Ok(loss)
    }

    /// Joint regression of critic and attention evaluator on the returns.
    /// Returns the mean minibatch loss.
    pub fn critic_update(&mut self, batch: &PpoBatch, shards: usize, rng: &mut Rng) -> Result<f64> {
        let critic_adam = AdamConfig::with_lr(self.cfg.critic_lr);
        let ae_adam = AdamConfig::with_lr(self.cfg.attention_lr);
        let mut order: Vec<usize> = (0..batch.len()).collect();
        let (mut total, mut count) = (0.0, 0usize);
        for _ in 0..self.cfg.epochs {
            order.shuffle(rng);
            for mb in order.chunks(self.cfg.minibatch.max(1)) {
                let mut critic_sets = Vec::new();
                let mut ae_sets = Vec::new();
                for part in shard(mb, shards) {
                    self.critic.params_mut().zero_grad();
                    if let Some(ae) = self.attention.as_mut() {
                        ae.params_mut().zero_grad();
                    }
                    total += self.critic_gradients(&batch.states, &batch.returns, part)?;
                    count += 1;
                    critic_sets.push(self.critic.params().grads().to_vec());
                    if let Some(ae) = &self.attention {
                        ae_sets.push(ae.params().grads().to_vec());
                    }
                }
                averaged_update(self.critic.params_mut(), &critic_sets, &critic_adam, self.cfg.max_grad_norm)?;
                if let Some(ae) = self.attention.as_mut() {
                    averaged_update(ae.params_mut(), &ae_sets, &ae_adam, self.cfg.max_grad_norm)?;
                }
            }
        }
        Ok(if count > 0 { total / count as f64 } else { 0.0 })
    }

    pub fn snapshot(&self) -> SnapshotBundle {
        let mut nets = vec![self.actor.snapshot("actor"), self.critic.snapshot("critic")];
        if let Some(ae) = &self.attention {
            nets.push(ae.snapshot_params("attention"));
        }
        SnapshotBundle::new(nets)
    }

    pub fn from_snapshot(spec: &EnvSpec, cfg: &PpoConfig, bundle: &SnapshotBundle) -> Result<Self> {
        let get = |name: &str| -> Result<&NetSnapshot> {
            bundle
                .get(name)
                .ok_or_else(|| Error::Format(format!("checkpoint has no `{name}` network")))
        };
        let head = PolicyHead::stochastic_for(&spec.action_space)?;
        let actor = Mlp::from_snapshot(get("actor")?)?;
        crate::error::check_dim("checkpoint actor input", spec.state_dim, actor.in_dim())?;
        crate::error::check_dim("checkpoint actor output", head.raw_dim(), actor.out_dim())?;
        let attention = match bundle.get("attention") {
            Some(s) => Some(AttentionEvaluator::from_snapshot(s)?),
            None => None,
        };
        Ok(Self {
            cfg: cfg.clone(),
            head,
            actor,
            critic: Mlp::from_snapshot(get("critic")?)?,
            attention,
        })
    }
}

impl Parameterized for PpoAgent {
    fn param_vectors(&self) -> Vec<&ParamVector> {
        let mut v = vec![self.actor.params(), self.critic.params()];
        if let Some(ae) = &self.attention {
            v.push(ae.params());
        }
        v
    }

    fn param_vectors_mut(&mut self) -> Vec<&mut ParamVector> {
        let mut v = vec![self.actor.params_mut(), self.critic.params_mut()];
        if let Some(ae) = self.attention.as_mut() {
            v.push(ae.params_mut());
        }
        v
    }
}
