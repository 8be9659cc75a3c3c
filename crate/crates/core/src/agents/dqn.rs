use ndarray::{Array2, ArrayView2};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::trace::{self, Input, Net, Phase};
use super::{attention_backward, attention_forward, stack, virtual_states, Transition};
use crate::attention::AttentionEvaluator;
use crate::envs::{Action, ActionSpace, EnvSpec};
use crate::error::{Error, Result};
use crate::nn::{Activation, AdamConfig, Mlp, NetSnapshot, ParamVector, Parameterized, SnapshotBundle};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DqnConfig {
    pub gamma: f64,
    pub lr: f64,
    pub attention_lr: f64,
    /// Adam epsilon of the attention evaluator.
    pub attention_eps: f64,
    /// Q updates before the attention evaluator starts learning.
    pub attention_warmup: u64,
    pub hidden: Vec<usize>,
    pub attention_hidden: usize,
    pub batch: usize,
    pub buffer: usize,
    /// Transitions collected before the first update.
    pub warmup: usize,
    /// Updates between hard target synchronisations.
    pub target_sync: usize,
    pub eps_start: f64,
    pub eps_end: f64,
    /// Fraction of the run over which ε decays linearly.
    pub eps_decay_fraction: f64,
    /// One update per this many environment steps.
    pub train_every: usize,
    /// Torque levels used when the task has a continuous action space.
    pub bins: usize,
    pub max_grad_norm: Option<f64>,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lr: 1e-3,
            attention_lr: 3e-3,
            attention_eps: 0.1,
            attention_warmup: 30_000,
            hidden: vec![64, 64],
            attention_hidden: 20,
            batch: 64,
            buffer: 50_000,
            warmup: 1_000,
            target_sync: 500,
            eps_start: 1.0,
            eps_end: 0.05,
            eps_decay_fraction: 0.5,
            train_every: 1,
            bins: 11,
            max_grad_norm: Some(10.0),
        }
    }
}

impl DqnConfig {
    /// Exploration rate after `progress ∈ [0, 1]` of the run.
    pub fn epsilon(&self, progress: f64) -> f64 {
        if self.eps_decay_fraction <= 0.0 || progress >= self.eps_decay_fraction {
            return self.eps_end;
        }
        let frac = (progress / self.eps_decay_fraction).max(0.0);
        self.eps_start + (self.eps_end - self.eps_start) * frac
    }
}

/// Q-learning on the virtual state: a single network `Q(s_r ⊙ p, ·)` both
/// acts (ε-greedy) and regresses on TD targets; the attention evaluator is
/// trained through it. The target copy includes the attention evaluator.
#[derive(Debug, Clone)]
pub struct DqnAgent {
    cfg: DqnConfig,
    actions: usize,
    q: Mlp,
    target_q: Mlp,
    attention: Option<AttentionEvaluator>,
    target_attention: Option<AttentionEvaluator>,
    updates: u64,
}

impl DqnAgent {
    pub fn new(spec: &EnvSpec, cfg: &DqnConfig, dual: bool, rng: &mut Rng) -> Result<Self> {
        let ActionSpace::Discrete(actions) = spec.action_space else {
            return Err(Error::InvalidArgument(format!(
                "DQN needs a discrete action space; `{}` is continuous (wrap it with Discretized)",
                spec.name
            )));
        };
        let m = spec.state_dim;
        let sizes: Vec<usize> = std::iter::once(m)
            .chain(cfg.hidden.iter().copied())
            .chain(std::iter::once(actions))
            .collect();
        let q = Mlp::new(&sizes, Activation::Tanh, Activation::Identity, rng);
        let attention = dual.then(|| AttentionEvaluator::new(m, cfg.attention_hidden, rng));
        Ok(Self {
            cfg: cfg.clone(),
            actions,
            target_q: q.clone(),
            q,
            target_attention: attention.clone(),
            attention,
            updates: 0,
        })
    }

    pub fn config(&self) -> &DqnConfig {
        &self.cfg
    }

    pub fn q(&self) -> &Mlp {
        &self.q
    }

    pub fn target_q(&self) -> &Mlp {
        &self.target_q
    }

    pub fn attention(&self) -> Option<&AttentionEvaluator> {
        self.attention.as_ref()
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    fn input(&self, ae: Option<&AttentionEvaluator>, s_r: ArrayView2<f64>, phase: Phase) -> Result<Array2<f64>> {
        match ae {
            Some(ae) => {
                trace::record(phase, Net::Attention, Input::Real);
                trace::record(phase, Net::Q, Input::Virtual);
                virtual_states(ae, s_r)
            }
            None => {
                trace::record(phase, Net::Q, Input::Real);
                Ok(s_r.to_owned())
            }
        }
    }

    /// Online Q-values for a batch of raw states.
    pub fn q_values(&self, s_r: ArrayView2<f64>) -> Result<Array2<f64>> {
        let x = self.input(self.attention.as_ref(), s_r, Phase::Evaluate)?;
        self.q.forward(x.view())
    }

    fn target_q_values(&self, s_r: ArrayView2<f64>) -> Result<Array2<f64>> {
        let x = self.input(self.target_attention.as_ref(), s_r, Phase::Evaluate)?;
        self.target_q.forward(x.view())
    }

    pub fn greedy(&self, state: &[f64]) -> Result<usize> {
        let view = ArrayView2::from_shape((1, state.len()), state).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let q = self.q_values(view)?;
        let row = q.row(0);
        let mut best = 0;
        for (i, v) in row.iter().enumerate() {
            if *v > row[best] {
                best = i;
            }
        }
        Ok(best)
    }

    pub fn act(&self, state: &[f64], epsilon: f64, rng: &mut Rng) -> Result<usize> {
        if rng.random::<f64>() < epsilon {
            Ok(rng.random_range(0..self.actions))
        } else {
            self.greedy(state)
        }
    }

    /// `r + γ (1 − terminal) max_a′ Q_target(s′, a′)`.
    pub fn td_targets(&self, batch: &[&Transition]) -> Result<Vec<f64>> {
        let next = stack(&batch.iter().map(|t| t.next_state.as_slice()).collect::<Vec<_>>())?;
        let q_next = self.target_q_values(next.view())?;
        Ok(batch
            .iter()
            .zip(q_next.rows())
            .map(|(t, q)| {
                let tail = if t.terminal {
                    0.0
                } else {
                    q.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                };
                t.reward + self.cfg.gamma * tail
            })
            .collect())
    }

    fn action_index(&self, a: &Action) -> Result<usize> {
        match a {
            Action::Discrete(i) if *i < self.actions => Ok(*i),
            other => Err(Error::InvalidAction {
                action: format!("{other:?}"),
                space: format!("Discrete({})", self.actions),
            }),
        }
    }

    /// Accumulates the gradient of `mean (Q(s, a) − y)²` into the Q and
    /// attention buffers. Returns the loss.
    pub fn loss_gradients(&mut self, batch: &[&Transition], targets: &[f64]) -> Result<f64> {
        let s = stack(&batch.iter().map(|t| t.state.as_slice()).collect::<Vec<_>>())?;
        let (q, p) = match self.attention.as_mut() {
            Some(ae) => {
                trace::record(Phase::CriticUpdate, Net::Attention, Input::Real);
                let (p, s_v) = attention_forward(ae, s.view())?;
                trace::record(Phase::CriticUpdate, Net::Q, Input::Virtual);
                (self.q.forward_train(s_v.view())?, Some(p))
            }
            None => {
                trace::record(Phase::CriticUpdate, Net::Q, Input::Real);
                (self.q.forward_train(s.view())?, None)
            }
        };
        let mut grad = Array2::zeros(q.raw_dim());
        let mut loss = 0.0;
        for (i, t) in batch.iter().enumerate() {
            let a = self.action_index(&t.action)?;
            let err = q[[i, a]] - targets[i];
            loss += err * err;
            grad[[i, a]] = 2.0 * err;
        }
        loss /= batch.len() as f64;
        if !loss.is_finite() {
            self.q.clear_cache();
            return Err(Error::NonFinite("TD loss".into()));
        }
        let grad_sv = self.q.backward(grad.view())?;
        if let (Some(ae), Some(p)) = (self.attention.as_mut(), p) {
            attention_backward(ae, grad_sv.view(), s.view(), p.view())?;
        }
        Ok(loss)
    }

    /// One TD step on `batch`; hard-syncs the target every `target_sync` updates.
    pub fn update(&mut self, batch: &[&Transition]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::InsufficientReplay { have: 0, need: 1 });
        }
        let targets = self.td_targets(batch)?;
        self.q.params_mut().zero_grad();
        if let Some(ae) = self.attention.as_mut() {
            ae.params_mut().zero_grad();
        }
        let loss = self.loss_gradients(batch, &targets)?;
        if let Some(limit) = self.cfg.max_grad_norm {
            self.q.params_mut().clip_grad_norm(limit);
        }
        self.q.params_mut().adam_step(&AdamConfig::with_lr(self.cfg.lr))?;
        if let Some(ae) = self.attention.as_mut() {
            if self.updates >= self.cfg.attention_warmup {
                if let Some(limit) = self.cfg.max_grad_norm {
                    ae.params_mut().clip_grad_norm(limit);
                }
                ae.params_mut().adam_step(&AdamConfig {
                    lr: self.cfg.attention_lr,
                    eps: self.cfg.attention_eps,
                    ..AdamConfig::default()
                })?;
            } else {
                ae.params_mut().zero_grad();
            }
        }
        self.updates += 1;
        if self.cfg.target_sync > 0 && self.updates % self.cfg.target_sync as u64 == 0 {
            self.sync_target();
        }
        Ok(loss)
    }

    pub fn sync_target(&mut self) {
        self.target_q = self.q.clone();
        self.target_attention = self.attention.clone();
    }

    pub fn snapshot(&self) -> SnapshotBundle {
        let mut nets = vec![self.q.snapshot("q"), self.target_q.snapshot("q_target")];
        if let (Some(ae), Some(t)) = (&self.attention, &self.target_attention) {
            nets.push(ae.snapshot_params("attention"));
            nets.push(t.snapshot_params("attention_target"));
        }
        SnapshotBundle::new(nets)
    }

    pub fn from_snapshot(spec: &EnvSpec, cfg: &DqnConfig, bundle: &SnapshotBundle, updates: u64) -> Result<Self> {
        let get = |name: &str| -> Result<&NetSnapshot> {
            bundle
                .get(name)
                .ok_or_else(|| Error::Format(format!("checkpoint has no `{name}` network")))
        };
        let ActionSpace::Discrete(actions) = spec.action_space else {
            return Err(Error::InvalidArgument("DQN needs a discrete action space".into()));
        };
        let q = Mlp::from_snapshot(get("q")?)?;
        crate::error::check_dim("checkpoint Q output", actions, q.out_dim())?;
        let attention = bundle.get("attention").map(AttentionEvaluator::from_snapshot).transpose()?;
        let target_attention = bundle.get("attention_target").map(AttentionEvaluator::from_snapshot).transpose()?;
        Ok(Self {
            cfg: cfg.clone(),
            actions,
            q,
            target_q: Mlp::from_snapshot(get("q_target")?)?,
            attention,
            target_attention,
            updates,
        })
    }
}

impl Parameterized for DqnAgent {
    fn param_vectors(&self) -> Vec<&ParamVector> {
        let mut v = vec![self.q.params()];
        if let Some(ae) = &self.attention {
            v.push(ae.params());
        }
        v
    }

    fn param_vectors_mut(&mut self) -> Vec<&mut ParamVector> {
        let mut v = vec![self.q.params_mut()];
        if let Some(ae) = self.attention.as_mut() {
            v.push(ae.params_mut());
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::make_env;
    use crate::nn::{grad_check, GradCheckOptions};
    use crate::rng::rng_from;

    fn transition(state: Vec<f64>, action: usize, reward: f64, next_state: Vec<f64>, terminal: bool) -> Transition {
        Transition {
            state,
            action: Action::Discrete(action),
            reward,
            next_state,
            terminal,
            done: terminal,
            cut: terminal,
            log_prob: 0.0,
        }
    }

    fn small() -> DqnConfig {
        DqnConfig {
            hidden: vec![16],
            attention_hidden: 4,
            ..DqnConfig::default()
        }
    }

    #[test]
    fn zero_discount_targets_are_rewards() {
        let spec = make_env("cartpole").unwrap().spec().clone();
        let cfg = DqnConfig { gamma: 0.0, ..small() };
        let agent = DqnAgent::new(&spec, &cfg, true, &mut rng_from(0, 1)).unwrap();
        let batch = [
            transition(vec![0.1; 4], 0, 1.5, vec![0.2; 4], false),
            transition(vec![0.0; 4], 1, -2.0, vec![0.3; 4], false),
        ];
        let refs: Vec<&Transition> = batch.iter().collect();
        assert_eq!(agent.td_targets(&refs).unwrap(), vec![1.5, -2.0]);
    }

    #[test]
    fn terminal_targets_exclude_bootstrap() {
        let spec = make_env("cartpole").unwrap().spec().clone();
        let agent = DqnAgent::new(&spec, &small(), false, &mut rng_from(0, 1)).unwrap();
        let t = transition(vec![0.1; 4], 0, 0.7, vec![0.5; 4], true);
        assert_eq!(agent.td_targets(&[&t]).unwrap(), vec![0.7]);
        let live = transition(vec![0.1; 4], 0, 0.7, vec![0.5; 4], false);
        assert_ne!(agent.td_targets(&[&live]).unwrap(), vec![0.7]);
    }

    #[test]
    fn empty_batch_is_an_error() {
        let spec = make_env("cartpole").unwrap().spec().clone();
        let mut agent = DqnAgent::new(&spec, &small(), false, &mut rng_from(0, 1)).unwrap();
        assert!(matches!(agent.update(&[]), Err(Error::InsufficientReplay { .. })));
    }

    #[test]
    fn continuous_task_is_rejected() {
        let spec = make_env("pendulum").unwrap().spec().clone();
        assert!(DqnAgent::new(&spec, &small(), false, &mut rng_from(0, 1)).is_err());
    }

    #[test]
    fn td_gradient_passes_grad_check_through_attention() {
        let spec = make_env("cartpole+aug").unwrap().spec().clone();
        let mut agent = DqnAgent::new(&spec, &small(), true, &mut rng_from(5, 1)).unwrap();
        let mut rng = rng_from(6, 0);
        let batch: Vec<Transition> = (0..24)
            .map(|i| {
                let s: Vec<f64> = (0..spec.state_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                let n: Vec<f64> = (0..spec.state_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                transition(s, i % 2, rng.random_range(-1.0..1.0), n, i % 5 == 0)
            })
            .collect();
        let refs: Vec<&Transition> = batch.iter().collect();
        let targets = agent.td_targets(&refs).unwrap();
        let err = grad_check(
            &mut agent,
            |a| a.loss_gradients(&refs, &targets).map(|_| ()),
            |a| {
                let s = stack(&refs.iter().map(|t| t.state.as_slice()).collect::<Vec<_>>())?;
                let q = a.q_values(s.view())?;
                let mut total = 0.0;
                for (i, t) in refs.iter().enumerate() {
                    let Action::Discrete(k) = t.action else { unreachable!() };
                    total += (q[[i, k]] - targets[i]).powi(2);
                }
                Ok(total / refs.len() as f64)
            },
            GradCheckOptions::default(),
        )
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn target_sync_copies_attention_too() {
        let spec = make_env("cartpole+aug").unwrap().spec().clone();
        let cfg = DqnConfig { target_sync: 2, ..small() };
        let mut agent = DqnAgent::new(&spec, &cfg, true, &mut rng_from(5, 1)).unwrap();
        let t = transition(vec![0.3; spec.state_dim], 1, 1.0, vec![0.2; spec.state_dim], false);
        agent.update(&[&t]).unwrap();
        assert_ne!(agent.q.params().values(), agent.target_q.params().values());
        agent.update(&[&t]).unwrap();
        assert_eq!(agent.q.params().values(), agent.target_q.params().values());
        assert_eq!(
            agent.attention.as_ref().unwrap().params().values(),
            agent.target_attention.as_ref().unwrap().params().values()
        );
    }

    /// Two states, "stay" or "switch"; reward 1 for landing in state 1.
    fn two_state_mdp() -> Vec<Transition> {
        let one_hot = |s: usize| if s == 0 { vec![1.0, 0.0] } else { vec![0.0, 1.0] };
        let mut out = Vec::new();
        for s in 0..2 {
            for a in 0..2 {
                let next = if a == 0 { s } else { 1 - s };
                out.push(transition(one_hot(s), a, if next == 1 { 1.0 } else { 0.0 }, one_hot(next), false));
            }
        }
        out
    }

    fn value_iteration(gamma: f64) -> [[f64; 2]; 2] {
        let mut q = [[0.0f64; 2]; 2];
        for _ in 0..2000 {
            let v = [q[0][0].max(q[0][1]), q[1][0].max(q[1][1])];
            let mut next = [[0.0; 2]; 2];
            for s in 0..2 {
                for a in 0..2 {
                    let n = if a == 0 { s } else { 1 - s };
                    next[s][a] = if n == 1 { 1.0 } else { 0.0 } + gamma * v[n];
                }
            }
            q = next;
        }
        q
    }

    #[test]
    fn two_state_mdp_matches_value_iteration() {
        let gamma = 0.5;
        let oracle = value_iteration(gamma);
        let spec = EnvSpec {
            name: "two-state".into(),
            state_dim: 2,
            action_space: ActionSpace::Discrete(2),
            max_episode_steps: 10,
            feature_names: vec!["s0".into(), "s1".into()],
            feature_ranges: vec![(0.0, 1.0); 2],
            angle_features: vec![],
        };
        let data = two_state_mdp();
        let refs: Vec<&Transition> = data.iter().collect();
        for dual in [false, true] {
            let cfg = DqnConfig {
                gamma,
                target_sync: 100,
                max_grad_norm: None,
                ..small()
            };
            let mut agent = DqnAgent::new(&spec, &cfg, dual, &mut rng_from(7, 1)).unwrap();
            for _ in 0..6000 {
                agent.update(&refs).unwrap();
            }
            let q = agent.q_values(ndarray::arr2(&[[1.0, 0.0], [0.0, 1.0]]).view()).unwrap();
            for s in 0..2 {
                for a in 0..2 {
                    assert!((q[[s, a]] - oracle[s][a]).abs() < 1e-2, "dual={dual} Q({s},{a}) = {} vs {}", q[[s, a]], oracle[s][a]);
                }
            }
        }
    }

    #[test]
    fn attention_waits_for_warmup() {
        let spec = make_env("cartpole+aug").unwrap().spec().clone();
        let cfg = DqnConfig {
            attention_warmup: 3,
            ..small()
        };
        let mut agent = DqnAgent::new(&spec, &cfg, true, &mut rng_from(2, 1)).unwrap();
        let data: Vec<Transition> = (0..8)
            .map(|i| {
                let s: Vec<f64> = (0..8).map(|j| ((i * 8 + j) as f64 * 0.37).sin()).collect();
                transition(s.clone(), i % 2, 1.0, s.iter().map(|v| v * 0.9).collect(), i == 7)
            })
            .collect();
        let refs: Vec<&Transition> = data.iter().collect();
        let initial = agent.attention().unwrap().params().values().to_vec();
        for _ in 0..3 {
            agent.update(&refs).unwrap();
        }
        assert_eq!(agent.attention().unwrap().params().values(), &initial[..]);
        agent.update(&refs).unwrap();
        assert_ne!(agent.attention().unwrap().params().values(), &initial[..]);
    }

    #[test]
    fn epsilon_schedule() {
        let cfg = DqnConfig::default();
        assert_eq!(cfg.epsilon(0.0), 1.0);
        assert!((cfg.epsilon(0.25) - 0.525).abs() < 1e-12);
        assert_eq!(cfg.epsilon(0.9), 0.05);
    }
}
