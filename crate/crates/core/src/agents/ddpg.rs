use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rand_distr::{Distribution, Normal};
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
pub struct DdpgConfig {
    pub gamma: f64,
    /// Polyak coefficient for the target networks.
    pub tau: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub attention_lr: f64,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub attention_hidden: usize,
    pub batch: usize,
    pub buffer: usize,
    pub warmup: usize,
    /// Exploration noise standard deviation in normalised action units.
    pub noise: f64,
    pub train_every: usize,
    pub max_grad_norm: Option<f64>,
}

impl Default for DdpgConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            tau: 0.005,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            attention_lr: 1e-3,
            actor_hidden: vec![64, 64],
            critic_hidden: vec![512, 512],
            attention_hidden: 20,
            batch: 64,
            buffer: 100_000,
            warmup: 1_000,
            noise: 0.1,
            train_every: 1,
            max_grad_norm: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DdpgStats {
    pub critic_loss: f64,
    /// Mean `Q(s_v, μ(s_r))` seen by the actor step.
    pub actor_q: f64,
}

/// Deterministic actor `μ(s_r)` (tanh, scaled to the bounds) and critic
/// `Q([s_v, u])` with `u` the action normalised to `[−1, 1]`. The attention
/// evaluator learns through the critic loss and is frozen in the actor step.
#[derive(Debug, Clone)]
pub struct DdpgAgent {
    cfg: DdpgConfig,
    low: f64,
    high: f64,
    dim: usize,
    actor: Mlp,
    actor_target: Mlp,
    critic: Mlp,
    critic_target: Mlp,
    attention: Option<AttentionEvaluator>,
    attention_target: Option<AttentionEvaluator>,
}

impl DdpgAgent {
    pub fn new(spec: &EnvSpec, cfg: &DdpgConfig, dual: bool, rng: &mut Rng) -> Result<Self> {
        let ActionSpace::Continuous { low, high, dim } = spec.action_space else {
            return Err(Error::InvalidArgument(format!("DDPG needs a continuous action space; `{}` is discrete", spec.name)));
        };
        let m = spec.state_dim;
        let actor_sizes: Vec<usize> = std::iter::once(m)
            .chain(cfg.actor_hidden.iter().copied())
            .chain(std::iter::once(dim))
            .collect();
        let critic_sizes: Vec<usize> = std::iter::once(m + dim)
            .chain(cfg.critic_hidden.iter().copied())
            .chain(std::iter::once(1))
            .collect();
        let actor = Mlp::new(&actor_sizes, Activation::Tanh, Activation::Tanh, rng);
        let critic = Mlp::new(&critic_sizes, Activation::Tanh, Activation::Identity, rng);
        let attention = dual.then(|| AttentionEvaluator::new(m, cfg.attention_hidden, rng));
        Ok(Self {
            cfg: cfg.clone(),
            low,
            high,
            dim,
            actor_target: actor.clone(),
            actor,
            critic_target: critic.clone(),
            critic,
            attention_target: attention.clone(),
            attention,
        })
    }

    pub fn config(&self) -> &DdpgConfig {
        &self.cfg
    }

    pub fn actor(&self) -> &Mlp {
        &self.actor
    }

    pub fn critic(&self) -> &Mlp {
        &self.critic
    }

    pub fn actor_target(&self) -> &Mlp {
        &self.actor_target
    }

    pub fn critic_target(&self) -> &Mlp {
        &self.critic_target
    }

    pub fn attention(&self) -> Option<&AttentionEvaluator> {
        self.attention.as_ref()
    }

    fn mid_half(&self) -> (f64, f64) {
        (0.5 * (self.low + self.high), 0.5 * (self.high - self.low))
    }

    fn to_unit(&self, a: &Action) -> Result<Vec<f64>> {
        let (mid, half) = self.mid_half();
        match a {
            Action::Continuous(v) if v.len() == self.dim => Ok(v.iter().map(|x| (x - mid) / half).collect()),
            other => Err(Error::InvalidAction {
                action: format!("{other:?}"),
                space: format!("Continuous(dim={})", self.dim),
            }),
        }
    }

    /// Action in environment units; exploration adds Gaussian noise and clips.
    pub fn act(&self, state: &[f64], rng: Option<&mut Rng>) -> Result<Action> {
        trace::record(Phase::Act, Net::Actor, Input::Real);
        let mut u = self.actor.forward_one(state)?;
        if let Some(rng) = rng {
            let noise = Normal::new(0.0, self.cfg.noise).map_err(|e| Error::InvalidArgument(format!("noise: {e}")))?;
            for v in &mut u {
                *v = (*v + noise.sample(rng)).clamp(-1.0, 1.0);
            }
        }
        let (mid, half) = self.mid_half();
        Ok(Action::Continuous(
            u.iter().map(|v| (mid + half * v).clamp(self.low, self.high)).collect(),
        ))
    }

    fn critic_input(ae: Option<&AttentionEvaluator>, s_r: ArrayView2<f64>, u: ArrayView2<f64>, phase: Phase) -> Result<Array2<f64>> {
        let s = match ae {
            Some(ae) => {
                trace::record(phase, Net::Attention, Input::Real);
                trace::record(phase, Net::Critic, Input::VirtualWithAction);
                virtual_states(ae, s_r)?
            }
            None => {
                trace::record(phase, Net::Critic, Input::RealWithAction);
                s_r.to_owned()
            }
        };
        Ok(concatenate(Axis(1), &[s.view(), u]).expect("matching rows"))
    }

    /// `Q(s_v, u)` with the online networks; `u` in normalised units.
    pub fn q_value(&self, state: &[f64], u: &[f64]) -> Result<f64> {
        let s = ArrayView2::from_shape((1, state.len()), state).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let u = ArrayView2::from_shape((1, u.len()), u).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let x = Self::critic_input(self.attention.as_ref(), s, u, Phase::Evaluate)?;
        Ok(self.critic.forward(x.view())?[[0, 0]])
    }

    pub fn td_targets(&self, batch: &[&Transition]) -> Result<Vec<f64>> {
        let next = stack(&batch.iter().map(|t| t.next_state.as_slice()).collect::<Vec<_>>())?;
        let u_next = self.actor_target.forward(next.view())?;
        let x = Self::critic_input(self.attention_target.as_ref(), next.view(), u_next.view(), Phase::Evaluate)?;
        let q_next = self.critic_target.forward(x.view())?;
        Ok(batch
            .iter()
            .zip(q_next.column(0))
            .map(|(t, q)| t.reward + if t.terminal { 0.0 } else { self.cfg.gamma * q })
            .collect())
    }

    /// Gradient of `mean (Q(s_v, u) − y)²` into critic and attention buffers.
    pub fn critic_gradients(&mut self, batch: &[&Transition], targets: &[f64]) -> Result<f64> {
        let s = stack(&batch.iter().map(|t| t.state.as_slice()).collect::<Vec<_>>())?;
        let units = batch.iter().map(|t| self.to_unit(&t.action)).collect::<Result<Vec<_>>>()?;
        let u = stack(&units.iter().map(Vec::as_slice).collect::<Vec<_>>())?;
        let m = s.ncols();
        let (x, p) = match self.attention.as_mut() {
            Some(ae) => {
                trace::record(Phase::CriticUpdate, Net::Attention, Input::Real);
                let (p, s_v) = attention_forward(ae, s.view())?;
                trace::record(Phase::CriticUpdate, Net::Critic, Input::VirtualWithAction);
                (concatenate(Axis(1), &[s_v.view(), u.view()]).expect("rows"), Some(p))
            }
            None => {
                trace::record(Phase::CriticUpdate, Net::Critic, Input::RealWithAction);
                (concatenate(Axis(1), &[s.view(), u.view()]).expect("rows"), None)
            }
        };
        let q = self.critic.forward_train(x.view())?;
        let mut grad = Array2::zeros(q.raw_dim());
        let mut loss = 0.0;
        for i in 0..batch.len() {
            let err = q[[i, 0]] - targets[i];
            loss += err * err;
            grad[[i, 0]] = 2.0 * err;
        }
        loss /= batch.len() as f64;
        if !loss.is_finite() {
            self.critic.clear_cache();
            return Err(Error::NonFinite("DDPG critic loss".into()));
        }
        let grad_in = self.critic.backward(grad.view())?;
        if let (Some(ae), Some(p)) = (self.attention.as_mut(), p) {
            attention_backward(ae, grad_in.slice(s![.., ..m]), s.view(), p.view())?;
        }
        Ok(loss)
    }

    /// Gradient of `−mean Q(s_v, μ(s_r))` into the actor buffer only. The
    /// attention evaluator is evaluated but not differentiated.
    pub fn actor_gradients(&mut self, batch: &[&Transition]) -> Result<f64> {
        let s = stack(&batch.iter().map(|t| t.state.as_slice()).collect::<Vec<_>>())?;
        let m = s.ncols();
        trace::record(Phase::ActorUpdate, Net::Actor, Input::Real);
        let u = self.actor.forward_train(s.view())?;
        let x = Self::critic_input(self.attention.as_ref(), s.view(), u.view(), Phase::ActorUpdate)?;
        let saved = self.critic.params().grads().to_vec();
        let q = self.critic.forward_train(x.view())?;
        let n = batch.len();
        let grad_q = Array2::from_elem((n, 1), -1.0);
        let grad_in = self.critic.backward(grad_q.view())?;
        self.critic.params_mut().set_grads(&saved)?;
        self.actor.backward(grad_in.slice(s![.., m..]))?;
        Ok(q.column(0).mean().unwrap_or(0.0))
    }

    /// `∂Q(s_v, u)/∂u` at `u = μ(s_r)` for one state.
    pub fn action_gradient(&mut self, state: &[f64]) -> Result<Vec<f64>> {
        let s = ArrayView2::from_shape((1, state.len()), state).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let u = self.actor.forward(s)?;
        let x = Self::critic_input(self.attention.as_ref(), s, u.view(), Phase::Evaluate)?;
        let saved = self.critic.params().grads().to_vec();
        self.critic.forward_train(x.view())?;
        let grad_in = self.critic.backward(Array2::from_elem((1, 1), 1.0).view())?;
        self.critic.params_mut().set_grads(&saved)?;
        Ok(grad_in.slice(s![0, state.len()..]).to_vec())
    }

    /// Critic + attention step, actor step, then Polyak target update.
    pub fn update(&mut self, batch: &[&Transition]) -> Result<DdpgStats> {
        if batch.is_empty() {
            return Err(Error::InsufficientReplay { have: 0, need: 1 });
        }
        let targets = self.td_targets(batch)?;
        self.critic.params_mut().zero_grad();
        if let Some(ae) = self.attention.as_mut() {
            ae.params_mut().zero_grad();
        }
        let critic_loss = self.critic_gradients(batch, &targets)?;
        if let Some(limit) = self.cfg.max_grad_norm {
            self.critic.params_mut().clip_grad_norm(limit);
        }
        self.critic.params_mut().adam_step(&AdamConfig::with_lr(self.cfg.critic_lr))?;
        if let Some(ae) = self.attention.as_mut() {
            ae.params_mut().adam_step(&AdamConfig::with_lr(self.cfg.attention_lr))?;
        }
        self.actor.params_mut().zero_grad();
        let actor_q = self.actor_gradients(batch)?;
        if let Some(limit) = self.cfg.max_grad_norm {
            self.actor.params_mut().clip_grad_norm(limit);
        }
        self.actor.params_mut().adam_step(&AdamConfig::with_lr(self.cfg.actor_lr))?;
        self.soft_update(self.cfg.tau)?;
        Ok(DdpgStats { critic_loss, actor_q })
    }

    /// `target ← τ·online + (1 − τ)·target` for actor, critic and attention.
    pub fn soft_update(&mut self, tau: f64) -> Result<()> {
        self.actor_target.params_mut().polyak_from(self.actor.params(), tau)?;
        self.critic_target.params_mut().polyak_from(self.critic.params(), tau)?;
        if let (Some(t), Some(ae)) = (self.attention_target.as_mut(), self.attention.as_ref()) {
            t.params_mut().polyak_from(ae.params(), tau)?;
        }
        Ok(())
    }

    pub fn snapshot(&self) -> SnapshotBundle {
        let mut nets = vec![
            self.actor.snapshot("actor"),
            self.actor_target.snapshot("actor_target"),
            self.critic.snapshot("critic"),
            self.critic_target.snapshot("critic_target"),
        ];
        if let (Some(ae), Some(t)) = (&self.attention, &self.attention_target) {
            nets.push(ae.snapshot_params("attention"));
            nets.push(t.snapshot_params("attention_target"));
        }
        SnapshotBundle::new(nets)
    }

    pub fn from_snapshot(spec: &EnvSpec, cfg: &DdpgConfig, bundle: &SnapshotBundle) -> Result<Self> {
        let get = |name: &str| -> Result<&NetSnapshot> {
            bundle
                .get(name)
                .ok_or_else(|| Error::Format(format!("checkpoint has no `{name}` network")))
        };
        let ActionSpace::Continuous { low, high, dim } = spec.action_space else {
            return Err(Error::InvalidArgument("DDPG needs a continuous action space".into()));
        };
        let actor = Mlp::from_snapshot(get("actor")?)?;
        crate::error::check_dim("checkpoint actor output", dim, actor.out_dim())?;
        Ok(Self {
            cfg: cfg.clone(),
            low,
            high,
            dim,
            actor,
            actor_target: Mlp::from_snapshot(get("actor_target")?)?,
            critic: Mlp::from_snapshot(get("critic")?)?,
            critic_target: Mlp::from_snapshot(get("critic_target")?)?,
            attention: bundle.get("attention").map(AttentionEvaluator::from_snapshot).transpose()?,
            attention_target: bundle.get("attention_target").map(AttentionEvaluator::from_snapshot).transpose()?,
        })
    }
}

impl Parameterized for DdpgAgent {
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::make_env;
    use crate::nn::{grad_check, GradCheckOptions};
    use crate::rng::rng_from;
    use rand::Rng as _;

    fn small() -> DdpgConfig {
        DdpgConfig {
            actor_hidden: vec![8],
            critic_hidden: vec![12, 12],
            attention_hidden: 4,
            ..DdpgConfig::default()
        }
    }

    fn batch(dim: usize, n: usize, seed: u64) -> Vec<Transition> {
        let mut rng = rng_from(seed, 0);
        (0..n)
            .map(|i| Transition {
                state: (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
                action: Action::Continuous(vec![rng.random_range(-2.0..2.0)]),
                reward: rng.random_range(-1.0..0.0),
                next_state: (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
                terminal: i % 7 == 0,
                done: i % 7 == 0,
                cut: i % 7 == 0,
                log_prob: 0.0,
            })
            .collect()
    }

    fn agent() -> (DdpgAgent, usize) {
        let spec = make_env("pendulum+aug").unwrap().spec().clone();
        (DdpgAgent::new(&spec, &small(), true, &mut rng_from(1, 1)).unwrap(), spec.state_dim)
    }

    #[test]
    fn full_polyak_copies_and_zero_polyak_freezes() {
        let (mut a, m) = agent();
        let data = batch(m, 16, 2);
        let refs: Vec<&Transition> = data.iter().collect();
        let frozen = a.actor_target.params().values().to_vec();
        let cfg = DdpgConfig { tau: 0.0, ..small() };
        a.cfg = cfg;
        a.update(&refs).unwrap();
        assert_eq!(a.actor_target.params().values(), &frozen[..]);
        a.soft_update(1.0).unwrap();
        assert_eq!(a.actor_target.params().values(), a.actor.params().values());
        assert_eq!(a.critic_target.params().values(), a.critic.params().values());
        assert_eq!(
            a.attention_target.as_ref().unwrap().params().values(),
            a.attention.as_ref().unwrap().params().values()
        );
    }

    #[test]
    fn action_gradient_matches_finite_difference() {
        let (mut a, m) = agent();
        let state: Vec<f64> = (0..m).map(|i| 0.1 * i as f64 - 0.2).collect();
        let grad = a.action_gradient(&state).unwrap();
        let u = a.actor.forward_one(&state).unwrap();
        let h = 1e-6;
        let numeric = (a.q_value(&state, &[u[0] + h]).unwrap() - a.q_value(&state, &[u[0] - h]).unwrap()) / (2.0 * h);
        assert!(crate::nn::relative_error(grad[0], numeric) < 1e-6);
        assert_eq!(grad[0].signum(), numeric.signum());
    }

    #[test]
    fn gradients_pass_grad_check() {
        let (mut a, m) = agent();
        let data = batch(m, 12, 3);
        let refs: Vec<&Transition> = data.iter().collect();
        let targets = a.td_targets(&refs).unwrap();
        let critic_err = grad_check(
            &mut a,
            |a| a.critic_gradients(&refs, &targets).map(|_| ()),
            |a| {
                let mut total = 0.0;
                for (t, y) in refs.iter().zip(&targets) {
                    let u = a.to_unit(&t.action)?;
                    total += (a.q_value(&t.state, &u)? - y).powi(2);
                }
                Ok(total / refs.len() as f64)
            },
            GradCheckOptions::default(),
        )
        .unwrap();
        assert!(critic_err < 1e-4, "critic {critic_err}");
        // Actor objective: the critic and attention coordinates must come out
        // with zero analytic gradient and (numerically) whatever they are,
        // so check the actor block alone.
        let mut actor_only = a.clone();
        actor_only.actor.params_mut().zero_grad();
        actor_only.actor_gradients(&refs).unwrap();
        let analytic = actor_only.actor.params().grads().to_vec();
        assert!(actor_only.critic.params().grads().iter().all(|&g| g == 0.0));
        let objective = |agent: &DdpgAgent| -> f64 {
            let mut total = 0.0;
            for t in &refs {
                let u = agent.actor.forward_one(&t.state).unwrap();
                total -= agent.q_value(&t.state, &u).unwrap();
            }
            total / refs.len() as f64
        };
        let mut worst: f64 = 0.0;
        for i in 0..analytic.len() {
            let orig = actor_only.actor.params().values()[i];
            actor_only.actor.params_mut().values_mut()[i] = orig + 1e-5;
            let plus = objective(&actor_only);
            actor_only.actor.params_mut().values_mut()[i] = orig - 1e-5;
            let minus = objective(&actor_only);
            actor_only.actor.params_mut().values_mut()[i] = orig;
            worst = worst.max(crate::nn::relative_error(analytic[i], (plus - minus) / 2e-5));
        }
        assert!(worst < 1e-4, "actor {worst}");
    }

    #[test]
    fn attention_frozen_during_actor_step() {
        let (mut a, m) = agent();
        let data = batch(m, 8, 4);
        let refs: Vec<&Transition> = data.iter().collect();
        let ae_before = a.attention.as_ref().unwrap().params().values().to_vec();
        a.attention.as_mut().unwrap().params_mut().zero_grad();
        a.actor_gradients(&refs).unwrap();
        assert!(a.attention.as_ref().unwrap().params().grads().iter().all(|&g| g == 0.0));
        assert_eq!(a.attention.as_ref().unwrap().params().values(), &ae_before[..]);
    }

    #[test]
    fn exploration_stays_in_bounds() {
        let (a, m) = agent();
        let mut rng = rng_from(0, 3);
        for _ in 0..200 {
            let Action::Continuous(u) = a.act(&vec![0.5; m], Some(&mut rng)).unwrap() else { panic!() };
            assert!((-2.0..=2.0).contains(&u[0]));
        }
    }
}
