use rand::Rng as _;
use rayon::prelude::*;

use crate::agents::{DdpgAgent, DqnAgent, PpoAgent, SampleMode, Transition};
use crate::envs::{Action, ActionSpace, Environment};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from, stream, Rng};

/// How a worker picks actions during collection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exploration {
    /// Sample the stochastic policy.
    Sample,
    /// ε-greedy over Q-values.
    EpsilonGreedy(f64),
    /// Deterministic actor plus Gaussian noise.
    Gaussian,
    /// Uniform random actions.
    Uniform,
    /// Mean or greedy action.
    Greedy,
}

/// Behaviour policy shared read-only by all workers during a round.
#[derive(Clone, Copy)]
pub enum Behaviour<'a> {
    Ppo(&'a PpoAgent),
    Dqn(&'a DqnAgent),
    Ddpg(&'a DdpgAgent),
}

impl Behaviour<'_> {
    pub fn act(&self, state: &[f64], mode: Exploration, space: &ActionSpace, rng: &mut Rng) -> Result<(Action, f64)> {
        if mode == Exploration::Uniform {
            return Ok((uniform_action(space, rng), 0.0));
        }
        match (self, mode) {
            (Behaviour::Ppo(a), Exploration::Greedy) => a.act(state, rng, SampleMode::Eval),
            (Behaviour::Ppo(a), _) => a.act(state, rng, SampleMode::Train),
            (Behaviour::Dqn(a), Exploration::EpsilonGreedy(eps)) => Ok((Action::Discrete(a.act(state, eps, rng)?), 0.0)),
            (Behaviour::Dqn(a), _) => Ok((Action::Discrete(a.greedy(state)?), 0.0)),
            (Behaviour::Ddpg(a), Exploration::Greedy) => Ok((a.act(state, None)?, 0.0)),
            (Behaviour::Ddpg(a), _) => Ok((a.act(state, Some(rng))?, 0.0)),
        }
    }
}

fn uniform_action(space: &ActionSpace, rng: &mut Rng) -> Action {
    match *space {
        ActionSpace::Discrete(n) => Action::Discrete(rng.random_range(0..n)),
        ActionSpace::Continuous { low, high, dim } => Action::Continuous((0..dim).map(|_| rng.random_range(low..=high)).collect()),
    }
}

/// A persistent rollout worker: its own environment, RNG and episode state.
pub struct Worker {
    pub index: usize,
    env: Box<dyn Environment>,
    seed: u64,
    rng: Rng,
    episodes: u64,
    state: Option<Vec<f64>>,
    episode_return: f64,
}

/// Seed of worker `index` under run seed `seed`.
pub fn worker_seed(seed: u64, index: usize) -> u64 {
    derive_seed(derive_seed(seed, stream::WORKER), index as u64)
}

/// What one worker produced in a round.
#[derive(Debug, Clone, Default)]
pub struct Rollout {
    pub transitions: Vec<Transition>,
    /// Returns of episodes that finished during the round.
    pub finished: Vec<f64>,
    /// Return accumulated so far by the episode still running.
    pub partial: f64,
}

impl Worker {
    pub fn new(index: usize, env: Box<dyn Environment>, run_seed: u64) -> Self {
        let seed = worker_seed(run_seed, index);
        Self {
            index,
            env,
            seed,
            rng: rng_from(seed, stream::EPISODE),
            episodes: 0,
            state: None,
            episode_return: 0.0,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn env(&self) -> &dyn Environment {
        self.env.as_ref()
    }

    /// Steps the environment `steps` times, resetting at episode ends. The
    /// last transition is marked as a segment cut.
    pub fn collect(&mut self, policy: Behaviour<'_>, steps: usize, mode: Exploration) -> Result<Rollout> {
        let space = self.env.spec().action_space.clone();
        let mut out = Rollout {
            transitions: Vec::with_capacity(steps),
            ..Rollout::default()
        };
        for t in 0..steps {
            let state = match self.state.take() {
                Some(s) => s,
                None => {
                    let s = self.env.reset(derive_seed(self.seed, self.episodes));
                    self.episodes += 1;
                    self.episode_return = 0.0;
                    s
                }
            };
            let (action, log_prob) = policy.act(&state, mode, &space, &mut self.rng)?;
            let r = self.env.step(&action)?;
            self.episode_return += r.reward;
            if r.done {
                out.finished.push(self.episode_return);
            } else {
                self.state = Some(r.next_state.clone());
            }
            out.transitions.push(Transition {
                state,
                action,
                reward: r.reward,
                terminal: r.terminal(),
                done: r.done,
                cut: r.done || t + 1 == steps,
                next_state: r.next_state,
                log_prob,
            });
        }
        out.partial = self.episode_return;
        Ok(out)
    }
}

/// Each worker collects `steps / workers.len()` transitions under the same
/// frozen policy, concurrently; results are concatenated in worker order.
pub fn parallel_collect(policy: Behaviour<'_>, workers: &mut [Worker], steps: usize, mode: Exploration) -> Result<Vec<Rollout>> {
    if workers.is_empty() || steps % workers.len() != 0 {
        return Err(Error::InvalidArgument(format!(
            "{steps} steps cannot be split evenly over {} workers",
            workers.len()
        )));
    }
    let share = steps / workers.len();
    let results: Vec<Result<Rollout>> = workers.par_iter_mut().map(|w| w.collect(policy, share, mode)).collect();
    results
        .into_iter()
        .enumerate()
        .map(|(worker, r)| {
            r.map_err(|e| Error::Worker {
                worker,
                source: Box::new(e),
            })
        })
        .collect()
}

/// Concatenation of rollouts in worker order.
pub fn merge(rollouts: &[Rollout]) -> Vec<Transition> {
    rollouts.iter().flat_map(|r| r.transitions.iter().cloned()).collect()
}

/// Greedy evaluation: mean-action returns of `episodes` episodes on `env`.
pub fn evaluate(policy: Behaviour<'_>, env: &mut dyn Environment, episodes: usize, seed: u64) -> Result<Vec<f64>> {
    let space = env.spec().action_space.clone();
    let mut rng = rng_from(seed, stream::EVAL);
    let mut returns = Vec::with_capacity(episodes);
    for e in 0..episodes {
        let mut state = env.reset(derive_seed(derive_seed(seed, stream::EVAL), e as u64));
        let mut total = 0.0;
        loop {
            let (action, _) = policy.act(&state, Exploration::Greedy, &space, &mut rng)?;
            let r = env.step(&action)?;
            total += r.reward;
            if r.done {
                break;
            }
            state = r.next_state;
        }
        returns.push(total);
    }
    Ok(returns)
}
