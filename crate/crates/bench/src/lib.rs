//! Benchmark fixtures: deterministic inputs, networks and agents.

use dafs_core::agents::{PpoAgent, PpoBatch, PpoConfig, Transition};
use dafs_core::attention::AttentionEvaluator;
use dafs_core::envs::{make_env, Environment};
use dafs_core::nn::{Activation, Mlp};
use dafs_core::rng::{rng_from, stream, Rng};
use dafs_core::trainer::{Exploration, Worker};
use ndarray::Array2;
use rand::Rng as _;

pub const SEED: u64 = 42;

pub fn fixture_rng() -> Rng {
    rng_from(SEED, stream::INIT)
}

/// Uniform `[-1, 1)` batch.
pub fn random_batch(rows: usize, cols: usize) -> Array2<f64> {
    let mut rng = fixture_rng();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

/// Tanh MLP with the given layer sizes.
pub fn mlp(sizes: &[usize]) -> Mlp {
    Mlp::new(sizes, Activation::Tanh, Activation::Identity, &mut fixture_rng())
}

pub fn attention(features: usize, hidden: usize) -> AttentionEvaluator {
    AttentionEvaluator::new(features, hidden, &mut fixture_rng())
}

/// Environment after one reset.
pub fn env(name: &str) -> Box<dyn Environment> {
    let mut env = make_env(name).expect("known environment");
    env.reset(SEED);
    env
}

/// A dual-world PPO agent and one prepared batch of `steps` transitions
/// collected on `env_name`.
pub fn ppo_fixture(env_name: &str, cfg: &PpoConfig, steps: usize) -> (PpoAgent, PpoBatch, Vec<Transition>) {
    let env = make_env(env_name).expect("known environment");
    let agent = PpoAgent::new(env.spec(), cfg, true, &mut fixture_rng()).expect("agent");
    let mut worker = Worker::new(0, env, SEED);
    let rollout = worker
        .collect(dafs_core::trainer::Behaviour::Ppo(&agent), steps, Exploration::Sample)
        .expect("rollout");
    let batch = agent.prepare(&rollout.transitions).expect("batch");
    (agent, batch, rollout.transitions)
}
