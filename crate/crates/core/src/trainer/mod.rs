//! The dual-world training loop: persistent rollout workers collect under a
//! frozen policy, the coordinator updates the agent (policy on raw states,
//! value function and attention evaluator on virtual states) and logs one
//! attention snapshot per iteration.

mod checkpoint;
mod plateau;
mod workers;

use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use checkpoint::{load_run, save_run, write_returns_csv, RunArtifacts, RUN_FILES};
pub use plateau::{detect_plateau, ranking_window, Plateau};
pub use workers::{evaluate, merge, parallel_collect, worker_seed, Behaviour, Exploration, Rollout, Worker};

pub use crate::agents::averaged_update;
use crate::agents::{Algorithm, DdpgAgent, DdpgConfig, DqnAgent, DqnConfig, PpoAgent, PpoConfig, ReplayBuffer, Transition};
use crate::attention::{snapshot_and_average, AttentionEvaluator, AttentionWeights, FeatureRanking};
use crate::envs::{make_env, Discretized, EnvSpec, Environment, MaskedEnv};
use crate::error::{Error, Result};
use crate::nn::SnapshotBundle;
use crate::rng::{rng_from, stream, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Environment name, e.g. `cartpole+aug` or `synth:m=30,k=5`.
    pub env: String,
    pub algorithm: Algorithm,
    /// Train the attention evaluator (dual world). `false` gives a plain
    /// single-world agent whose value function reads raw states.
    pub dual: bool,
    /// Restrict observations to these feature indices.
    pub features: Option<Vec<usize>>,
    pub iterations: usize,
    pub steps_per_iteration: usize,
    pub workers: usize,
    pub seed: u64,
    pub max_episode_steps: Option<usize>,
    /// Fraction of final iterations whose snapshots are averaged.
    pub snapshot_window: f64,
    pub plateau_window: usize,
    pub plateau_tolerance: f64,
    pub ppo: PpoConfig,
    pub dqn: DqnConfig,
    pub ddpg: DdpgConfig,
    /// Where a failing batch is dumped; the system temp dir when unset.
    pub diagnostics_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            env: "cartpole".into(),
            algorithm: Algorithm::Ppo,
            dual: true,
            features: None,
            iterations: 100,
            steps_per_iteration: 2048,
            workers: 1,
            seed: 0,
            max_episode_steps: None,
            snapshot_window: 0.1,
            plateau_window: 10,
            plateau_tolerance: 0.02,
            ppo: PpoConfig::default(),
            dqn: DqnConfig::default(),
            ddpg: DdpgConfig::default(),
            diagnostics_dir: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: String| Err(Error::InvalidArgument(format!("`{field}`: {why}")));
        if self.workers == 0 {
            return bad("workers", "must be at least 1".into());
        }
        if self.steps_per_iteration == 0 || self.steps_per_iteration % self.workers != 0 {
            return bad(
                "steps_per_iteration",
                format!("{} must be a positive multiple of workers ({})", self.steps_per_iteration, self.workers),
            );
        }
        if !(self.snapshot_window > 0.0 && self.snapshot_window <= 1.0) {
            return bad("snapshot_window", format!("{} is outside (0, 1]", self.snapshot_window));
        }
        if self.plateau_window == 0 {
            return bad("plateau_window", "must be at least 1".into());
        }
        if self.algorithm == Algorithm::Ppo && self.ppo.minibatch == 0 {
            return bad("ppo.minibatch", "must be at least 1".into());
        }
        if self.algorithm == Algorithm::Dqn && (self.dqn.batch == 0 || self.dqn.train_every == 0 || self.dqn.bins < 2) {
            return bad("dqn", "batch and train_every must be positive and bins at least 2".into());
        }
        if self.algorithm == Algorithm::Ddpg && (self.ddpg.batch == 0 || self.ddpg.train_every == 0) {
            return bad("ddpg", "batch and train_every must be positive".into());
        }
        Ok(())
    }

    /// Builds one environment instance as the agent sees it: discretised
    /// for DQN on continuous tasks, masked to `features`, time-limited.
    pub fn build_env(&self) -> Result<Box<dyn Environment>> {
        let mut env = make_env(&self.env)?;
        if self.algorithm == Algorithm::Dqn && !env.spec().action_space.is_discrete() {
            env = Box::new(Discretized::new(env, self.dqn.bins)?);
        }
        if let Some(features) = &self.features {
            env = Box::new(MaskedEnv::new(env, features)?);
        }
        if let Some(limit) = self.max_episode_steps {
            env.set_max_episode_steps(limit);
        }
        Ok(env)
    }
}

/// Per-iteration training losses.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    /// PPO clipped surrogate or mean DDPG actor Q; `None` for DQN.
    pub policy: Option<f64>,
    /// Value or TD regression loss; `None` before learning starts.
    pub value: Option<f64>,
    /// PPO samples skipped for a non-finite probability ratio.
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub env: String,
    pub algorithm: Algorithm,
    pub dual: bool,
    pub seed: u64,
    pub iterations: usize,
    pub feature_names: Vec<String>,
    /// Mean return of episodes finished in each iteration; iterations in
    /// which none finished repeat the previous value (or, before any
    /// episode finished, report the running episodes' partial returns).
    pub returns: Vec<f64>,
    pub episodes: Vec<usize>,
    pub losses: Vec<LossRecord>,
    /// One attention snapshot per iteration (empty without attention).
    pub weight_history: Vec<AttentionWeights>,
    pub plateau: Option<Plateau>,
    pub ranking: Option<FeatureRanking>,
    pub env_steps: usize,
    pub wall_clock_secs: f64,
}

/// A trained agent of any supported algorithm.
#[derive(Debug, Clone)]
pub enum Agent {
    Ppo(PpoAgent),
    Dqn(DqnAgent),
    Ddpg(DdpgAgent),
}

impl Agent {
    pub fn new(cfg: &TrainConfig, spec: &EnvSpec, rng: &mut Rng) -> Result<Self> {
        Ok(match cfg.algorithm {
            Algorithm::Ppo => Agent::Ppo(PpoAgent::new(spec, &cfg.ppo, cfg.dual, rng)?),
            Algorithm::Dqn => Agent::Dqn(DqnAgent::new(spec, &cfg.dqn, cfg.dual, rng)?),
            Algorithm::Ddpg => Agent::Ddpg(DdpgAgent::new(spec, &cfg.ddpg, cfg.dual, rng)?),
        })
    }

    pub fn behaviour(&self) -> Behaviour<'_> {
        match self {
            Agent::Ppo(a) => Behaviour::Ppo(a),
            Agent::Dqn(a) => Behaviour::Dqn(a),
            Agent::Ddpg(a) => Behaviour::Ddpg(a),
        }
    }

    pub fn attention(&self) -> Option<&AttentionEvaluator> {
        match self {
            Agent::Ppo(a) => a.attention(),
            Agent::Dqn(a) => a.attention(),
            Agent::Ddpg(a) => a.attention(),
        }
    }

    pub fn snapshot(&self) -> SnapshotBundle {
        match self {
            Agent::Ppo(a) => a.snapshot(),
            Agent::Dqn(a) => a.snapshot(),
            Agent::Ddpg(a) => a.snapshot(),
        }
    }

    pub fn from_snapshot(cfg: &TrainConfig, spec: &EnvSpec, bundle: &SnapshotBundle) -> Result<Self> {
        Ok(match cfg.algorithm {
            Algorithm::Ppo => Agent::Ppo(PpoAgent::from_snapshot(spec, &cfg.ppo, bundle)?),
            Algorithm::Dqn => Agent::Dqn(DqnAgent::from_snapshot(spec, &cfg.dqn, bundle, 0)?),
            Algorithm::Ddpg => Agent::Ddpg(DdpgAgent::from_snapshot(spec, &cfg.ddpg, bundle)?),
        })
    }
}

/// Owns the workers, the agent and the report accumulator.
pub struct Trainer {
    cfg: TrainConfig,
    spec: EnvSpec,
    workers: Vec<Worker>,
    agent: Agent,
    update_rng: Rng,
    replay: Option<ReplayBuffer>,
    report: TrainReport,
    last_return: Option<f64>,
}

impl Trainer {
    pub fn new(cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let workers = (0..cfg.workers)
            .map(|i| Ok(Worker::new(i, cfg.build_env()?, cfg.seed)))
            .collect::<Result<Vec<_>>>()?;
        let spec = workers[0].env().spec().clone();
        let agent = Agent::new(cfg, &spec, &mut rng_from(cfg.seed, stream::INIT))?;
        let replay = match cfg.algorithm {
            Algorithm::Ppo => None,
            Algorithm::Dqn => Some(ReplayBuffer::new(cfg.dqn.buffer.max(1))),
            Algorithm::Ddpg => Some(ReplayBuffer::new(cfg.ddpg.buffer.max(1))),
        };
        let report = TrainReport {
            env: spec.name.clone(),
            algorithm: cfg.algorithm,
            dual: cfg.dual,
            seed: cfg.seed,
            iterations: 0,
            feature_names: spec.feature_names.clone(),
            returns: Vec::new(),
            episodes: Vec::new(),
            losses: Vec::new(),
            weight_history: Vec::new(),
            plateau: None,
            ranking: None,
            env_steps: 0,
            wall_clock_secs: 0.0,
        };
        Ok(Self {
            cfg: cfg.clone(),
            spec,
            workers,
            agent,
            update_rng: rng_from(cfg.seed, stream::UPDATE),
            replay,
            report,
            last_return: None,
        })
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn agent(&self) -> &Agent {
        &self.agent
    }

    pub fn into_agent(self) -> Agent {
        self.agent
    }

    pub fn report(&self) -> &TrainReport {
        &self.report
    }

    fn dump(&self, iteration: usize, what: &'static str, batch: &[Transition]) -> Error {
        let dir = self.cfg.diagnostics_dir.clone().unwrap_or_else(std::env::temp_dir);
        let path = dir.join(format!("nonfinite-{what}-seed{}-iter{iteration}.json", self.cfg.seed));
        let written = std::fs::create_dir_all(&dir)
            .ok()
            .and_then(|_| serde_json::to_string(batch).ok())
            .and_then(|text| std::fs::write(&path, text).ok());
        Error::NonFiniteLoss {
            what,
            iteration,
            dump: written.map(|_| path),
        }
    }

    fn is_numeric_failure(e: &Error) -> bool {
        matches!(e, Error::NonFinite(_) | Error::NonFiniteGradient { .. })
    }

    /// Runs one collect-and-update iteration.
    pub fn step(&mut self) -> Result<()> {
        let it = self.report.iterations;
        let total_steps = (self.cfg.iterations * self.cfg.steps_per_iteration).max(1);
        let progress = self.report.env_steps as f64 / total_steps as f64;
        let mode = match &self.agent {
            Agent::Ppo(_) => Exploration::Sample,
            Agent::Dqn(_) => Exploration::EpsilonGreedy(self.cfg.dqn.epsilon(progress)),
            Agent::Ddpg(_) => {
                if self.replay.as_ref().map_or(0, ReplayBuffer::len) < self.cfg.ddpg.warmup {
                    Exploration::Uniform
                } else {
                    Exploration::Gaussian
                }
            }
        };
        let rollouts = parallel_collect(self.agent.behaviour(), &mut self.workers, self.cfg.steps_per_iteration, mode)?;
        let transitions = merge(&rollouts);
        self.report.env_steps += transitions.len();

        let finished: Vec<f64> = rollouts.iter().flat_map(|r| r.finished.iter().copied()).collect();
        let mean_return = if !finished.is_empty() {
            finished.iter().sum::<f64>() / finished.len() as f64
        } else {
            self.last_return
                .unwrap_or_else(|| rollouts.iter().map(|r| r.partial).sum::<f64>() / rollouts.len() as f64)
        };
        if !finished.is_empty() {
            self.last_return = Some(mean_return);
        }

        let states = crate::agents::stack_states(&transitions)?;
        let shards = self.cfg.workers;
        let loss = match &mut self.agent {
            Agent::Ppo(agent) => {
                let batch = agent.prepare(&transitions)?;
                let actor = agent.actor_update(&batch, shards, &mut self.update_rng);
                let actor = match actor {
                    Err(e) if Self::is_numeric_failure(&e) => return Err(self.dump(it, "actor", &transitions)),
                    other => other?,
                };
                let value = match agent.critic_update(&batch, shards, &mut self.update_rng) {
                    Err(e) if Self::is_numeric_failure(&e) => return Err(self.dump(it, "critic", &transitions)),
                    other => other?,
                };
                if !actor.objective.is_finite() || !value.is_finite() {
                    return Err(self.dump(it, "ppo", &transitions));
                }
                LossRecord {
                    policy: Some(actor.objective),
                    value: Some(value),
                    skipped: actor.skipped,
                }
            }
            Agent::Dqn(agent) => {
                let replay = self.replay.as_mut().expect("replay for DQN");
                transitions.iter().cloned().for_each(|t| replay.push(t));
                let ready = self.cfg.dqn.warmup.max(self.cfg.dqn.batch);
                let mut losses = Vec::new();
                for _ in 0..self.cfg.steps_per_iteration / self.cfg.dqn.train_every {
                    if replay.len() < ready {
                        break;
                    }
                    let batch = replay.sample(self.cfg.dqn.batch, &mut self.update_rng)?;
                    match agent.update(&batch) {
                        Ok(l) => losses.push(l),
                        Err(e) if Self::is_numeric_failure(&e) => {
                            let owned: Vec<Transition> = batch.into_iter().cloned().collect();
                            return Err(self.dump(it, "td", &owned));
                        }
                        Err(e) => return Err(e),
                    }
                }
                LossRecord {
                    policy: None,
                    value: mean(&losses),
                    skipped: 0,
                }
            }
            Agent::Ddpg(agent) => {
                let replay = self.replay.as_mut().expect("replay for DDPG");
                transitions.iter().cloned().for_each(|t| replay.push(t));
                let ready = self.cfg.ddpg.warmup.max(self.cfg.ddpg.batch);
                let (mut critic, mut actor) = (Vec::new(), Vec::new());
                for _ in 0..self.cfg.steps_per_iteration / self.cfg.ddpg.train_every {
                    if replay.len() < ready {
                        break;
                    }
                    let batch = replay.sample(self.cfg.ddpg.batch, &mut self.update_rng)?;
                    match agent.update(&batch) {
                        Ok(s) => {
                            critic.push(s.critic_loss);
                            actor.push(s.actor_q);
                        }
                        Err(e) if Self::is_numeric_failure(&e) => {
                            let owned: Vec<Transition> = batch.into_iter().cloned().collect();
                            return Err(self.dump(it, "ddpg", &owned));
                        }
                        Err(e) => return Err(e),
                    }
                }
                LossRecord {
                    policy: mean(&actor),
                    value: mean(&critic),
                    skipped: 0,
                }
            }
        };

        if let Some(ae) = self.agent.attention() {
            self.report.weight_history.push(ae.snapshot(states.view(), it)?);
        }
        self.report.returns.push(mean_return);
        self.report.episodes.push(finished.len());
        self.report.losses.push(loss);
        self.report.iterations += 1;
        Ok(())
    }

    /// Runs all configured iterations and finalises plateau and ranking.
    pub fn run(&mut self) -> Result<TrainReport> {
        let start = Instant::now();
        while self.report.iterations < self.cfg.iterations {
            self.step()?;
        }
        self.finish();
        self.report.wall_clock_secs += start.elapsed().as_secs_f64();
        Ok(self.report.clone())
    }

    fn finish(&mut self) {
        let n = self.report.iterations;
        if n == 0 {
            return;
        }
        let plateau = detect_plateau(&self.report.returns, self.cfg.plateau_window, self.cfg.plateau_tolerance);
        self.report.plateau = Some(plateau);
        if !self.report.weight_history.is_empty() {
            let window = ranking_window(n, self.cfg.snapshot_window, Some(plateau));
            self.report.ranking = snapshot_and_average(&self.report.weight_history, window).ok();
        }
    }
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Trains from scratch and returns the report.
pub fn train(cfg: &TrainConfig) -> Result<TrainReport> {
    Trainer::new(cfg)?.run()
}

/// Trains from scratch and returns the report together with the agent.
pub fn train_agent(cfg: &TrainConfig) -> Result<(TrainReport, Agent, EnvSpec)> {
    let mut trainer = Trainer::new(cfg)?;
    let report = trainer.run()?;
    let spec = trainer.spec().clone();
    Ok((report, trainer.into_agent(), spec))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::write_weight_history_csv;
    use crate::nn::Parameterized;

    fn small_ppo(env: &str) -> TrainConfig {
        let mut cfg = TrainConfig {
            env: env.into(),
            iterations: 3,
            steps_per_iteration: 64,
            ..TrainConfig::default()
        };
        cfg.ppo.minibatch = 16;
        cfg.ppo.epochs = 2;
        cfg.ppo.actor_hidden = vec![8];
        cfg.ppo.critic_hidden = vec![16];
        cfg.ppo.attention_hidden = 6;
        cfg
    }

    fn weights_csv(report: &TrainReport) -> Vec<u8> {
        let mut out = Vec::new();
        write_weight_history_csv(&mut out, &report.weight_history, report.feature_names.len()).unwrap();
        out
    }

    #[test]
    fn zero_iterations_leave_initial_parameters() {
        let cfg = TrainConfig {
            iterations: 0,
            ..small_ppo("cartpole+aug")
        };
        let (report, agent, spec) = train_agent(&cfg).unwrap();
        assert_eq!(report.iterations, 0);
        assert!(report.returns.is_empty() && report.weight_history.is_empty());
        assert!(report.plateau.is_none() && report.ranking.is_none());
        let fresh = Agent::new(&cfg, &spec, &mut rng_from(cfg.seed, stream::INIT)).unwrap();
        assert_eq!(agent.snapshot(), fresh.snapshot());
    }

    #[test]
    fn report_curves_have_one_entry_per_iteration() {
        let report = train(&small_ppo("pendulum+aug")).unwrap();
        assert_eq!(report.returns.len(), 3);
        assert_eq!(report.episodes.len(), 3);
        assert_eq!(report.losses.len(), 3);
        assert_eq!(report.weight_history.len(), 3);
        assert_eq!(report.env_steps, 3 * 64);
        assert!(report.ranking.is_some());
        for snap in &report.weight_history {
            assert_eq!(snap.p.len(), 6);
            assert!(snap.p.iter().all(|&p| p > 0.0 && p < 1.0));
        }
    }

    #[test]
    fn multi_worker_runs_are_bit_identical() {
        for algorithm in [Algorithm::Ppo, Algorithm::Dqn] {
            let mut cfg = TrainConfig {
                algorithm,
                workers: 4,
                ..small_ppo("cartpole+aug")
            };
            cfg.dqn.warmup = 64;
            cfg.dqn.batch = 16;
            cfg.dqn.hidden = vec![8];
            let a = train(&cfg).unwrap();
            let b = train(&cfg).unwrap();
            assert_eq!(weights_csv(&a), weights_csv(&b));
            assert_eq!(a.returns, b.returns);
        }
    }

    #[test]
    fn single_worker_matches_serial_collection() {
        let cfg = small_ppo("cartpole+aug");
        let spec = cfg.build_env().unwrap().spec().clone();
        let agent = Agent::new(&cfg, &spec, &mut rng_from(0, stream::INIT)).unwrap();
        let mut pooled = vec![Worker::new(0, cfg.build_env().unwrap(), cfg.seed)];
        let mut serial = Worker::new(0, cfg.build_env().unwrap(), cfg.seed);
        for _ in 0..2 {
            let a = parallel_collect(agent.behaviour(), &mut pooled, 50, Exploration::Sample).unwrap();
            let b = serial.collect(agent.behaviour(), 50, Exploration::Sample).unwrap();
            assert_eq!(merge(&a), b.transitions);
        }
    }

    #[test]
    fn merged_batch_has_configured_size_and_distinct_worker_streams() {
        let cfg = small_ppo("cartpole+aug");
        let spec = cfg.build_env().unwrap().spec().clone();
        let agent = Agent::new(&cfg, &spec, &mut rng_from(0, stream::INIT)).unwrap();
        let mut workers: Vec<Worker> = (0..4).map(|i| Worker::new(i, cfg.build_env().unwrap(), 5)).collect();
        let seeds: std::collections::HashSet<u64> = workers.iter().map(Worker::seed).collect();
        assert_eq!(seeds.len(), 4);
        let rollouts = parallel_collect(agent.behaviour(), &mut workers, 64, Exploration::Sample).unwrap();
        assert_eq!(merge(&rollouts).len(), 64);
        assert!(rollouts.iter().all(|r| r.transitions.len() == 16));
        assert_ne!(rollouts[0].transitions[0].state, rollouts[1].transitions[0].state);
        let err = parallel_collect(agent.behaviour(), &mut workers, 63, Exploration::Sample).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn invalid_configs_name_the_field() {
        let err = serde_json::from_str::<TrainConfig>(r#"{"iteratons": 5}"#).unwrap_err();
        assert!(err.to_string().contains("iteratons"));
        let cases = [
            (TrainConfig { workers: 0, ..TrainConfig::default() }, "workers"),
            (
                TrainConfig {
                    workers: 3,
                    steps_per_iteration: 100,
                    ..TrainConfig::default()
                },
                "steps_per_iteration",
            ),
            (
                TrainConfig {
                    snapshot_window: 0.0,
                    ..TrainConfig::default()
                },
                "snapshot_window",
            ),
        ];
        for (cfg, field) in cases {
            let msg = Trainer::new(&cfg).err().unwrap().to_string();
            assert!(msg.contains(field), "{msg}");
        }
        let msg = Trainer::new(&TrainConfig {
            env: "lunarlander".into(),
            ..TrainConfig::default()
        })
        .err()
        .unwrap()
        .to_string();
        assert!(msg.contains("cartpole"), "{msg}");
    }

    #[test]
    fn non_finite_loss_dumps_the_batch() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = TrainConfig {
            diagnostics_dir: Some(dir.path().to_path_buf()),
            ..small_ppo("cartpole+aug")
        };
        let mut trainer = Trainer::new(&cfg).unwrap();
        if let Agent::Ppo(agent) = &mut trainer.agent {
            agent.param_vectors_mut()[1].values_mut()[0] = f64::NAN;
        }
        match trainer.step().unwrap_err() {
            Error::NonFiniteLoss { dump: Some(path), iteration: 0, .. } => {
                let text = std::fs::read_to_string(path).unwrap();
                let batch: Vec<Transition> = serde_json::from_str(&text).unwrap();
                assert_eq!(batch.len(), 64);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn checkpoint_round_trip_restores_agent_and_report() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_ppo("cartpole+aug");
        let (report, agent, spec) = train_agent(&cfg).unwrap();
        save_run(dir.path(), &cfg, &report, &agent).unwrap();
        for file in RUN_FILES {
            assert!(dir.path().join(file).is_file(), "{file}");
        }
        let run = load_run(dir.path()).unwrap();
        assert_eq!(run.config, cfg);
        assert_eq!(run.report, report);
        let restored = Agent::from_snapshot(&run.config, &spec, &run.params).unwrap();
        assert_eq!(restored.snapshot(), agent.snapshot());
        let weights = crate::attention::read_weight_history_csv(&dir.path().join("weights.csv")).unwrap();
        assert_eq!(weights.len(), report.weight_history.len());
        std::fs::write(dir.path().join("report.json"), "{").unwrap();
        assert!(load_run(dir.path()).unwrap_err().to_string().contains("report.json"));
        assert!(load_run(&dir.path().join("missing")).unwrap_err().to_string().contains("dafs train"));
    }

    #[test]
    fn plain_runs_log_no_weights() {
        let report = train(&TrainConfig {
            dual: false,
            ..small_ppo("cartpole")
        })
        .unwrap();
        assert!(report.weight_history.is_empty());
        assert!(report.ranking.is_none());
    }
}
