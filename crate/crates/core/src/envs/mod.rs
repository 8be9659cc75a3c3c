//! Control environments: the four classic tasks, feature augmentation with
//! angle channels and noise probes, subset masking, torque discretisation
//! and a synthetic many-sensor field with known informative sensors.

mod augment;
mod classic;
mod mask;
mod synth;
mod trajectory;

use serde::{Deserialize, Serialize};

pub use augment::{noise_channels, AugmentedEnv, Discretized};
pub use classic::{Acrobot, CartPole, MountainCar, MountainCarContinuous, Pendulum};
pub use mask::MaskedEnv;
pub use synth::{SensorField, SensorFieldConfig};
pub use trajectory::{record_trajectory, write_trajectory_csv, TrajectoryRow};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionSpace {
    Discrete(usize),
    Continuous { low: f64, high: f64, dim: usize },
}

impl ActionSpace {
    pub fn contains(&self, action: &Action) -> bool {
        match (self, action) {
            (ActionSpace::Discrete(n), Action::Discrete(a)) => a < n,
            (ActionSpace::Continuous { low, high, dim }, Action::Continuous(u)) => {
                u.len() == *dim && u.iter().all(|v| v.is_finite() && *v >= *low && *v <= *high)
            }
            _ => false,
        }
    }

    pub(crate) fn check(&self, action: &Action) -> Result<()> {
        if self.contains(action) {
            Ok(())
        } else {
            Err(Error::InvalidAction {
                action: format!("{action:?}"),
                space: format!("{self:?}"),
            })
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, ActionSpace::Discrete(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

impl Action {
    /// Scalar encoding used in CSV dumps.
    pub fn to_csv_field(&self) -> String {
        match self {
            Action::Discrete(a) => a.to_string(),
            Action::Continuous(u) => u.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(";"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub name: String,
    pub state_dim: usize,
    pub action_space: ActionSpace,
    pub max_episode_steps: usize,
    pub feature_names: Vec<String>,
    /// Nominal `(min, max)` of each feature, used for min-max normalisation.
    pub feature_ranges: Vec<(f64, f64)>,
    /// Features that are angles (receive sin/cos channels on augmentation).
    pub angle_features: Vec<usize>,
}

impl EnvSpec {
    pub(crate) fn validate(&self) {
        assert_eq!(self.feature_names.len(), self.state_dim, "{}: feature names", self.name);
        assert_eq!(self.feature_ranges.len(), self.state_dim, "{}: feature ranges", self.name);
        if let ActionSpace::Continuous { low, high, .. } = self.action_space {
            assert!(low < high, "{}: degenerate action bounds", self.name);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_state: Vec<f64>,
    pub reward: f64,
    /// Episode over: terminal state reached or the step limit hit.
    pub done: bool,
    /// `done` because of the step limit rather than a terminal state.
    pub truncated: bool,
    /// Steps taken in the current episode, including this one.
    pub step: usize,
}

impl StepResult {
    pub fn terminal(&self) -> bool {
        self.done && !self.truncated
    }
}

pub trait Environment: Send {
    fn spec(&self) -> &EnvSpec;

    /// Starts an episode. All randomness of the episode derives from `seed`.
    fn reset(&mut self, seed: u64) -> Vec<f64>;

    /// Applies `action`. Out-of-space actions are an error; nothing is clipped.
    fn step(&mut self, action: &Action) -> Result<StepResult>;

    fn set_max_episode_steps(&mut self, steps: usize);

    /// Ground-truth informative feature indices, when known by construction.
    fn informative_features(&self) -> Option<Vec<usize>> {
        None
    }
}

/// Tracks the per-episode step count and the time limit.
#[derive(Debug, Clone, Copy)]
pub(crate) struct EpisodeClock {
    pub t: usize,
    pub limit: usize,
    pub finished: bool,
}

impl EpisodeClock {
    pub fn new(limit: usize) -> Self {
        Self {
            t: 0,
            limit,
            finished: true,
        }
    }

    pub fn start(&mut self) {
        self.t = 0;
        self.finished = false;
    }

    pub fn tick(&mut self, name: &str) -> Result<()> {
        if self.finished {
            return Err(Error::InvalidArgument(format!("{name}: step after episode end; call reset")));
        }
        self.t += 1;
        Ok(())
    }

    /// Builds the step result, applying the time limit.
    pub fn result(&mut self, next_state: Vec<f64>, reward: f64, terminated: bool) -> StepResult {
        let truncated = !terminated && self.t >= self.limit;
        let done = terminated || truncated;
        self.finished = done;
        StepResult {
            next_state,
            reward,
            done,
            truncated,
            step: self.t,
        }
    }
}

pub const BASE_ENV_NAMES: &[&str] = &["pendulum", "mountaincar", "mountaincar-cont", "cartpole", "acrobot"];

fn valid_names() -> String {
    let mut names: Vec<String> = BASE_ENV_NAMES.iter().map(|s| s.to_string()).collect();
    names.push("synth:m=<sensors>,k=<informative>[,seed=<layout seed>]".into());
    names.push("any of the above with a `+aug` suffix".into());
    names.join(", ")
}

/// Parses an environment name: `pendulum`, `mountaincar`, `mountaincar-cont`,
/// `cartpole`, `acrobot` or `synth:m=30,k=5[,seed=0]`, optionally followed by
/// `+aug` for the augmented feature set.
pub fn make_env(name: &str) -> Result<Box<dyn Environment>> {
    let unknown = || Error::UnknownEnv {
        name: name.to_string(),
        valid: valid_names(),
    };
    let (base, augment) = match name.strip_suffix("+aug") {
        Some(base) => (base, true),
        None => (name, false),
    };
    let env: Box<dyn Environment> = match base {
        "pendulum" => Box::new(Pendulum::new()),
        "mountaincar" => Box::new(MountainCar::new()),
        "mountaincar-cont" => Box::new(MountainCarContinuous::new()),
        "cartpole" => Box::new(CartPole::new()),
        "acrobot" => Box::new(Acrobot::new()),
        other => match other.strip_prefix("synth:") {
            Some(args) => Box::new(SensorField::new(SensorFieldConfig::parse(args)?)?),
            None => return Err(unknown()),
        },
    };
    Ok(if augment { Box::new(AugmentedEnv::new(env)) } else { env })
}

/// Uniform draw on `[-1, 1)`.
pub(crate) fn uniform_pm1(rng: &mut crate::rng::Rng) -> f64 {
    use rand::Rng as _;
    rng.random_range(-1.0..1.0)
}
