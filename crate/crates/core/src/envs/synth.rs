use std::f64::consts::PI;

use rand::seq::index::sample;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::{uniform_pm1, Action, ActionSpace, EnvSpec, Environment, EpisodeClock, StepResult};
use crate::error::{Error, Result};
use crate::rng::{rng_from, stream, Rng};

#[derive(Debug, Clone, PartialEq)]
pub struct SensorFieldConfig {
    pub sensors: usize,
    pub informative: usize,
    /// Chooses which sensor positions are informative.
    pub layout_seed: u64,
    pub natural_frequency: f64,
    pub damping: f64,
    pub dt: f64,
    pub sensor_noise: f64,
    pub max_episode_steps: usize,
}

impl SensorFieldConfig {
    pub fn new(sensors: usize, informative: usize, layout_seed: u64) -> Self {
        Self {
            sensors,
            informative,
            layout_seed,
            natural_frequency: 1.0,
            damping: 0.1,
            dt: 0.1,
            sensor_noise: 0.01,
            max_episode_steps: 200,
        }
    }

    /// Parses `m=30,k=5[,seed=0]`.
    pub fn parse(args: &str) -> Result<Self> {
        let (mut m, mut k, mut seed) = (None, None, 0u64);
        for part in args.split(',') {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::InvalidArgument(format!("expected key=value, got `{part}`")))?;
            let bad = |_| Error::InvalidArgument(format!("bad value for `{key}`: `{value}`"));
            match key.trim() {
                "m" => m = Some(value.trim().parse::<usize>().map_err(bad)?),
                "k" => k = Some(value.trim().parse::<usize>().map_err(bad)?),
                "seed" => seed = value.trim().parse::<u64>().map_err(bad)?,
                other => return Err(Error::InvalidArgument(format!("unknown synth option `{other}`"))),
            }
        }
        let m = m.ok_or_else(|| Error::InvalidArgument("synth needs m".into()))?;
        let k = k.ok_or_else(|| Error::InvalidArgument("synth needs k".into()))?;
        if k == 0 || k > m {
            return Err(Error::InvalidArgument(format!("synth needs 1 <= k <= m, got m={m}, k={k}")));
        }
        Ok(Self::new(m, k, seed))
    }
}

/// A lightly damped oscillator `z̈ = −ω₀² z − c ż + u` observed through `m`
/// sensors. `k` of them are distinct linear readouts
/// `cos φ_i · z + sin φ_i · ż` plus Gaussian noise (σ = 0.01); the rest are
/// pure `U(−1, 1)` noise. Reward `−(z² + 0.1 ż²)`, action `u ∈ [−1, 1]`,
/// semi-implicit Euler with dt = 0.1, start `(z, ż) ~ U(−1, 1)²`.
pub struct SensorField {
    config: SensorFieldConfig,
    spec: EnvSpec,
    informative: Vec<usize>,
    readouts: Vec<Option<(f64, f64)>>,
    z: f64,
    z_dot: f64,
    noise: Rng,
    gauss: Normal<f64>,
    clock: EpisodeClock,
}

impl SensorField {
    pub fn new(config: SensorFieldConfig) -> Result<Self> {
        let (m, k) = (config.sensors, config.informative);
        if k > m || m == 0 {
            return Err(Error::InvalidArgument(format!("synth needs k <= m and m >= 1, got m={m}, k={k}")));
        }
        let mut layout_rng = rng_from(config.layout_seed, stream::LAYOUT);
        let mut informative = sample(&mut layout_rng, m, k).into_vec();
        informative.sort_unstable();
        let mut readouts = vec![None; m];
        for (j, &i) in informative.iter().enumerate() {
            let phi = PI * (j as f64 + 0.5) / k as f64;
            readouts[i] = Some((libm::cos(phi), libm::sin(phi)));
        }
        let feature_names = (0..m)
            .map(|i| if readouts[i].is_some() { format!("sensor{i}") } else { format!("noise{i}") })
            .collect();
        let spec = EnvSpec {
            name: format!("synth:m={m},k={k},seed={}", config.layout_seed),
            state_dim: m,
            action_space: ActionSpace::Continuous {
                low: -1.0,
                high: 1.0,
                dim: 1,
            },
            max_episode_steps: config.max_episode_steps,
            feature_names,
            feature_ranges: vec![(-1.5, 1.5); m],
            angle_features: vec![],
        };
        spec.validate();
        let gauss = Normal::new(0.0, config.sensor_noise)
            .map_err(|e| Error::InvalidArgument(format!("sensor noise: {e}")))?;
        Ok(Self {
            clock: EpisodeClock::new(config.max_episode_steps),
            config,
            spec,
            informative,
            readouts,
            z: 0.0,
            z_dot: 0.0,
            noise: rng_from(0, stream::NOISE),
            gauss,
        })
    }

    pub fn config(&self) -> &SensorFieldConfig {
        &self.config
    }

    /// Places the hidden oscillator at `(z, ż)` and restarts the clock.
    pub fn set_hidden_state(&mut self, z: f64, z_dot: f64) {
        self.z = z;
        self.z_dot = z_dot;
        self.clock.start();
    }

    pub fn hidden_state(&self) -> (f64, f64) {
        (self.z, self.z_dot)
    }

    fn observe(&mut self) -> Vec<f64> {
        let (z, z_dot) = (self.z, self.z_dot);
        let mut out = Vec::with_capacity(self.readouts.len());
        for i in 0..self.readouts.len() {
            let v = match self.readouts[i] {
                Some((a, b)) => a * z + b * z_dot + self.gauss.sample(&mut self.noise),
                None => uniform_pm1(&mut self.noise),
            };
            out.push(v);
        }
        out
    }

    /// Observation at the current hidden state (draws fresh sensor noise).
    pub fn observe_now(&mut self) -> Vec<f64> {
        self.observe()
    }
}

impl Environment for SensorField {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = rng_from(seed, stream::INIT);
        self.z = rng.random_range(-1.0..1.0);
        self.z_dot = rng.random_range(-1.0..1.0);
        self.noise = rng_from(seed, stream::NOISE);
        self.clock.start();
        self.observe()
    }

    fn step(&mut self, action: &Action) -> Result<StepResult> {
        self.spec.action_space.check(action)?;
        self.clock.tick(&self.spec.name)?;
        let u = match action {
            Action::Continuous(u) => u[0],
            Action::Discrete(_) => unreachable!("checked against action space"),
        };
        let c = &self.config;
        let w2 = c.natural_frequency * c.natural_frequency;
        self.z_dot += c.dt * (-w2 * self.z - c.damping * self.z_dot + u);
        self.z += c.dt * self.z_dot;
        let reward = -(self.z * self.z + 0.1 * self.z_dot * self.z_dot);
        let obs = self.observe();
        Ok(self.clock.result(obs, reward, false))
    }

    fn set_max_episode_steps(&mut self, steps: usize) {
        self.spec.max_episode_steps = steps;
        self.clock.limit = steps;
    }

    fn informative_features(&self) -> Option<Vec<usize>> {
        Some(self.informative.clone())
    }
}
