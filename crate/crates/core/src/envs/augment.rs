use super::{uniform_pm1, Action, ActionSpace, EnvSpec, Environment, StepResult};
use crate::error::Result;
use crate::rng::{rng_from, stream, Rng};

/// Extends a base environment's observation with diagnostic channels:
/// `sin`/`cos` of every angle feature, a partial-noise probe
/// `P_Ran = 0.5·minmax(first base feature) + 0.5·u` and a pure-noise probe
/// `Ran = u'`, where `u, u' ~ U(-1, 1)` are redrawn every step from a stream
/// independent of the dynamics.
pub struct AugmentedEnv {
    inner: Box<dyn Environment>,
    spec: EnvSpec,
    noise: Rng,
}

impl AugmentedEnv {
    pub fn new(inner: Box<dyn Environment>) -> Self {
        let base = inner.spec().clone();
        let mut names = base.feature_names.clone();
        let mut ranges = base.feature_ranges.clone();
        for &i in &base.angle_features {
            names.push(format!("sin({})", base.feature_names[i]));
            names.push(format!("cos({})", base.feature_names[i]));
            ranges.push((-1.0, 1.0));
            ranges.push((-1.0, 1.0));
        }
        names.push("P_Ran".into());
        names.push("Ran".into());
        ranges.push((-0.5, 1.0));
        ranges.push((-1.0, 1.0));
        let spec = EnvSpec {
            name: format!("{}+aug", base.name),
            state_dim: names.len(),
            action_space: base.action_space.clone(),
            max_episode_steps: base.max_episode_steps,
            feature_names: names,
            feature_ranges: ranges,
            angle_features: base.angle_features.clone(),
        };
        spec.validate();
        Self {
            inner,
            spec,
            noise: rng_from(0, stream::NOISE),
        }
    }

    /// Index of the partial-noise channel.
    pub fn partial_noise_index(&self) -> usize {
        self.spec.state_dim - 2
    }

    /// Index of the pure-noise channel.
    pub fn noise_index(&self) -> usize {
        self.spec.state_dim - 1
    }

    fn extend(&mut self, base: Vec<f64>) -> Vec<f64> {
        let inner = self.inner.spec();
        let mut out = base.clone();
        for &i in &inner.angle_features {
            let (s, c) = (libm::sin(base[i]), libm::cos(base[i]));
            out.push(s);
            out.push(c);
        }
        let (lo, hi) = inner.feature_ranges[0];
        let normalized = (base[0] - lo) / (hi - lo);
        let u = uniform_pm1(&mut self.noise);
        let pure = uniform_pm1(&mut self.noise);
        out.push(0.5 * normalized + 0.5 * u);
        out.push(pure);
        out
    }
}

/// Feature indices of the two noise channels for an augmented feature set of
/// size `m`.
pub fn noise_channels(m: usize) -> [usize; 2] {
    [m - 2, m - 1]
}

impl Environment for AugmentedEnv {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.noise = rng_from(seed, stream::NOISE);
        let base = self.inner.reset(seed);
        self.extend(base)
    }

    fn step(&mut self, action: &Action) -> Result<StepResult> {
        let mut r = self.inner.step(action)?;
        r.next_state = self.extend(std::mem::take(&mut r.next_state));
        Ok(r)
    }

    fn set_max_episode_steps(&mut self, steps: usize) {
        self.inner.set_max_episode_steps(steps);
        self.spec.max_episode_steps = steps;
    }

    fn informative_features(&self) -> Option<Vec<usize>> {
        self.inner.informative_features()
    }
}

/// Exposes a one-dimensional continuous action range as `bins` evenly spaced
/// discrete actions (both bounds included).
pub struct Discretized {
    inner: Box<dyn Environment>,
    spec: EnvSpec,
    levels: Vec<f64>,
}

impl Discretized {
    pub fn new(inner: Box<dyn Environment>, bins: usize) -> Result<Self> {
        let (low, high) = match inner.spec().action_space {
            ActionSpace::Continuous { low, high, dim: 1 } => (low, high),
            ref other => {
                return Err(crate::Error::InvalidArgument(format!(
                    "can only discretise a 1-d continuous action space, got {other:?}"
                )))
            }
        };
        if bins < 2 {
            return Err(crate::Error::InvalidArgument("need at least two bins".into()));
        }
        let levels = (0..bins)
            .map(|i| {
                if i + 1 == bins {
                    high
                } else {
                    low + (high - low) * i as f64 / (bins - 1) as f64
                }
            })
            .collect();
        let mut spec = inner.spec().clone();
        spec.action_space = ActionSpace::Discrete(bins);
        Ok(Self { inner, spec, levels })
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }
}

impl Environment for Discretized {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.inner.reset(seed)
    }

    fn step(&mut self, action: &Action) -> Result<StepResult> {
        self.spec.action_space.check(action)?;
        let Action::Discrete(i) = action else {
            unreachable!("checked against action space")
        };
        self.inner.step(&Action::Continuous(vec![self.levels[*i]]))
    }

    fn set_max_episode_steps(&mut self, steps: usize) {
        self.inner.set_max_episode_steps(steps);
        self.spec.max_episode_steps = steps;
    }

    fn informative_features(&self) -> Option<Vec<usize>> {
        self.inner.informative_features()
    }
}
