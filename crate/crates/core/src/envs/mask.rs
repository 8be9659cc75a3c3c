use super::{Action, EnvSpec, Environment, StepResult};
use crate::error::{Error, Result};

/// Projects observations onto a subset of feature indices. Dynamics and
/// reward are those of the wrapped environment.
pub struct MaskedEnv {
    inner: Box<dyn Environment>,
    indices: Vec<usize>,
    spec: EnvSpec,
}

impl MaskedEnv {
    pub fn new(inner: Box<dyn Environment>, indices: &[usize]) -> Result<Self> {
        let m = inner.spec().state_dim;
        if indices.is_empty() {
            return Err(Error::InvalidArgument("feature subset is empty".into()));
        }
        if let Some(bad) = indices.iter().find(|&&i| i >= m) {
            return Err(Error::InvalidArgument(format!("feature index {bad} out of range for {m} features")));
        }
        let mut seen = vec![false; m];
        for &i in indices {
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidArgument(format!("feature index {i} repeated")));
            }
        }
        let base = inner.spec();
        let spec = EnvSpec {
            name: format!("{}[{}]", base.name, indices.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(",")),
            state_dim: indices.len(),
            action_space: base.action_space.clone(),
            max_episode_steps: base.max_episode_steps,
            feature_names: indices.iter().map(|&i| base.feature_names[i].clone()).collect(),
            feature_ranges: indices.iter().map(|&i| base.feature_ranges[i]).collect(),
            angle_features: indices
                .iter()
                .enumerate()
                .filter(|(_, i)| base.angle_features.contains(i))
                .map(|(pos, _)| pos)
                .collect(),
        };
        Ok(Self {
            indices: indices.to_vec(),
            inner,
            spec,
        })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    fn project(&self, full: &[f64]) -> Vec<f64> {
        self.indices.iter().map(|&i| full[i]).collect()
    }
}

impl Environment for MaskedEnv {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let full = self.inner.reset(seed);
        self.project(&full)
    }

    fn step(&mut self, action: &Action) -> Result<StepResult> {
        let mut r = self.inner.step(action)?;
        r.next_state = self.project(&r.next_state);
        Ok(r)
    }

    fn set_max_episode_steps(&mut self, steps: usize) {
        self.inner.set_max_episode_steps(steps);
        self.spec.max_episode_steps = steps;
    }

    fn informative_features(&self) -> Option<Vec<usize>> {
        let truth = self.inner.informative_features()?;
        Some(
            self.indices
                .iter()
                .enumerate()
                .filter(|(_, i)| truth.contains(i))
                .map(|(pos, _)| pos)
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::make_env;

    #[test]
    fn full_subset_is_identity() {
        let mut plain = make_env("cartpole+aug").unwrap();
        let mut masked = MaskedEnv::new(make_env("cartpole+aug").unwrap(), &(0..8).collect::<Vec<_>>()).unwrap();
        assert_eq!(plain.reset(5), masked.reset(5));
        for t in 0..30 {
            let a = Action::Discrete(t % 2);
            assert_eq!(plain.step(&a).unwrap(), masked.step(&a).unwrap());
        }
    }

    #[test]
    fn single_feature_projection() {
        let mut env = MaskedEnv::new(make_env("cartpole+aug").unwrap(), &[4]).unwrap();
        assert_eq!(env.spec().state_dim, 1);
        assert_eq!(env.spec().feature_names, vec!["sin(theta)"]);
        assert_eq!(env.reset(0).len(), 1);
    }

    #[test]
    fn invalid_subsets() {
        assert!(MaskedEnv::new(make_env("cartpole").unwrap(), &[]).is_err());
        assert!(MaskedEnv::new(make_env("cartpole").unwrap(), &[4]).is_err());
        assert!(MaskedEnv::new(make_env("cartpole").unwrap(), &[1, 1]).is_err());
    }
}
