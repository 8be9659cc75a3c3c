use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Named contiguous range inside a [`ParamVector`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamBlock {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

/// Flat parameter storage for one network with its gradient buffer and Adam
/// state. All four buffers always have the same length.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
    grads: Vec<f64>,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
    blocks: Vec<ParamBlock>,
}

impl ParamVector {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a block and returns its offset.
    pub fn push_block(&mut self, name: impl Into<String>, init: Vec<f64>) -> usize {
        let offset = self.values.len();
        let len = init.len();
        self.values.extend(init);
        self.grads.resize(self.values.len(), 0.0);
        self.m.resize(self.values.len(), 0.0);
        self.v.resize(self.values.len(), 0.0);
        self.blocks.push(ParamBlock {
            name: name.into(),
            offset,
            len,
        });
        offset
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn grads(&self) -> &[f64] {
        &self.grads
    }

    pub fn grads_mut(&mut self) -> &mut [f64] {
        &mut self.grads
    }

    pub fn moments(&self) -> (&[f64], &[f64]) {
        (&self.m, &self.v)
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn blocks(&self) -> &[ParamBlock] {
        &self.blocks
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = 0.0);
    }

    /// Replaces the gradient buffer, e.g. with an average computed elsewhere.
    pub fn set_grads(&mut self, grads: &[f64]) -> Result<()> {
        crate::error::check_dim("set_grads", self.grads.len(), grads.len())?;
        self.grads.copy_from_slice(grads);
        Ok(())
    }

    pub fn copy_values_from(&mut self, other: &ParamVector) -> Result<()> {
        crate::error::check_dim("copy_values_from", self.values.len(), other.values.len())?;
        self.values.copy_from_slice(&other.values);
        Ok(())
    }

    /// `self ← tau * other + (1 - tau) * self`.
    pub fn polyak_from(&mut self, other: &ParamVector, tau: f64) -> Result<()> {
        crate::error::check_dim("polyak_from", self.values.len(), other.values.len())?;
        if tau == 1.0 {
            self.values.copy_from_slice(&other.values);
        } else if tau != 0.0 {
            for (t, s) in self.values.iter_mut().zip(&other.values) {
                *t = tau * s + (1.0 - tau) * *t;
            }
        }
        Ok(())
    }

    pub fn grad_norm(&self) -> f64 {
        self.grads.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    /// Rescales the gradient so its L2 norm is at most `max_norm`.
    pub fn clip_grad_norm(&mut self, max_norm: f64) {
        let norm = self.grad_norm();
        if norm > max_norm && norm.is_finite() {
            let scale = max_norm / norm;
            self.grads.iter_mut().for_each(|g| *g *= scale);
        }
    }

    fn check_grads_finite(&self) -> Result<()> {
        for block in &self.blocks {
            let slice = &self.grads[block.offset..block.offset + block.len];
            if slice.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteGradient {
                    block: block.name.clone(),
                });
            }
        }
        Ok(())
    }

    /// One bias-corrected Adam update. Zeroes the gradient afterwards.
    pub fn adam_step(&mut self, cfg: &AdamConfig) -> Result<()> {
        self.check_grads_finite()?;
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        for i in 0..self.values.len() {
            let g = self.grads[i];
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g;
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            self.values[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            self.grads[i] = 0.0;
        }
        Ok(())
    }

    pub(crate) fn restore_optimizer(&mut self, m: Vec<f64>, v: Vec<f64>, step: u64) -> Result<()> {
        crate::error::check_dim("restore m", self.values.len(), m.len())?;
        crate::error::check_dim("restore v", self.values.len(), v.len())?;
        self.m = m;
        self.v = v;
        self.step = step;
        Ok(())
    }
}

/// Arithmetic mean of gradient sets computed from the same parameters.
pub fn average_gradients(sets: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = sets
        .first()
        .ok_or_else(|| Error::InvalidArgument("no gradient sets to average".into()))?;
    let mut mean = vec![0.0; first.len()];
    for set in sets {
        crate::error::check_dim("average_gradients", first.len(), set.len())?;
        for (acc, g) in mean.iter_mut().zip(set) {
            *acc += g;
        }
    }
    let n = sets.len() as f64;
    mean.iter_mut().for_each(|g| *g /= n);
    Ok(mean)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(value: f64) -> ParamVector {
        let mut p = ParamVector::new();
        p.push_block("w", vec![value]);
        p
    }

    #[test]
    fn zero_gradient_is_identity() {
        let mut p = ParamVector::new();
        p.push_block("a", vec![0.3, -1.2, 4.0]);
        p.push_block("b", vec![7.0]);
        let before = p.values().to_vec();
        p.adam_step(&AdamConfig::default()).unwrap();
        assert_eq!(p.values(), &before[..]);
        assert_eq!(p.step(), 1);
    }

    #[test]
    fn first_step_moves_by_lr_against_gradient() {
        let mut p = scalar(1.0);
        p.grads_mut()[0] = 0.3;
        let cfg = AdamConfig::with_lr(0.01);
        p.adam_step(&cfg).unwrap();
        // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
        let expected = 1.0 - 0.01 * 0.3 / (0.3 + 1e-8);
        assert!((p.values()[0] - expected).abs() < 1e-15);
        assert!((1.0 - p.values()[0] - 0.01).abs() < 1e-9);
        assert_eq!(p.grads()[0], 0.0);
    }

    #[test]
    fn repeated_positive_gradient_shrinks_parameter() {
        let mut p = scalar(1.0);
        let cfg = AdamConfig::with_lr(0.01);
        let mut history = vec![1.0];
        for _ in 0..2 {
            p.grads_mut()[0] = 0.3;
            p.adam_step(&cfg).unwrap();
            history.push(p.values()[0]);
        }
        assert!(history[1] < history[0] && history[2] < history[1]);
        // With a constant gradient both bias-corrected moments equal g and g^2.
        assert!((history[2] - (1.0 - 0.02)).abs() < 1e-8);
    }

    #[test]
    fn non_finite_gradient_names_block() {
        let mut p = ParamVector::new();
        p.push_block("layer0.weight", vec![0.0; 2]);
        p.push_block("layer0.bias", vec![0.0]);
        p.grads_mut()[2] = f64::NAN;
        match p.adam_step(&AdamConfig::default()) {
            Err(Error::NonFiniteGradient { block }) => assert_eq!(block, "layer0.bias"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn averaging_cancels_opposite_gradients() {
        let g = vec![0.5, -2.0, 3.0];
        let neg: Vec<f64> = g.iter().map(|x| -x).collect();
        assert_eq!(average_gradients(&[g.clone(), neg]).unwrap(), vec![0.0; 3]);
        assert_eq!(average_gradients(&[g.clone(), g.clone(), g.clone()]).unwrap(), g);
        assert!(average_gradients(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn polyak_boundaries() {
        let mut target = scalar(1.0);
        let online = scalar(5.0);
        target.polyak_from(&online, 0.0).unwrap();
        assert_eq!(target.values()[0], 1.0);
        target.polyak_from(&online, 1.0).unwrap();
        assert_eq!(target.values()[0], 5.0);
    }
}
