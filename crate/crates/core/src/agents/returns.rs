use crate::error::{Error, Result};

/// `R_t = r_t + γ R_{t+1} (1 − done_t)`, computed backwards. The final index
/// is treated as the end of the data.
pub fn compute_returns(rewards: &[f64], dones: &[bool], gamma: f64) -> Vec<f64> {
    assert_eq!(rewards.len(), dones.len(), "rewards and dones must align");
    let mut out = vec![0.0; rewards.len()];
    let mut next = 0.0;
    for t in (0..rewards.len()).rev() {
        let carry = if dones[t] { 0.0 } else { next };
        out[t] = rewards[t] + gamma * carry;
        next = out[t];
    }
    out
}

/// Like [`compute_returns`], but wherever a segment is cut (`cuts[t]`, and
/// always at the last index) the tail is replaced by `bootstrap[t]`: zero for
/// a terminal state, an estimate of `V(s_{t+1})` for a truncated one.
pub fn compute_returns_bootstrapped(rewards: &[f64], cuts: &[bool], bootstrap: &[f64], gamma: f64) -> Result<Vec<f64>> {
    let n = rewards.len();
    if cuts.len() != n || bootstrap.len() != n {
        return Err(Error::InvalidArgument("rewards, cuts and bootstrap values must align".into()));
    }
    let mut out = vec![0.0; n];
    let mut next = 0.0;
    for t in (0..n).rev() {
        let tail = if cuts[t] || t + 1 == n { bootstrap[t] } else { next };
        out[t] = rewards[t] + gamma * tail;
        next = out[t];
    }
    Ok(out)
}

/// Generalised advantage estimation. `next_values[t]` is `V(s_{t+1})` (zero
/// for terminal transitions); `cuts[t]` stops the recursion after `t`.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    next_values: &[f64],
    cuts: &[bool],
    gamma: f64,
    lambda: f64,
) -> Result<Vec<f64>> {
    let n = rewards.len();
    if n == 0 {
        return Err(Error::InvalidArgument("advantages of an empty batch".into()));
    }
    if values.len() != n || next_values.len() != n || cuts.len() != n {
        return Err(Error::InvalidArgument("rewards, values, next values and cuts must align".into()));
    }
    let mut out = vec![0.0; n];
    let mut next = 0.0;
    for t in (0..n).rev() {
        let delta = rewards[t] + gamma * next_values[t] - values[t];
        let carry = if cuts[t] || t + 1 == n { 0.0 } else { next };
        out[t] = delta + gamma * lambda * carry;
        next = out[t];
    }
    Ok(out)
}

/// `A_t = R_t − V_t`.
pub fn simple_advantages(returns: &[f64], values: &[f64]) -> Result<Vec<f64>> {
    if returns.is_empty() {
        return Err(Error::InvalidArgument("advantages of an empty batch".into()));
    }
    if returns.len() != values.len() {
        return Err(Error::DimensionMismatch {
            context: "advantages".into(),
            expected: returns.len(),
            actual: values.len(),
        });
    }
    Ok(returns.iter().zip(values).map(|(r, v)| r - v).collect())
}

/// Shifts to zero mean and scales to unit (population) standard deviation.
/// A constant input becomes all zeros.
pub fn normalize(values: &mut [f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("normalising an empty batch".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    for v in values.iter_mut() {
        *v -= mean;
        if std > 1e-12 {
            *v /= std;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_recursion() {
        assert_eq!(compute_returns(&[1.0, 1.0, 1.0], &[false; 3], 0.5), vec![1.75, 1.5, 1.0]);
        assert_eq!(compute_returns(&[3.0, -1.0, 2.0], &[false; 3], 0.0), vec![3.0, -1.0, 2.0]);
    }

    #[test]
    fn done_cuts_accumulation() {
        let rewards = [1.0, 2.0, 3.0, 4.0, 5.0];
        let dones = [false, true, false, false, true];
        let gamma = 0.9;
        let got = compute_returns(&rewards, &dones, gamma);
        // Brute force: sum to the end of each episode.
        for t in 0..rewards.len() {
            let mut expected = 0.0;
            let mut discount = 1.0;
            for s in t..rewards.len() {
                expected += discount * rewards[s];
                discount *= gamma;
                if dones[s] {
                    break;
                }
            }
            assert!((got[t] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn bootstrap_at_truncation() {
        let r = compute_returns_bootstrapped(&[1.0, 1.0], &[false, true], &[0.0, 10.0], 0.5).unwrap();
        assert_eq!(r, vec![1.0 + 0.5 * 6.0, 6.0]);
        let zero = compute_returns_bootstrapped(&[1.0, 2.0], &[false, false], &[0.0, 0.0], 0.9).unwrap();
        assert_eq!(zero, compute_returns(&[1.0, 2.0], &[false, false], 0.9));
    }

    #[test]
    fn perfect_critic_gives_zero_advantage() {
        let returns = [1.0, 2.0, -3.0];
        assert_eq!(simple_advantages(&returns, &returns).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn gae_with_unit_lambda_telescopes() {
        let rewards = [0.5, -1.0, 2.0, 0.25, 1.0];
        let values = [0.3, 0.1, -0.7, 1.2, 0.9];
        let mut next_values: Vec<f64> = values[1..].to_vec();
        next_values.push(0.0);
        let adv = gae(&rewards, &values, &next_values, &[false; 5], 1.0, 1.0).unwrap();
        let returns = compute_returns(&rewards, &[false; 5], 1.0);
        for t in 0..5 {
            assert!((adv[t] - (returns[t] - values[t])).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_batch_is_an_error() {
        assert!(gae(&[], &[], &[], &[], 0.9, 0.9).is_err());
        assert!(simple_advantages(&[], &[]).is_err());
        assert!(normalize(&mut []).is_err());
    }

    #[test]
    fn normalization_moments() {
        let mut v: Vec<f64> = (0..257).map(|i| ((i * 37) % 101) as f64 * 0.3 - 7.0).collect();
        normalize(&mut v).unwrap();
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() < 1e-9);
        assert!((std - 1.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn recursion_holds_everywhere(
            steps in proptest::collection::vec((-10.0f64..10.0, proptest::bool::weighted(0.1)), 1..200),
            gamma in 0.0f64..=1.0,
        ) {
            let rewards: Vec<f64> = steps.iter().map(|s| s.0).collect();
            let dones: Vec<bool> = steps.iter().map(|s| s.1).collect();
            let r = compute_returns(&rewards, &dones, gamma);
            for t in 0..r.len() {
                let next = if t + 1 < r.len() && !dones[t] { r[t + 1] } else { 0.0 };
                prop_assert!((r[t] - (rewards[t] + gamma * next)).abs() <= 1e-12);
            }
        }
    }
}
