use std::io::Write;

use super::{Action, Environment};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub step: usize,
    pub features: Vec<f64>,
    pub action: Action,
    pub reward: f64,
    pub done: bool,
}

/// Runs `actions` from `reset(seed)` until they run out or the episode ends.
/// Each row holds the observation the action was taken from.
pub fn record_trajectory(env: &mut dyn Environment, seed: u64, actions: &[Action]) -> Result<Vec<TrajectoryRow>> {
    let mut obs = env.reset(seed);
    let mut rows = Vec::with_capacity(actions.len());
    for (step, action) in actions.iter().enumerate() {
        let r = env.step(action)?;
        rows.push(TrajectoryRow {
            step,
            features: std::mem::replace(&mut obs, r.next_state),
            action: action.clone(),
            reward: r.reward,
            done: r.done,
        });
        if r.done {
            break;
        }
    }
    Ok(rows)
}

/// CSV with columns `step, <feature names...>, action, reward, done`.
pub fn write_trajectory_csv<W: Write>(out: W, feature_names: &[String], rows: &[TrajectoryRow]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let mut header = vec!["step".to_string()];
    header.extend(feature_names.iter().cloned());
    header.extend(["action", "reward", "done"].map(String::from));
    writer.write_record(&header)?;
    for row in rows {
        let mut record = vec![row.step.to_string()];
        record.extend(row.features.iter().map(|v| format!("{v:?}")));
        record.push(row.action.to_csv_field());
        record.push(format!("{:?}", row.reward));
        record.push(row.done.to_string());
        writer.write_record(&record)?;
    }
    writer.flush().map_err(|e| Error::io("<trajectory>", e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{make_env, MaskedEnv};

    #[test]
    fn same_seed_same_trajectory_including_noise() {
        let actions: Vec<Action> = (0..100).map(|t| Action::Discrete((t * 7 + 3) % 2)).collect();
        let mut a = make_env("cartpole+aug").unwrap();
        let mut b = make_env("cartpole+aug").unwrap();
        assert_eq!(record_trajectory(a.as_mut(), 21, &actions).unwrap(), record_trajectory(b.as_mut(), 21, &actions).unwrap());
    }

    #[test]
    fn masked_matches_projected_full_trajectory() {
        let subset = [6, 2, 4];
        let actions: Vec<Action> = (0..200).map(|t| Action::Discrete((t / 3) % 2)).collect();
        let mut full = make_env("cartpole+aug").unwrap();
        let mut masked = MaskedEnv::new(make_env("cartpole+aug").unwrap(), &subset).unwrap();
        let f = record_trajectory(full.as_mut(), 8, &actions).unwrap();
        let m = record_trajectory(&mut masked, 8, &actions).unwrap();
        assert_eq!(f.len(), m.len());
        for (fr, mr) in f.iter().zip(&m) {
            let projected: Vec<f64> = subset.iter().map(|&i| fr.features[i]).collect();
            assert_eq!(projected, mr.features);
            assert_eq!((fr.reward, fr.done), (mr.reward, mr.done));
        }
    }

    #[test]
    fn csv_layout() {
        let mut env = make_env("pendulum").unwrap();
        let rows = record_trajectory(env.as_mut(), 0, &[Action::Continuous(vec![0.5]), Action::Continuous(vec![-0.5])]).unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &env.spec().feature_names, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "step,theta,omega,action,reward,done");
        assert_eq!(lines.count(), 2);
    }
}
