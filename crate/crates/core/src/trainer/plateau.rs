use serde::{Deserialize, Serialize};

/// Where the return curve stops moving.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plateau {
    pub index: usize,
    /// `false` when the curve never settled; `index` is then the last iteration.
    pub found: bool,
}

/// First iteration `t ≥ window` after which the trailing moving average
/// (over `window` iterations) never changes by a relative amount of
/// `tolerance` or more from one iteration to the next.
pub fn detect_plateau(history: &[f64], window: usize, tolerance: f64) -> Plateau {
    let last = history.len().saturating_sub(1);
    let window = window.max(1);
    if history.len() <= window {
        return Plateau { index: last, found: false };
    }
    let mut sum: f64 = history[..window].iter().sum();
    let mut ma = Vec::with_capacity(history.len() - window + 1);
    ma.push(sum / window as f64);
    for t in window..history.len() {
        sum += history[t] - history[t - window];
        ma.push(sum / window as f64);
    }
    // ma[j] is the moving average ending at iteration j + window - 1.
    let mut candidate = None;
    for j in (1..ma.len()).rev() {
        let change = (ma[j] - ma[j - 1]).abs() / ma[j - 1].abs().max(1e-8);
        if change < tolerance {
            candidate = Some(j + window - 1);
        } else {
            break;
        }
    }
    match candidate {
        Some(index) => Plateau { index, found: true },
        None => Plateau { index: last, found: false },
    }
}

/// Number of trailing snapshots to average: the final `fraction` of the run,
/// or the post-plateau span when that is shorter.
pub fn ranking_window(iterations: usize, fraction: f64, plateau: Option<Plateau>) -> usize {
    if iterations == 0 {
        return 0;
    }
    let tail = ((iterations as f64 * fraction).ceil() as usize).clamp(1, iterations);
    match plateau {
        Some(p) if p.found => tail.min(iterations - p.index).max(1),
        _ => tail,
    }
}
