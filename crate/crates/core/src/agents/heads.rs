use rand::Rng as _;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::envs::{Action, ActionSpace};
use crate::error::{Error, Result};
use crate::nn::{sigmoid, softplus};
use crate::rng::Rng;

/// Keeps Beta samples away from the endpoints so `ln x` and `ln(1 − x)` stay finite.
const BETA_EDGE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleMode {
    /// Draw from the distribution.
    Train,
    /// Beta mean, categorical argmax.
    Eval,
}

/// Maps raw network outputs to an action distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyHead {
    /// Raw outputs `[z_α (dim), z_β (dim)]`, `α = softplus(z_α) + 1`.
    Beta { low: f64, high: f64, dim: usize },
    /// Raw outputs are logits.
    Categorical { n: usize },
    /// `a = mid + half · tanh(z)`.
    Deterministic { low: f64, high: f64, dim: usize },
}

fn check_bounds(low: f64, high: f64, dim: usize) -> Result<()> {
    if !(low.is_finite() && high.is_finite() && low < high) || dim == 0 {
        return Err(Error::InvalidArgument(format!(
            "degenerate action bounds [{low}, {high}] with dim {dim}"
        )));
    }
    Ok(())
}

/// Keeps `α, β` strictly above 1 even where `softplus` underflows.
const SHAPE_FLOOR: f64 = 1e-9;

/// `(α, β)` from raw outputs; both exceed 1.
pub fn beta_params(z_alpha: f64, z_beta: f64) -> (f64, f64) {
    (1.0 + SHAPE_FLOOR + softplus(z_alpha), 1.0 + SHAPE_FLOOR + softplus(z_beta))
}

/// Log density of `Beta(α, β)` at `x ∈ (0, 1)`.
pub fn beta_log_pdf(x: f64, alpha: f64, beta: f64) -> f64 {
    let log_norm = ln_gamma(alpha + beta) - ln_gamma(alpha) - ln_gamma(beta);
    (alpha - 1.0) * x.ln() + (beta - 1.0) * (1.0 - x).ln() + log_norm
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

impl PolicyHead {
    pub fn beta(low: f64, high: f64, dim: usize) -> Result<Self> {
        check_bounds(low, high, dim)?;
        Ok(Self::Beta { low, high, dim })
    }

    pub fn categorical(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("categorical head needs at least one action".into()));
        }
        Ok(Self::Categorical { n })
    }

    pub fn deterministic(low: f64, high: f64, dim: usize) -> Result<Self> {
        check_bounds(low, high, dim)?;
        Ok(Self::Deterministic { low, high, dim })
    }

    /// Beta for bounded continuous spaces, categorical for discrete ones.
    pub fn stochastic_for(space: &ActionSpace) -> Result<Self> {
        match *space {
            ActionSpace::Discrete(n) => Self::categorical(n),
            ActionSpace::Continuous { low, high, dim } => Self::beta(low, high, dim),
        }
    }

    /// Number of raw network outputs the head consumes.
    pub fn raw_dim(&self) -> usize {
        match *self {
            Self::Beta { dim, .. } => 2 * dim,
            Self::Categorical { n } => n,
            Self::Deterministic { dim, .. } => dim,
        }
    }

    fn check_raw(&self, raw: &[f64]) -> Result<()> {
        crate::error::check_dim("policy head input", self.raw_dim(), raw.len())?;
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("policy head input".into()));
        }
        Ok(())
    }

    /// Samples (or, in eval mode, picks the mean/mode) and returns the
    /// action with its log-probability.
    pub fn sample(&self, raw: &[f64], rng: &mut Rng, mode: SampleMode) -> Result<(Action, f64)> {
        self.check_raw(raw)?;
        let action = match (self, mode) {
            (Self::Beta { low, high, dim }, SampleMode::Train) => {
                let mut out = Vec::with_capacity(*dim);
                for d in 0..*dim {
                    let (a, b) = beta_params(raw[d], raw[dim + d]);
                    let dist = Beta::new(a, b).map_err(|e| Error::InvalidArgument(format!("beta({a}, {b}): {e}")))?;
                    let x: f64 = dist.sample(rng).clamp(BETA_EDGE, 1.0 - BETA_EDGE);
                    out.push((low + (high - low) * x).clamp(*low, *high));
                }
                Action::Continuous(out)
            }
            (Self::Categorical { .. }, SampleMode::Train) => {
                let probs = softmax(raw);
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = probs.len() - 1;
                for (i, p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        pick = i;
                        break;
                    }
                }
                Action::Discrete(pick)
            }
            _ => self.mean_action(raw)?,
        };
        let log_prob = match self {
            Self::Deterministic { .. } => 0.0,
            _ => self.log_prob(raw, &action)?,
        };
        Ok((action, log_prob))
    }

    /// Beta mean scaled to the bounds, categorical argmax, or the squashed
    /// deterministic output.
    pub fn mean_action(&self, raw: &[f64]) -> Result<Action> {
        self.check_raw(raw)?;
        Ok(match *self {
            Self::Beta { low, high, dim } => Action::Continuous(
                (0..dim)
                    .map(|d| {
                        let (a, b) = beta_params(raw[d], raw[dim + d]);
                        0.5 * (low + high) + 0.5 * (high - low) * (a - b) / (a + b)
                    })
                    .collect(),
            ),
            Self::Categorical { .. } => Action::Discrete(argmax(raw)),
            Self::Deterministic { low, high, .. } => {
                let (mid, half) = (0.5 * (low + high), 0.5 * (high - low));
                Action::Continuous(raw.iter().map(|z| mid + half * z.tanh()).collect())
            }
        })
    }

    /// Unit-interval coordinate of a continuous action.
    fn unit(&self, low: f64, high: f64, a: f64) -> f64 {
        ((a - low) / (high - low)).clamp(BETA_EDGE, 1.0 - BETA_EDGE)
    }

    /// Exact log-density of `action`, including the `−ln(high − low)`
    /// change-of-variables term for scaled Beta actions.
    pub fn log_prob(&self, raw: &[f64], action: &Action) -> Result<f64> {
        Ok(self.log_prob_grad(raw, action)?.0)
    }

    /// Log-probability and its gradient with respect to the raw outputs.
    pub fn log_prob_grad(&self, raw: &[f64], action: &Action) -> Result<(f64, Vec<f64>)> {
        self.check_raw(raw)?;
        match (self, action) {
            (Self::Beta { low, high, dim }, Action::Continuous(a)) if a.len() == *dim => {
                let mut lp = 0.0;
                let mut grad = vec![0.0; 2 * dim];
                for d in 0..*dim {
                    let (al, be) = beta_params(raw[d], raw[dim + d]);
                    let x = self.unit(*low, *high, a[d]);
                    lp += beta_log_pdf(x, al, be) - (high - low).ln();
                    let shared = digamma(al + be);
                    grad[d] = (x.ln() - digamma(al) + shared) * sigmoid(raw[d]);
                    grad[dim + d] = ((1.0 - x).ln() - digamma(be) + shared) * sigmoid(raw[dim + d]);
                }
                Ok((lp, grad))
            }
            (Self::Categorical { n }, Action::Discrete(i)) if i < n => {
                let probs = softmax(raw);
                let lp = probs[*i].ln();
                let mut grad: Vec<f64> = probs.iter().map(|p| -p).collect();
                grad[*i] += 1.0;
                let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + raw.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
                Ok((if lp.is_finite() { lp } else { raw[*i] - lse }, grad))
            }
            (Self::Deterministic { .. }, _) => Err(Error::InvalidArgument("a deterministic head has no density".into())),
            _ => Err(Error::InvalidAction {
                action: format!("{action:?}"),
                space: format!("{self:?}"),
            }),
        }
    }
}
