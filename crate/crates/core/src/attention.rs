//! Attention-based evaluator: a tanh encoder over the raw state feeds two
//! affine heads that score each feature as "selected" (`x`) or "unselected"
//! (`y`); a two-way softmax turns each pair into a selection probability
//! `p = e^x / (e^x + e^y)`. The virtual state is `s_r ⊙ p`.

use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::nn::{xavier_uniform, Activation, LayerManifest, NetKind, NetSnapshot, ParamVector, Parameterized};
use crate::rng::Rng;

/// Probabilities are kept inside `[P_FLOOR, 1 - P_FLOOR]` so they stay
/// strictly inside the open unit interval in floating point.
pub const P_FLOOR: f64 = 1e-12;

/// Two-way softmax `e^x / (e^x + e^y)` with the larger logit subtracted
/// before exponentiation.
pub fn selection_probability(x: f64, y: f64) -> f64 {
    raw_probability(x, y).clamp(P_FLOOR, 1.0 - P_FLOOR)
}

fn raw_probability(x: f64, y: f64) -> f64 {
    let m = x.max(y);
    let ex = (x - m).exp();
    let ey = (y - m).exp();
    ex / (ex + ey)
}

/// `dp/d(x - y)`, zero where the probability is clamped.
fn probability_slope(x: f64, y: f64) -> f64 {
    let p = raw_probability(x, y);
    if p <= P_FLOOR || p >= 1.0 - P_FLOOR {
        0.0
    } else {
        p * (1.0 - p)
    }
}

/// Selection probabilities for one state (or the mean state of a batch).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionWeights {
    pub p: Vec<f64>,
    pub snapshot_step: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttentionConfig {
    /// Width of the encoder layer.
    pub hidden: usize,
    pub lr: f64,
}

impl Default for AttentionConfig {
    fn default() -> Self {
        Self { hidden: 20, lr: 1e-3 }
    }
}

#[derive(Debug, Clone)]
struct AeCache {
    input: Array2<f64>,
    encoded: Array2<f64>,
    x: Array2<f64>,
    y: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct AttentionEvaluator {
    params: ParamVector,
    features: usize,
    hidden: usize,
    offsets: [usize; 6],
    cache: Option<AeCache>,
}

const ENC_W: usize = 0;
const ENC_B: usize = 1;
const SEL_W: usize = 2;
const SEL_B: usize = 3;
const REJ_W: usize = 4;
const REJ_B: usize = 5;

impl AttentionEvaluator {
    pub fn new(features: usize, hidden: usize, rng: &mut Rng) -> Self {
        assert!(features >= 1 && hidden >= 1, "attention evaluator needs m >= 1 and N_E >= 1");
        let mut params = ParamVector::new();
        let offsets = [
            params.push_block("encoder.weight", xavier_uniform(features, hidden, rng)),
            params.push_block("encoder.bias", vec![0.0; hidden]),
            params.push_block("select.weight", xavier_uniform(hidden, features, rng)),
            params.push_block("select.bias", vec![0.0; features]),
            params.push_block("reject.weight", xavier_uniform(hidden, features, rng)),
            params.push_block("reject.bias", vec![0.0; features]),
        ];
        Self {
            params,
            features,
            hidden,
            offsets,
            cache: None,
        }
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamVector {
        &mut self.params
    }

    fn matrix(&self, block: usize, rows: usize, cols: usize) -> ArrayView2<'_, f64> {
        let off = self.offsets[block];
        ArrayView2::from_shape((rows, cols), &self.params.values()[off..off + rows * cols]).expect("block shape")
    }

    fn vector(&self, block: usize, len: usize) -> ArrayView1<'_, f64> {
        let off = self.offsets[block];
        ArrayView1::from(&self.params.values()[off..off + len])
    }

    /// Encoder output and the selected/unselected logits for a batch.
    pub fn logits(&self, s_r: ArrayView2<f64>) -> Result<(Array2<f64>, Array2<f64>, Array2<f64>)> {
        check_dim("attention input", self.features, s_r.ncols())?;
        if s_r.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("attention input state".into()));
        }
        let mut encoded = s_r.dot(&self.matrix(ENC_W, self.features, self.hidden));
        encoded += &self.vector(ENC_B, self.hidden);
        encoded.mapv_inplace(f64::tanh);
        let mut x = encoded.dot(&self.matrix(SEL_W, self.hidden, self.features));
        x += &self.vector(SEL_B, self.features);
        let mut y = encoded.dot(&self.matrix(REJ_W, self.hidden, self.features));
        y += &self.vector(REJ_B, self.features);
        Ok((encoded, x, y))
    }

    /// Selection probabilities for a batch of raw states.
    pub fn weights(&self, s_r: ArrayView2<f64>) -> Result<Array2<f64>> {
        let (_, x, y) = self.logits(s_r)?;
        Ok(probabilities(&x, &y))
    }

    pub fn compute_weights(&self, s_r: &[f64]) -> Result<AttentionWeights> {
        let view = ArrayView2::from_shape((1, s_r.len()), s_r).expect("row view");
        let p = self.weights(view)?;
        Ok(AttentionWeights {
            p: p.into_raw_vec_and_offset().0,
            snapshot_step: 0,
        })
    }

    /// Weights evaluated on the mean of a batch of raw states.
    pub fn snapshot(&self, s_r: ArrayView2<f64>, step: usize) -> Result<AttentionWeights> {
        let mean = s_r
            .mean_axis(Axis(0))
            .ok_or_else(|| Error::InvalidArgument("empty batch for weight snapshot".into()))?;
        let mut w = self.compute_weights(mean.as_slice().expect("contiguous"))?;
        w.snapshot_step = step;
        Ok(w)
    }

    pub fn forward_train(&mut self, s_r: ArrayView2<f64>) -> Result<Array2<f64>> {
        let (encoded, x, y) = self.logits(s_r)?;
        let p = probabilities(&x, &y);
        self.cache = Some(AeCache {
            input: s_r.to_owned(),
            encoded,
            x,
            y,
        });
        Ok(p)
    }

    /// Backpropagates per-sample `dℓ/dp`; accumulates batch-mean parameter
    /// gradients and returns `dℓ/ds_r` along the attention path only.
    pub fn backward(&mut self, grad_p: ArrayView2<f64>) -> Result<Array2<f64>> {
        let cache = self.cache.take().ok_or(Error::NoCachedActivations("AttentionEvaluator"))?;
        check_dim("attention backward batch", cache.input.nrows(), grad_p.nrows())?;
        check_dim("attention backward width", self.features, grad_p.ncols())?;
        let inv_batch = 1.0 / cache.input.nrows() as f64;

        // d = x - y drives p; dℓ/dx = dℓ/dd, dℓ/dy = -dℓ/dd.
        let mut grad_d = grad_p.to_owned();
        ndarray::Zip::from(&mut grad_d)
            .and(&cache.x)
            .and(&cache.y)
            .for_each(|g, &x, &y| *g *= probability_slope(x, y));

        let grad_sel_w = cache.encoded.t().dot(&grad_d);
        let grad_d_sum = grad_d.sum_axis(Axis(0));
        let sel_w = self.matrix(SEL_W, self.hidden, self.features);
        let rej_w = self.matrix(REJ_W, self.hidden, self.features);
        let head_diff = &sel_w - &rej_w;
        let mut grad_enc = grad_d.dot(&head_diff.t());
        ndarray::Zip::from(&mut grad_enc)
            .and(&cache.encoded)
            .for_each(|g, &e| *g *= 1.0 - e * e);
        let grad_enc_w = cache.input.t().dot(&grad_enc);
        let grad_enc_b = grad_enc.sum_axis(Axis(0));
        let grad_input = grad_enc.dot(&self.matrix(ENC_W, self.features, self.hidden).t());

        let offsets = self.offsets;
        let grads = self.params.grads_mut();
        let mut add = |block: usize, values: &mut dyn Iterator<Item = f64>| {
            for (g, v) in grads[offsets[block]..].iter_mut().zip(values) {
                *g += v * inv_batch;
            }
        };
        add(ENC_W, &mut grad_enc_w.iter().copied());
        add(ENC_B, &mut grad_enc_b.iter().copied());
        add(SEL_W, &mut grad_sel_w.iter().copied());
        add(SEL_B, &mut grad_d_sum.iter().copied());
        add(REJ_W, &mut grad_sel_w.iter().map(|v| -v));
        add(REJ_B, &mut grad_d_sum.iter().map(|v| -v));
        Ok(grad_input)
    }

    pub fn snapshot_params(&self, name: &str) -> NetSnapshot {
        let layers = vec![
            LayerManifest {
                in_dim: self.features,
                out_dim: self.hidden,
                activation: Activation::Tanh,
            },
            LayerManifest {
                in_dim: self.hidden,
                out_dim: self.features,
                activation: Activation::Identity,
            },
            LayerManifest {
                in_dim: self.hidden,
                out_dim: self.features,
                activation: Activation::Identity,
            },
        ];
        NetSnapshot::capture(name, NetKind::Attention, layers, &self.params)
    }

    pub fn from_snapshot(snap: &NetSnapshot) -> Result<Self> {
        if snap.manifest.kind != NetKind::Attention || snap.manifest.layers.len() != 3 {
            return Err(Error::Format(format!("`{}` is not an attention snapshot", snap.manifest.name)));
        }
        let params = snap.to_params()?;
        let features = snap.manifest.layers[0].in_dim;
        let hidden = snap.manifest.layers[0].out_dim;
        let mut offsets = [0; 6];
        for (slot, block) in offsets.iter_mut().zip(params.blocks()) {
            *slot = block.offset;
        }
        if params.len() != 2 * features * hidden + hidden + hidden * features + 2 * features {
            return Err(Error::Format("attention snapshot has inconsistent size".into()));
        }
        Ok(Self {
            params,
            features,
            hidden,
            offsets,
            cache: None,
        })
    }
}

impl Parameterized for AttentionEvaluator {
    fn param_vectors(&self) -> Vec<&ParamVector> {
        vec![&self.params]
    }

    fn param_vectors_mut(&mut self) -> Vec<&mut ParamVector> {
        vec![&mut self.params]
    }
}

fn probabilities(x: &Array2<f64>, y: &Array2<f64>) -> Array2<f64> {
    let mut p = x.clone();
    ndarray::Zip::from(&mut p).and(y).for_each(|p, &y| *p = selection_probability(*p, y));
    p
}

/// `s_v = s_r ⊙ p` for one state.
pub fn map_virtual(s_r: &[f64], p: &[f64]) -> Result<Vec<f64>> {
    check_dim("map_virtual", s_r.len(), p.len())?;
    Ok(s_r.iter().zip(p).map(|(s, w)| s * w).collect())
}

/// Batched `s_r ⊙ p`.
pub fn map_virtual_batch(s_r: ArrayView2<f64>, p: ArrayView2<f64>) -> Result<Array2<f64>> {
    check_dim("map_virtual rows", s_r.nrows(), p.nrows())?;
    check_dim("map_virtual cols", s_r.ncols(), p.ncols())?;
    Ok(&s_r * &p)
}

/// Given `dℓ/ds_v`, returns `(dℓ/ds_r, dℓ/dp)` for `s_v = s_r ⊙ p`.
pub fn map_virtual_backward(
    grad_sv: ArrayView2<f64>,
    s_r: ArrayView2<f64>,
    p: ArrayView2<f64>,
) -> (Array2<f64>, Array2<f64>) {
    (&grad_sv * &p, &grad_sv * &s_r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub index: usize,
    pub mean_weight: f64,
}

/// Features ordered by time-averaged weight, highest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRanking {
    pub entries: Vec<RankEntry>,
    /// Number of trailing snapshots averaged.
    pub window: usize,
    pub history_len: usize,
}

impl FeatureRanking {
    /// Ranks per-feature scores directly (descending, ties by lower index).
    pub fn from_means(means: &[f64], window: usize, history_len: usize) -> Self {
        let mut entries: Vec<RankEntry> = means
            .iter()
            .enumerate()
            .map(|(index, &mean_weight)| RankEntry { index, mean_weight })
            .collect();
        entries.sort_by(|a, b| b.mean_weight.total_cmp(&a.mean_weight).then(a.index.cmp(&b.index)));
        Self {
            entries,
            window,
            history_len,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Mean weight of a feature by its index.
    pub fn weight_of(&self, index: usize) -> Option<f64> {
        self.entries.iter().find(|e| e.index == index).map(|e| e.mean_weight)
    }

    /// Position (0 = best) of a feature in the ranking.
    pub fn rank_of(&self, index: usize) -> Option<usize> {
        self.entries.iter().position(|e| e.index == index)
    }

    /// Means in feature-index order.
    pub fn means_by_index(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.entries.len()];
        for e in &self.entries {
            out[e.index] = e.mean_weight;
        }
        out
    }

    pub fn to_records(&self, names: &[String]) -> Vec<RankRecord> {
        self.entries
            .iter()
            .enumerate()
            .map(|(rank, e)| RankRecord {
                index: e.index,
                name: names.get(e.index).cloned().unwrap_or_else(|| format!("feature_{}", e.index)),
                mean_weight: e.mean_weight,
                rank: rank + 1,
            })
            .collect()
    }
}

/// One row of the ranking export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRecord {
    pub index: usize,
    pub name: String,
    pub mean_weight: f64,
    pub rank: usize,
}

/// Per-feature mean over the last `window` snapshots, ranked.
pub fn snapshot_and_average(history: &[AttentionWeights], window: usize) -> Result<FeatureRanking> {
    let last = history
        .last()
        .ok_or_else(|| Error::InvalidArgument("empty weight history".into()))?;
    if window == 0 || window > history.len() {
        return Err(Error::InvalidArgument(format!(
            "averaging window {window} outside 1..={}",
            history.len()
        )));
    }
    let m = last.p.len();
    let mut means = vec![0.0; m];
    for snap in &history[history.len() - window..] {
        check_dim("weight history width", m, snap.p.len())?;
        for (acc, p) in means.iter_mut().zip(&snap.p) {
            *acc += p;
        }
    }
    means.iter_mut().for_each(|v| *v /= window as f64);
    Ok(FeatureRanking::from_means(&means, window, history.len()))
}

/// Indices of the `k` highest-ranked features.
pub fn top_k(ranking: &FeatureRanking, k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > ranking.len() {
        return Err(Error::InvalidArgument(format!("k = {k} outside 1..={}", ranking.len())));
    }
    Ok(ranking.entries[..k].iter().map(|e| e.index).collect())
}

/// Writes `iteration,feature_0,...` rows. Values use shortest round-trip
/// formatting so identical runs produce identical bytes.
pub fn write_weight_history_csv<W: Write>(out: W, history: &[AttentionWeights], features: usize) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let mut header = vec!["iteration".to_string()];
    header.extend((0..features).map(|k| format!("feature_{k}")));
    writer.write_record(&header)?;
    for snap in history {
        check_dim("weight history width", features, snap.p.len())?;
        let mut row = vec![snap.snapshot_step.to_string()];
        row.extend(snap.p.iter().map(|v| format!("{v:?}")));
        writer.write_record(&row)?;
    }
    writer.flush().map_err(|e| Error::io("<weight history>", e))?;
    Ok(())
}

pub fn save_weight_history_csv(path: &Path, history: &[AttentionWeights], features: usize) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_weight_history_csv(std::io::BufWriter::new(file), history, features)
}

pub fn read_weight_history_csv(path: &Path) -> Result<Vec<AttentionWeights>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut history = Vec::new();
    for record in reader.records() {
        let record = record?;
        let parse = |s: &str| s.parse::<f64>().map_err(|e| Error::Format(format!("{}: {e}", path.display())));
        let step = record
            .get(0)
            .ok_or_else(|| Error::Format(format!("{}: empty row", path.display())))?
            .parse::<usize>()
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        let p = record.iter().skip(1).map(parse).collect::<Result<Vec<_>>>()?;
        history.push(AttentionWeights { p, snapshot_step: step });
    }
    Ok(history)
}

/// Mean of a set of weight vectors, used to collapse a batch of per-state
/// weights into one vector.
pub fn mean_weights(p: ArrayView2<f64>) -> Array1<f64> {
    p.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(p.ncols()))
}
