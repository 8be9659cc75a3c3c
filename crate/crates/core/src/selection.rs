//! Subset re-evaluation and comparison: rank features from a dual-world
//! run, retrain plain single-world agents on Top-K, full and random subsets
//! under identical budgets, and render the results.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agents::Algorithm;
use crate::attention::{snapshot_and_average, top_k, FeatureRanking, RankRecord};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from, stream};
use crate::trainer::{evaluate, load_run, ranking_window, train_agent, TrainConfig, TrainReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Baselines {
    /// Evaluate the full feature set.
    pub full: bool,
    /// Random subsets drawn per `k`.
    pub random_trials: usize,
}

impl Default for Baselines {
    fn default() -> Self {
        Self {
            full: true,
            random_trials: 5,
        }
    }
}

/// How a subset is re-evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Algorithm of the plain agent; the dual-world run's when unset.
    pub algorithm: Option<Algorithm>,
    /// Training iterations; the dual-world run's when unset.
    pub iterations: Option<usize>,
    /// Training seeds.
    pub seeds: Vec<u64>,
    /// Greedy evaluation episodes per seed.
    pub episodes: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            algorithm: None,
            iterations: None,
            seeds: vec![0, 1, 2],
            episodes: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// The dual-world training run (and the budget template for subsets).
    pub train: TrainConfig,
    pub top_k: Vec<usize>,
    pub baselines: Baselines,
    pub eval: EvalConfig,
    /// Output directory; the dual-world run lives in `<output>/dafs`.
    pub output: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            top_k: vec![4],
            baselines: Baselines::default(),
            eval: EvalConfig::default(),
            output: PathBuf::from("runs/experiment"),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self, features: usize) -> Result<()> {
        self.train.validate()?;
        if self.eval.episodes == 0 {
            return Err(Error::InvalidArgument("`eval.episodes` must be at least 1".into()));
        }
        if self.eval.seeds.is_empty() {
            return Err(Error::InvalidArgument("`eval.seeds` must list at least one seed".into()));
        }
        if let Some(&k) = self.top_k.iter().find(|&&k| k == 0 || k > features) {
            return Err(Error::InvalidArgument(format!("`top_k` value {k} outside 1..={features}")));
        }
        Ok(())
    }

    /// Directory of the dual-world run.
    pub fn run_dir(&self) -> PathBuf {
        self.output.join("dafs")
    }

    /// Short SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        config_hash(self)
    }
}

pub fn config_hash<T: Serialize>(value: &T) -> String {
    let text = serde_json::to_string(value).expect("config serialises");
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub mean: f64,
    pub returns: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedSeed {
    pub seed: u64,
    pub error: String,
}

/// Statistics of a plain agent trained and evaluated on one subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetEvaluation {
    pub indices: Vec<usize>,
    pub names: Vec<String>,
    pub algorithm: Algorithm,
    pub per_seed: Vec<SeedResult>,
    pub failed: Vec<FailedSeed>,
    /// Mean over all evaluation episodes of successful seeds.
    pub mean: f64,
    /// Population standard deviation over the same episodes.
    pub std: f64,
    pub episodes: usize,
}

/// Trains a plain (single-world) agent on `subset` for each seed with the
/// budget of `base`, then evaluates `episodes` greedy episodes per seed.
/// A seed whose training fails is recorded, not hidden.
pub fn evaluate_subset(base: &TrainConfig, subset: &[usize], seeds: &[u64], episodes: usize) -> Result<SubsetEvaluation> {
    if episodes == 0 || seeds.is_empty() {
        return Err(Error::InvalidArgument("subset evaluation needs at least one seed and one episode".into()));
    }
    let names_env = base.build_env()?;
    let all_names = names_env.spec().feature_names.clone();
    let names = subset
        .iter()
        .map(|&i| {
            all_names
                .get(i)
                .cloned()
                .ok_or_else(|| Error::InvalidArgument(format!("feature index {i} outside 0..{}", all_names.len())))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut per_seed = Vec::new();
    let mut failed = Vec::new();
    for &seed in seeds {
        let cfg = TrainConfig {
            dual: false,
            features: Some(subset.to_vec()),
            seed,
            ..base.clone()
        };
        let outcome = train_agent(&cfg).and_then(|(_, agent, _)| {
            let mut env = cfg.build_env()?;
            evaluate(agent.behaviour(), env.as_mut(), episodes, derive_seed(seed, stream::EVAL))
        });
        match outcome {
            Ok(returns) => per_seed.push(SeedResult {
                seed,
                mean: returns.iter().sum::<f64>() / returns.len() as f64,
                returns,
            }),
            Err(e @ (Error::InvalidArgument(_) | Error::UnknownEnv { .. })) => return Err(e),
            Err(e) => failed.push(FailedSeed {
                seed,
                error: e.to_string(),
            }),
        }
    }
    let all: Vec<f64> = per_seed.iter().flat_map(|s| s.returns.iter().copied()).collect();
    let (mean, std) = if all.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        let n = all.len() as f64;
        let mean = all.iter().sum::<f64>() / n;
        (mean, (all.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n).sqrt())
    };
    Ok(SubsetEvaluation {
        indices: subset.to_vec(),
        names,
        algorithm: base.algorithm,
        per_seed,
        failed,
        mean,
        std,
        episodes: all.len(),
    })
}

/// `k` distinct feature indices drawn for random-subset trial `trial`.
pub fn random_subset(features: usize, k: usize, seed: u64, trial: usize) -> Result<Vec<usize>> {
    if k == 0 || k > features {
        return Err(Error::InvalidArgument(format!("k = {k} outside 1..={features}")));
    }
    let mut rng = rng_from(derive_seed(seed, (k as u64) << 32 | trial as u64), stream::SUBSET);
    let mut idx = sample(&mut rng, features, k).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubsetKind {
    Dafs,
    Full,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonEntry {
    pub kind: SubsetKind,
    pub k: usize,
    /// Random-trial number for random subsets.
    pub trial: Option<usize>,
    pub evaluation: SubsetEvaluation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestRandom {
    pub k: usize,
    pub trial: usize,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub config_hash: String,
    pub env: String,
    pub algorithm: Algorithm,
    pub seeds: Vec<u64>,
    pub ranking: Vec<RankRecord>,
    /// Every evaluated subset, random trials included.
    pub entries: Vec<ComparisonEntry>,
    /// Best-of-n random trial per `k`.
    pub best_random: Vec<BestRandom>,
}

impl ComparisonReport {
    pub fn entry(&self, kind: SubsetKind, k: usize) -> Option<&ComparisonEntry> {
        self.entries.iter().find(|e| e.kind == kind && e.k == k)
    }
}

/// Ranking of a finished run, recomputed from its weight history.
pub fn rank_report(report: &TrainReport) -> Result<FeatureRanking> {
    if report.weight_history.is_empty() {
        return Err(Error::InvalidArgument(
            "the run has no attention weights (was it trained with `dual: false`?)".into(),
        ));
    }
    let window = match &report.ranking {
        Some(r) => r.window,
        None => ranking_window(report.weight_history.len(), 0.1, report.plateau),
    };
    snapshot_and_average(&report.weight_history, window)
}

/// Evaluates D-AFS Top-K subsets, the full set and random subsets for
/// every `k`, all under the budget of `cfg.train` with dual world off.
/// Evaluations run concurrently; each owns its environments and RNGs.
pub fn compare(cfg: &ExperimentConfig, report: &TrainReport) -> Result<ComparisonReport> {
    let features = report.feature_names.len();
    cfg.validate(features)?;
    let ranking = rank_report(report)?;
    let mut base = TrainConfig {
        dual: false,
        ..cfg.train.clone()
    };
    if let Some(a) = cfg.eval.algorithm {
        base.algorithm = a;
    }
    if let Some(n) = cfg.eval.iterations {
        base.iterations = n;
    }
    let seeds = &cfg.eval.seeds;
    let episodes = cfg.eval.episodes;
    let mut jobs: Vec<(SubsetKind, usize, Option<usize>, Vec<usize>)> = Vec::new();
    for &k in &cfg.top_k {
        jobs.push((SubsetKind::Dafs, k, None, top_k(&ranking, k)?));
        for trial in 0..cfg.baselines.random_trials {
            jobs.push((SubsetKind::Random, k, Some(trial), random_subset(features, k, cfg.train.seed, trial)?));
        }
    }
    if cfg.baselines.full {
        jobs.push((SubsetKind::Full, features, None, (0..features).collect()));
    }
    let entries = jobs
        .into_par_iter()
        .map(|(kind, k, trial, subset)| {
            Ok(ComparisonEntry {
                kind,
                k,
                trial,
                evaluation: evaluate_subset(&base, &subset, seeds, episodes)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best_random: Vec<BestRandom> = Vec::new();
    for e in entries.iter().filter(|e| e.kind == SubsetKind::Random && e.evaluation.mean.is_finite()) {
        let trial = e.trial.expect("random entries carry a trial");
        match best_random.iter_mut().find(|b| b.k == e.k) {
            Some(b) if e.evaluation.mean > b.mean => {
                b.trial = trial;
                b.mean = e.evaluation.mean;
            }
            Some(_) => {}
            None => best_random.push(BestRandom {
                k: e.k,
                trial,
                mean: e.evaluation.mean,
            }),
        }
    }
    Ok(ComparisonReport {
        config_hash: cfg.hash(),
        env: report.env.clone(),
        algorithm: base.algorithm,
        seeds: seeds.clone(),
        ranking: ranking.to_records(&report.feature_names),
        entries,
        best_random,
    })
}

/// Loads `<output>/dafs` and runs [`compare`].
pub fn compare_from_run(cfg: &ExperimentConfig) -> Result<ComparisonReport> {
    let dir = cfg.run_dir();
    if !dir.join("report.json").is_file() {
        return Err(Error::InvalidArgument(format!(
            "no dual-world run at {}; run `dafs train --config <experiment config>` first",
            dir.display()
        )));
    }
    let run = load_run(&dir)?;
    compare(cfg, &run.report)
}

/// Weight formatting in the style of the published tables: three decimals,
/// scientific notation below 0.01.
pub fn format_weight(w: f64) -> String {
    if w >= 0.01 {
        format!("{w:.3}")
    } else {
        format!("{w:.2e}")
    }
}

/// One row of a weight table.
pub struct WeightRow<'a> {
    pub label: &'a str,
    pub names: &'a [String],
    pub weights: &'a [f64],
    pub selected: &'a [usize],
}

/// Markdown table: rows are runs, columns the features of each run, cells
/// the mean weights; selected features are bold.
pub fn weight_table(rows: &[WeightRow<'_>]) -> String {
    let width = rows.iter().map(|r| r.names.len()).max().unwrap_or(0);
    let mut out = String::new();
    let _ = writeln!(out, "| Run |{}", " |".repeat(width));
    let _ = writeln!(out, "|---|{}", "---|".repeat(width));
    for row in rows {
        let names: Vec<String> = row.names.iter().map(|n| format!(" {n} |")).collect();
        let _ = writeln!(out, "| {} |{}{}", row.label, names.concat(), " |".repeat(width - row.names.len()));
        let cells: Vec<String> = row
            .weights
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let text = format_weight(*w);
                if row.selected.contains(&i) {
                    format!(" **{text}** |")
                } else {
                    format!(" {text} |")
                }
            })
            .collect();
        let _ = writeln!(out, "| |{}{}", cells.concat(), " |".repeat(width - row.weights.len()));
    }
    out
}

/// Markdown summary of a training run. Top-`k` features are bold.
pub fn render_run_summary(report: &TrainReport, k: Option<usize>) -> Result<String> {
    let mut out = String::new();
    let _ = writeln!(out, "# Run summary: {} / {}\n", report.env, report.algorithm);
    let _ = writeln!(out, "- seed: {}", report.seed);
    let _ = writeln!(out, "- iterations: {}", report.iterations);
    let _ = writeln!(out, "- environment steps: {}", report.env_steps);
    let _ = writeln!(out, "- dual world: {}", report.dual);
    if let Some(p) = report.plateau {
        let _ = writeln!(
            out,
            "- return plateau: {}",
            if p.found {
                format!("iteration {}", p.index)
            } else {
                "not reached".to_string()
            }
        );
    }
    if let (Some(first), Some(last)) = (report.returns.first(), report.returns.last()) {
        let _ = writeln!(out, "- mean return: first iteration {first:.2}, last iteration {last:.2}");
    }
    if !report.weight_history.is_empty() {
        let ranking = rank_report(report)?;
        let k = k.unwrap_or_else(|| ranking.entries.iter().filter(|e| e.mean_weight > 0.5).count().max(1));
        let selected = top_k(&ranking, k.min(ranking.len()))?;
        let weights = ranking.means_by_index();
        let label = format!("D-AFS/{}", report.algorithm.to_string().to_uppercase());
        let _ = writeln!(
            out,
            "\n## Feature weights\n\nMean attention weight over the last {} of {} iterations. Bold: Top-{k}.\n",
            ranking.window, ranking.history_len
        );
        out.push_str(&weight_table(&[WeightRow {
            label: &label,
            names: &report.feature_names,
            weights: &weights,
            selected: &selected,
        }]));
        let _ = writeln!(out, "\n## Ranking\n\n| Rank | Index | Feature | Mean weight |\n|---|---|---|---|");
        for r in ranking.to_records(&report.feature_names) {
            let _ = writeln!(out, "| {} | {} | {} | {} |", r.rank, r.index, r.name, format_weight(r.mean_weight));
        }
    }
    Ok(out)
}

/// Markdown rendering of a comparison.
pub fn render_comparison(report: &ComparisonReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# Subset comparison: {} / {}\n", report.env, report.algorithm);
    let _ = writeln!(out, "- config hash: `{}`", report.config_hash);
    let _ = writeln!(out, "- training seeds: {:?}\n", report.seeds);
    let _ = writeln!(out, "| Subset | k | Trial | Indices | Features | Mean return | Std | Episodes | Failed seeds |");
    let _ = writeln!(out, "|---|---|---|---|---|---|---|---|---|");
    for e in &report.entries {
        let ev = &e.evaluation;
        let best = report
            .best_random
            .iter()
            .any(|b| e.kind == SubsetKind::Random && b.k == e.k && Some(b.trial) == e.trial);
        let _ = writeln!(
            out,
            "| {:?}{} | {} | {} | {:?} | {} | {:.2} | {:.2} | {} | {} |",
            e.kind,
            if best { " (best of n)" } else { "" },
            e.k,
            e.trial.map(|t| t.to_string()).unwrap_or_default(),
            ev.indices,
            ev.names.join(", "),
            ev.mean,
            ev.std,
            ev.episodes,
            ev.failed.len()
        );
    }
    out
}

/// Writes `ranking.json` for `k` and returns the Top-`k` records.
pub fn write_ranking(dir: &Path, report: &TrainReport, k: usize) -> Result<Vec<RankRecord>> {
    let ranking = rank_report(report)?;
    top_k(&ranking, k)?;
    let records: Vec<RankRecord> = ranking.to_records(&report.feature_names).into_iter().take(k).collect();
    let path = dir.join("ranking.json");
    std::fs::write(&path, serde_json::to_string_pretty(&records)?).map_err(|e| Error::io(&path, e))?;
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_subsets_are_reproducible_and_distinct() {
        let a = random_subset(30, 5, 7, 0).unwrap();
        assert_eq!(a, random_subset(30, 5, 7, 0).unwrap());
        assert_ne!(a, random_subset(30, 5, 7, 1).unwrap());
        let mut dedup = a.clone();
        dedup.dedup();
        assert_eq!(dedup.len(), 5);
        assert!(random_subset(3, 4, 0, 0).is_err());
    }

    #[test]
    fn hash_tracks_config_changes() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.train.seed = 9;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn weight_formatting() {
        assert_eq!(format_weight(0.968), "0.968");
        assert_eq!(format_weight(1.27e-4), "1.27e-4");
    }

    #[test]
    fn table_marks_selected_in_bold() {
        let names: Vec<String> = ["theta", "omega", "Ran"].iter().map(|s| s.to_string()).collect();
        let table = weight_table(&[WeightRow {
            label: "D-AFS/DQN",
            names: &names,
            weights: &[0.516, 0.968, 2.32e-5],
            selected: &[1],
        }]);
        assert!(table.contains("**0.968**"));
        assert!(table.contains(" 0.516 |"));
        assert!(table.contains("2.32e-5"));
        assert!(table.contains("| D-AFS/DQN | theta | omega | Ran |"));
    }

    #[test]
    fn validation_names_the_field() {
        let mut cfg = ExperimentConfig::default();
        cfg.top_k = vec![9];
        assert!(cfg.validate(8).unwrap_err().to_string().contains("top_k"));
        cfg.top_k = vec![2];
        cfg.eval.episodes = 0;
        assert!(cfg.validate(8).unwrap_err().to_string().contains("eval.episodes"));
    }
}
