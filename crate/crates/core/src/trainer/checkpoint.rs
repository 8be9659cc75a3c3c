use std::fs;
use std::io::Write;
use std::path::Path;

use super::{Agent, TrainConfig, TrainReport};
use crate::attention::save_weight_history_csv;
use crate::error::{Error, Result};
use crate::nn::SnapshotBundle;

/// Files written into a run directory.
pub const RUN_FILES: &[&str] = &["config.json", "params.json", "params.bin", "report.json", "weights.csv", "returns.csv"];

/// Everything needed to inspect or resume a finished run.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub config: TrainConfig,
    pub report: TrainReport,
    pub params: SnapshotBundle,
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// `iteration,mean_return,episodes,policy_loss,value_loss` rows.
pub fn write_returns_csv<W: Write>(out: W, report: &TrainReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iteration", "mean_return", "episodes", "policy_loss", "value_loss"])?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
    for (i, r) in report.returns.iter().enumerate() {
        let loss = report.losses.get(i).cloned().unwrap_or_default();
        w.write_record([
            i.to_string(),
            format!("{r:?}"),
            report.episodes.get(i).copied().unwrap_or(0).to_string(),
            opt(loss.policy),
            opt(loss.value),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<returns>", e))
}

/// Writes config (with every default materialised), parameters with
/// optimiser state, report, weight history and return curve.
pub fn save_run(dir: &Path, cfg: &TrainConfig, report: &TrainReport, agent: &Agent) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_json(&dir.join("config.json"), cfg)?;
    agent.snapshot().save_binary(&dir.join("params.json"), &dir.join("params.bin"))?;
    write_json(&dir.join("report.json"), report)?;
    let features = report.feature_names.len();
    save_weight_history_csv(&dir.join("weights.csv"), &report.weight_history, features)?;
    let path = dir.join("returns.csv");
    let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    write_returns_csv(std::io::BufWriter::new(file), report)
}

/// Loads a run directory written by [`save_run`]; errors name the bad file.
pub fn load_run(dir: &Path) -> Result<RunArtifacts> {
    if !dir.is_dir() {
        return Err(Error::InvalidArgument(format!(
            "{} is not a run directory (train one first with `dafs train`)",
            dir.display()
        )));
    }
    let config = read_json(&dir.join("config.json"))?;
    let report = read_json(&dir.join("report.json"))?;
    let params = SnapshotBundle::load_binary(&dir.join("params.json"), &dir.join("params.bin"))
        .map_err(|e| Error::Format(format!("{}: {e}", dir.join("params.bin").display())))?;
    Ok(RunArtifacts { config, report, params })
}
