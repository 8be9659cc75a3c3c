//! `dafs`: train dual-world agents, rank features, re-evaluate subsets and
//! render reports.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use dafs_core::agents::Algorithm;
use dafs_core::attention::save_weight_history_csv;
use dafs_core::selection::{
    compare_from_run, evaluate_subset, render_comparison, render_run_summary, write_ranking, ExperimentConfig,
};
use dafs_core::trainer::{load_run, save_run, train_agent, write_returns_csv, TrainConfig};

#[derive(Parser)]
#[command(name = "dafs", version, about = "Dual-world attentive feature selection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a dual-world agent and write its run directory.
    Train {
        /// Training config, or an experiment config with a `train` section.
        #[arg(long)]
        config: PathBuf,
        /// Run directory; defaults to `<output>/dafs` for experiment
        /// configs and `runs/<env>-<algo>-seed<seed>` otherwise.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the configured seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print the Top-K features of a trained run and write `ranking.json`.
    Rank {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        k: usize,
    },
    /// Train plain agents on a feature subset and report greedy returns.
    Eval {
        #[arg(long)]
        env: String,
        /// Comma-separated feature indices.
        #[arg(long, value_delimiter = ',', required = true)]
        features: Vec<usize>,
        #[arg(long, default_value = "ppo")]
        algo: Algorithm,
        /// Comma-separated training seeds.
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
        /// Base training config supplying the budget and hyperparameters.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        /// Write the evaluation as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare Top-K, full-set and random subsets for an experiment.
    Compare {
        #[arg(long)]
        config: PathBuf,
    },
    /// Write a markdown summary and plot-ready CSVs for a run.
    Report {
        #[arg(long)]
        run: PathBuf,
        /// Features shown in bold; those with mean weight above 0.5 by default.
        #[arg(long)]
        k: Option<usize>,
        /// Output directory; the run directory by default.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum LoadedConfig {
    Train(TrainConfig),
    Experiment(ExperimentConfig),
}

fn read_config(path: &Path) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("{} is not valid JSON", path.display()))?;
    let parsed = if value.get("train").is_some() {
        serde_json::from_value(value).map(LoadedConfig::Experiment)
    } else {
        serde_json::from_value(value).map(LoadedConfig::Train)
    };
    parsed.with_context(|| format!("invalid config {}", path.display()))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn train(config: &Path, out: Option<PathBuf>, seed: Option<u64>) -> Result<()> {
    let (mut cfg, experiment) = match read_config(config)? {
        LoadedConfig::Train(cfg) => (cfg, None),
        LoadedConfig::Experiment(exp) => (exp.train.clone(), Some(exp)),
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let dir = out.unwrap_or_else(|| match &experiment {
        Some(exp) => exp.run_dir(),
        None => PathBuf::from("runs").join(format!("{}-{}-seed{}", cfg.env, cfg.algorithm, cfg.seed)),
    });
    let (report, agent, _) = train_agent(&cfg)?;
    save_run(&dir, &cfg, &report, &agent)?;
    if let Some(mut exp) = experiment {
        exp.train = cfg;
        write_json(&dir.join("experiment.json"), &exp)?;
    }
    println!(
        "trained {} / {} for {} iterations ({} steps, {:.1}s); run written to {}",
        report.env,
        report.algorithm,
        report.iterations,
        report.env_steps,
        report.wall_clock_secs,
        dir.display()
    );
    Ok(())
}

fn rank(run: &Path, k: usize) -> Result<()> {
    let artifacts = load_run(run)?;
    let records = write_ranking(run, &artifacts.report, k)?;
    println!("{:>4}  {:>5}  {:<16} {}", "rank", "index", "feature", "mean weight");
    for r in &records {
        println!("{:>4}  {:>5}  {:<16} {:.6}", r.rank, r.index, r.name, r.mean_weight);
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn eval(
    env: String,
    features: Vec<usize>,
    algo: Algorithm,
    seeds: Vec<u64>,
    config: Option<PathBuf>,
    iterations: Option<usize>,
    steps: Option<usize>,
    episodes: usize,
    out: Option<PathBuf>,
) -> Result<()> {
    let mut base = match config {
        Some(path) => match read_config(&path)? {
            LoadedConfig::Train(cfg) => cfg,
            LoadedConfig::Experiment(exp) => exp.train,
        },
        None => TrainConfig::default(),
    };
    base.env = env;
    base.algorithm = algo;
    if let Some(n) = iterations {
        base.iterations = n;
    }
    if let Some(n) = steps {
        base.steps_per_iteration = n;
    }
    let result = evaluate_subset(&base, &features, &seeds, episodes)?;
    println!("subset {:?} ({})", result.indices, result.names.join(", "));
    for s in &result.per_seed {
        println!("  seed {:>4}: mean return {:.2}", s.seed, s.mean);
    }
    for f in &result.failed {
        println!("  seed {:>4}: FAILED ({})", f.seed, f.error);
    }
    println!("mean return {:.2} ± {:.2} over {} episodes", result.mean, result.std, result.episodes);
    if let Some(path) = out {
        write_json(&path, &result)?;
    }
    if result.per_seed.is_empty() {
        bail!("every training seed failed");
    }
    Ok(())
}

fn compare(config: &Path) -> Result<()> {
    let exp = match read_config(config)? {
        LoadedConfig::Experiment(exp) => exp,
        LoadedConfig::Train(_) => bail!("{} has no `train` section; compare needs an experiment config", config.display()),
    };
    let report = compare_from_run(&exp)?;
    std::fs::create_dir_all(&exp.output).with_context(|| format!("creating {}", exp.output.display()))?;
    write_json(&exp.output.join("comparison.json"), &report)?;
    let markdown = render_comparison(&report);
    std::fs::write(exp.output.join("comparison.md"), &markdown)
        .with_context(|| format!("writing {}", exp.output.join("comparison.md").display()))?;
    print!("{markdown}");
    Ok(())
}

fn report(run: &Path, k: Option<usize>, out: Option<PathBuf>) -> Result<()> {
    let artifacts = load_run(run)?;
    let report = &artifacts.report;
    let dir = out.unwrap_or_else(|| run.to_path_buf());
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let summary = render_run_summary(report, k)?;
    std::fs::write(dir.join("summary.md"), &summary).with_context(|| format!("writing {}", dir.join("summary.md").display()))?;
    save_weight_history_csv(&dir.join("weights.csv"), &report.weight_history, report.feature_names.len())?;
    let path = dir.join("returns.csv");
    let file = std::fs::File::create(&path).with_context(|| format!("writing {}", path.display()))?;
    write_returns_csv(std::io::BufWriter::new(file), report)?;
    print!("{summary}");
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, out, seed } => train(&config, out, seed),
        Command::Rank { run, k } => rank(&run, k),
        Command::Eval {
            env,
            features,
            algo,
            seeds,
            config,
            iterations,
            steps,
            episodes,
            out,
        } => eval(env, features, algo, seeds, config, iterations, steps, episodes, out),
        Command::Compare { config } => compare(&config),
        Command::Report { run, k, out } => report(&run, k, out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
