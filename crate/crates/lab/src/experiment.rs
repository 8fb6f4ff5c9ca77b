//! Seeded replication of one agent on one environment.
//!
//! Output layout under the configured directory:
//!
//! - `seed_<n>.csv`: `t, cumulative_reward, regret, episode_index, pseudo_regret`
//!   at every checkpoint.
//! - `seed_<n>.episodes.jsonl`: one episode log per line.
//! - `summary.json`: per-checkpoint mean and standard deviation across seeds,
//!   episode counts and diagnostic tallies.
//!
//! After writing, the summary statistics are recomputed from the CSV files
//! and compared bit for bit.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use regal_core::agents::{
    episode_bound, episode_bound_holds, run_agent, visit_ratio_bound, visit_ratio_sum, AgentConfig, AgentKind,
    RunResult,
};
use regal_core::mdp::{solve_gain_bias, DEFAULT_THETA};
use regal_core::Mdp;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig, DEFAULT_OPTIMISM_TOL};

pub const WORKERS_VAR: &str = "REGAL_WORKERS";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{WORKERS_VAR} must be a positive integer, got {0:?}")]
    Workers(String),
    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
    #[error("true model: {0}")]
    Truth(regal_core::Error),
    #[error("seed {seed}: {source}")]
    Run { seed: u64, source: regal_core::Error },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("re-aggregation mismatch: {0}")]
    Reaggregation(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io { path: path.to_path_buf(), source }
}

/// Worker count from `REGAL_WORKERS`, else the number of processors.
pub fn worker_count() -> Result<usize, ExperimentError> {
    match std::env::var(WORKERS_VAR) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(ExperimentError::Workers(v)),
        },
        Err(_) => Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub runs: usize,
    pub aborted_runs: usize,
    pub episodes_total: usize,
    pub max_episodes: usize,
    /// `SA log2(8T/SA)`; `None` when `T < SA`.
    pub episode_bound: Option<f64>,
    pub episode_bound_violations: usize,
    /// Episodes whose confidence set contained the truth.
    pub good_episodes: usize,
    pub bad_episodes: usize,
    pub membership_rate: f64,
    /// Episodes on which `gain >= optimal_gain - optimism_tol` was required.
    pub optimism_checked: usize,
    pub optimism_violations: usize,
    pub optimism_tol: f64,
    pub visit_ratio_max: f64,
    pub visit_ratio_bound: f64,
    pub visit_ratio_violations: usize,
    pub cap_violations: usize,
}

impl Diagnostics {
    pub fn passed(&self) -> bool {
        self.aborted_runs == 0
            && self.episode_bound_violations == 0
            && self.optimism_violations == 0
            && self.visit_ratio_violations == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub environment: String,
    pub agent: AgentConfig,
    pub num_states: usize,
    pub num_actions: usize,
    pub optimal_gain: f64,
    pub optimal_span: f64,
    pub seeds: Vec<u64>,
    pub checkpoints: Vec<u64>,
    pub mean_regret: Vec<f64>,
    pub std_regret: Vec<f64>,
    pub mean_pseudo_regret: Vec<f64>,
    pub std_pseudo_regret: Vec<f64>,
    /// Episode count per seed, in seed order.
    pub episodes: Vec<usize>,
    pub diagnostics: Diagnostics,
}

impl ExperimentSummary {
    pub fn passed(&self) -> bool {
        self.diagnostics.passed()
    }

    /// Mean regret at checkpoint `t`, if `t` is a checkpoint.
    pub fn mean_regret_at(&self, t: u64) -> Option<f64> {
        self.checkpoints.iter().position(|&c| c == t).map(|i| self.mean_regret[i])
    }

    pub fn mean_pseudo_regret_at(&self, t: u64) -> Option<f64> {
        self.checkpoints.iter().position(|&c| c == t).map(|i| self.mean_pseudo_regret[i])
    }
}

/// Runs plus their summary, before anything is written.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub summary: ExperimentSummary,
    pub runs: Vec<RunResult>,
}

/// Mean and sample standard deviation, accumulated in the given order.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

fn column_stats(per_seed: &[Vec<f64>], len: usize) -> (Vec<f64>, Vec<f64>) {
    (0..len)
        .map(|i| {
            let column: Vec<f64> = per_seed.iter().map(|row| row[i]).collect();
            mean_std(&column)
        })
        .unzip()
}

pub fn diagnose(runs: &[RunResult], env: &Mdp, agent: &AgentConfig, optimal_span: f64, optimism_tol: f64) -> Diagnostics {
    let (ns, na) = (env.num_states(), env.num_actions());
    let horizon = agent.horizon;
    let bound_applies = horizon >= (ns * na) as u64;
    let check_optimism = match agent.kind {
        AgentKind::RegalC => agent.h.is_some_and(|h| h >= optimal_span - 1e-9),
        AgentKind::Ucrl2Baseline => true,
        AgentKind::RegalD => false,
    };
    let mut d = Diagnostics {
        runs: runs.len(),
        episode_bound: bound_applies.then(|| episode_bound(ns, na, horizon)),
        optimism_tol,
        visit_ratio_bound: visit_ratio_bound(ns, na, horizon),
        ..Diagnostics::default()
    };
    for run in runs {
        let m = run.num_episodes();
        d.episodes_total += m;
        d.max_episodes = d.max_episodes.max(m);
        if run.aborted.is_some() {
            d.aborted_runs += 1;
        }
        if bound_applies && !episode_bound_holds(m, ns, na, horizon) {
            d.episode_bound_violations += 1;
        }
        let ratio = visit_ratio_sum(&run.episodes);
        d.visit_ratio_max = d.visit_ratio_max.max(ratio);
        if run.aborted.is_none() && ratio > d.visit_ratio_bound {
            d.visit_ratio_violations += 1;
        }
        for e in &run.episodes {
            if e.truth_in_set {
                d.good_episodes += 1;
                if check_optimism {
                    d.optimism_checked += 1;
                    if e.gain < run.optimal_gain - optimism_tol {
                        d.optimism_violations += 1;
                    }
                }
            } else {
                d.bad_episodes += 1;
            }
            if e.cap_violated {
                d.cap_violations += 1;
            }
        }
    }
    let total = d.good_episodes + d.bad_episodes;
    d.membership_rate = if total == 0 { 1.0 } else { d.good_episodes as f64 / total as f64 };
    d
}

/// Runs every seed on a pool of `workers` threads and summarizes, in seed
/// order regardless of scheduling.
pub fn execute(cfg: &ExperimentConfig, workers: usize) -> Result<Experiment, ExperimentError> {
    cfg.validate()?;
    let env = cfg.build_env()?;
    let truth = solve_gain_bias(&env, 1e-10, DEFAULT_THETA).map_err(ExperimentError::Truth)?;
    let agent = cfg.agent.resolve(&env, truth.span())?;
    let checkpoints = cfg.checkpoints();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build()?;
    let results: Vec<Result<RunResult, ExperimentError>> = pool.install(|| {
        cfg.seeds
            .par_iter()
            .map(|&seed| run_agent(&env, &agent.with_seed(seed)).map_err(|source| ExperimentError::Run { seed, source }))
            .collect()
    });
    let runs = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let regret: Vec<Vec<f64>> = runs.iter().map(|r| checkpoints.iter().map(|&t| checkpoint_regret(r, t)).collect()).collect();
    let pseudo: Vec<Vec<f64>> =
        runs.iter().map(|r| checkpoints.iter().map(|&t| checkpoint_pseudo(r, t)).collect()).collect();
    let (mean_regret, std_regret) = column_stats(&regret, checkpoints.len());
    let (mean_pseudo_regret, std_pseudo_regret) = column_stats(&pseudo, checkpoints.len());
    let optimism_tol = cfg.optimism_tol.unwrap_or(DEFAULT_OPTIMISM_TOL);
    let diagnostics = diagnose(&runs, &env, &agent, truth.span(), optimism_tol);
    let summary = ExperimentSummary {
        environment: cfg.environment.label(),
        agent,
        num_states: env.num_states(),
        num_actions: env.num_actions(),
        optimal_gain: truth.gain,
        optimal_span: truth.span(),
        seeds: cfg.seeds.clone(),
        checkpoints,
        mean_regret,
        std_regret,
        mean_pseudo_regret,
        std_pseudo_regret,
        episodes: runs.iter().map(RunResult::num_episodes).collect(),
        diagnostics,
    };
    Ok(Experiment { summary, runs })
}

// An aborted run stops early; its reward stays frozen at the last step taken.
fn clamp(run: &RunResult, t: u64) -> u64 {
    t.min(run.steps())
}

fn checkpoint_regret(run: &RunResult, t: u64) -> f64 {
    let s = clamp(run, t);
    run.optimal_gain * t as f64 - run.cumulative_reward[s as usize]
}

fn checkpoint_pseudo(run: &RunResult, t: u64) -> f64 {
    run.pseudo_regret_at(clamp(run, t))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub t: u64,
    pub cumulative_reward: f64,
    pub regret: f64,
    pub episode_index: usize,
    pub pseudo_regret: f64,
}

pub fn seed_csv_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("seed_{seed}.csv"))
}

pub fn seed_episodes_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("seed_{seed}.episodes.jsonl"))
}

pub fn csv_rows(run: &RunResult, checkpoints: &[u64]) -> Vec<CsvRow> {
    checkpoints
        .iter()
        .map(|&t| CsvRow {
            t,
            cumulative_reward: run.cumulative_reward[clamp(run, t) as usize],
            regret: checkpoint_regret(run, t),
            episode_index: run.episode_at(clamp(run, t)),
            pseudo_regret: checkpoint_pseudo(run, t),
        })
        .collect()
}

pub fn write_outputs(exp: &Experiment, dir: &Path) -> Result<(), ExperimentError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for run in &exp.runs {
        let path = seed_csv_path(dir, run.seed);
        let mut w = csv::Writer::from_path(&path).map_err(|source| ExperimentError::Csv { path: path.clone(), source })?;
        for row in csv_rows(run, &exp.summary.checkpoints) {
            w.serialize(row).map_err(|source| ExperimentError::Csv { path: path.clone(), source })?;
        }
        w.flush().map_err(io_err(&path))?;

        let path = seed_episodes_path(dir, run.seed);
        let file = fs::File::create(&path).map_err(io_err(&path))?;
        let mut w = BufWriter::new(file);
        for e in &run.episodes {
            serde_json::to_writer(&mut w, e).map_err(|source| ExperimentError::Json { path: path.clone(), source })?;
            w.write_all(b"\n").map_err(io_err(&path))?;
        }
        w.flush().map_err(io_err(&path))?;
    }
    let path = dir.join(SUMMARY_FILE);
    let mut text =
        serde_json::to_string_pretty(&exp.summary).map_err(|source| ExperimentError::Json { path: path.clone(), source })?;
    text.push('\n');
    fs::write(&path, text).map_err(io_err(&path))
}

pub fn read_summary(path: &Path) -> Result<ExperimentSummary, ExperimentError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| ExperimentError::Json { path: path.to_path_buf(), source })
}

/// Recomputes the per-checkpoint statistics of `summary` from the per-seed
/// CSV files in `dir` and requires bit-for-bit agreement.
pub fn reaggregate(dir: &Path, summary: &ExperimentSummary) -> Result<(), ExperimentError> {
    let mut regret = Vec::with_capacity(summary.seeds.len());
    let mut pseudo = Vec::with_capacity(summary.seeds.len());
    for &seed in &summary.seeds {
        let path = seed_csv_path(dir, seed);
        let mut r = csv::Reader::from_path(&path).map_err(|source| ExperimentError::Csv { path: path.clone(), source })?;
        let rows: Vec<CsvRow> = r
            .deserialize()
            .collect::<Result<_, _>>()
            .map_err(|source| ExperimentError::Csv { path: path.clone(), source })?;
        let ts: Vec<u64> = rows.iter().map(|row| row.t).collect();
        if ts != summary.checkpoints {
            return Err(ExperimentError::Reaggregation(format!("{} has different checkpoints", path.display())));
        }
        regret.push(rows.iter().map(|row| row.regret).collect::<Vec<_>>());
        pseudo.push(rows.iter().map(|row| row.pseudo_regret).collect::<Vec<_>>());
    }
    let n = summary.checkpoints.len();
    let checks = [
        ("mean_regret", column_stats(&regret, n).0, &summary.mean_regret),
        ("std_regret", column_stats(&regret, n).1, &summary.std_regret),
        ("mean_pseudo_regret", column_stats(&pseudo, n).0, &summary.mean_pseudo_regret),
        ("std_pseudo_regret", column_stats(&pseudo, n).1, &summary.std_pseudo_regret),
    ];
    for (name, recomputed, stored) in checks {
        if let Some(i) = (0..n).find(|&i| recomputed[i].to_bits() != stored[i].to_bits()) {
            return Err(ExperimentError::Reaggregation(format!(
                "{name} at t = {}: stored {} but CSVs give {}",
                summary.checkpoints[i], stored[i], recomputed[i]
            )));
        }
    }
    Ok(())
}

/// Runs, writes and re-aggregates an experiment.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentSummary, ExperimentError> {
    let exp = execute(cfg, worker_count()?)?;
    let dir = cfg.output_path();
    write_outputs(&exp, &dir)?;
    let stored = read_summary(&dir.join(SUMMARY_FILE))?;
    if stored != exp.summary {
        return Err(ExperimentError::Reaggregation("summary.json does not read back identically".into()));
    }
    reaggregate(&dir, &stored)?;
    Ok(exp.summary)
}
