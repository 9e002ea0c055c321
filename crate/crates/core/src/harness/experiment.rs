//! Scheme dispatch, per-run summaries and experiment orchestration.

use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::baselines::{run_bl_cen, run_bl_dist, run_bl_heur, CentralController};
use super::config::{ExperimentConfig, Scheme};
use crate::agent::{build_cell_agents, run_dirp, MessageMode, MetricsLog, StepMetrics};
use crate::env::{Env, Scenario};
use crate::error::{Error, Result};
use crate::mdp::RewardKind;
use crate::td3::Td3Agent;
use crate::transfer::{run_tl_with_plan, TlSetup};

/// Output of one scheme under one seed.
pub struct SeedRun {
    pub log: MetricsLog,
    /// Trained networks by name (e.g. `cell3`, `central`, `generalist`).
    pub agents: Vec<(String, Td3Agent)>,
}

/// Runs `config.scheme` once with `seed`.
pub fn run_scheme(config: &ExperimentConfig, scenario: &Scenario, seed: u64) -> Result<SeedRun> {
    let mut env = Env::from_scenario(scenario, seed)?;
    let reward = config.reward;
    let capacity = config.replay_capacity;
    let mut agents = Vec::new();
    let mut log = match config.scheme {
        Scheme::BlHeur => run_bl_heur(&mut env, &config.schedule, reward)?,
        Scheme::BlCen => {
            let mut ctrl = CentralController::new(&env, config.td3, capacity, seed)?;
            let log = run_bl_cen(&mut env, &mut ctrl, &config.central_schedule(), reward)?;
            agents.push(("central".to_string(), ctrl.learner.td3));
            log
        }
        Scheme::Dirp | Scheme::BlDist => {
            let mode = if config.scheme == Scheme::Dirp {
                MessageMode::Neighbors
            } else {
                MessageMode::Absent
            };
            let mut cells = build_cell_agents(&env, config.td3, capacity, seed, mode)?;
            let log = if mode == MessageMode::Absent {
                run_bl_dist(&mut env, &mut cells, &config.schedule, reward)?
            } else {
                run_dirp(&mut env, &mut cells, &config.schedule, reward, mode)?
            };
            agents.extend(
                cells
                    .into_iter()
                    .map(|a| (format!("cell{}", a.cell), a.learner.td3)),
            );
            log
        }
        scheme => {
            let transfer = scheme.transfer().expect("transfer scheme");
            let setup = TlSetup {
                generalist: config.generalist_schedule(),
                specialist: config.schedule,
                reward,
                hyper: config.td3,
                capacity,
                seed,
            };
            let mut plan = transfer.plan();
            if plan.offline_epochs > 0 {
                plan.offline_epochs = config.offline_epochs;
            }
            let run = run_tl_with_plan(&mut env, &setup, &plan)?;
            if let Some(gen) = run.generalist {
                agents.push(("generalist".to_string(), gen.td3));
            }
            agents.extend(
                run.specialists
                    .into_iter()
                    .map(|a| (format!("cell{}", a.cell), a.learner.td3)),
            );
            run.log
        }
    };
    log.scheme = config.scheme.to_string();
    log.seed = seed;
    Ok(SeedRun { log, agents })
}

/// Eval-phase satisfaction of one cell's slices over time, used for the
/// action-versus-traffic plot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellTrace {
    pub cell: usize,
    pub t: Vec<usize>,
    /// `actions[i][n]`: share of slice n at step i.
    pub actions: Vec<Vec<f64>>,
    /// Demand share of each slice at the same steps.
    pub demand_share: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub mean_eval_reward: f64,
    /// Min over slices of the eval-phase mean of `min(phi / phi*, 1)`.
    pub min_slice_throughput_sat: f64,
    /// Min over slices of the eval-phase mean of `min(d* / d, 1)`.
    pub min_slice_delay_sat: f64,
    /// Min over slices of the fraction of eval (step, cell) samples with
    /// `phi >= phi*`; an alternative to the time-mean aggregation.
    pub min_slice_throughput_satisfied: f64,
    /// Same for `d <= d*`.
    pub min_slice_delay_satisfied: f64,
    /// Per-slice eval means of the capped service level `min(phi/phi*, d*/d, 1)`.
    pub slice_level_capped: Vec<f64>,
    /// Per-slice eval means of the uncapped service level.
    pub slice_level: Vec<f64>,
    /// Global reward at every step of the run.
    pub reward_trajectory: Vec<f64>,
    /// Eval-phase throughput satisfaction samples per slice, pooled over cells.
    pub throughput_samples: Vec<Vec<f64>>,
    pub delay_samples: Vec<Vec<f64>>,
    pub trace: CellTrace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scheme: String,
    pub reward: RewardKind,
    pub seeds: Vec<u64>,
    pub mean_eval_reward: f64,
    pub min_slice_throughput_sat: f64,
    pub min_slice_delay_sat: f64,
    pub runs: Vec<SeedSummary>,
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = xs
        .into_iter()
        .fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Per-slice eval-phase mean of `f(step, index)` pooled over cells.
fn slice_means(
    log: &MetricsLog,
    eval: &[&StepMetrics],
    f: impl Fn(&StepMetrics, usize) -> f64,
) -> Vec<f64> {
    let (k, n) = (log.num_cells, log.num_slices);
    (0..n)
        .map(|j| {
            mean(
                eval.iter()
                    .flat_map(|s| (0..k).map(|c| f(s, c * n + j)).collect::<Vec<_>>()),
            )
        })
        .collect()
}

fn min_of(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Summary of one run; `trace_cell` selects the cell kept for plotting.
pub fn summarize_log(log: &MetricsLog, trace_cell: usize) -> Result<SeedSummary> {
    let eval = log.final_eval();
    if eval.is_empty() {
        return Err(Error::Contract("run has no evaluation steps".into()));
    }
    if trace_cell >= log.num_cells {
        return Err(Error::Contract(format!("no cell {trace_cell} to trace")));
    }
    let (k, n) = (log.num_cells, log.num_slices);
    let thr = slice_means(log, &eval, |s, i| s.throughput_sat[i].min(1.0));
    let delay = slice_means(log, &eval, |s, i| s.delay_sat[i].min(1.0));
    let indicator = |ok: bool| if ok { 1.0 } else { 0.0 };
    let thr_ok = slice_means(log, &eval, |s, i| indicator(s.throughput_sat[i] >= 1.0));
    let delay_ok = slice_means(log, &eval, |s, i| indicator(s.delay_sat[i] >= 1.0));
    let level = |s: &StepMetrics, i: usize| s.throughput_sat[i].min(s.delay_sat[i]);
    let samples = |f: fn(&StepMetrics, usize) -> f64| -> Vec<Vec<f64>> {
        (0..n)
            .map(|j| {
                eval.iter()
                    .flat_map(|s| (0..k).map(move |c| f(s, c * n + j)))
                    .collect()
            })
            .collect()
    };
    let range = trace_cell * n..(trace_cell + 1) * n;
    let trace = CellTrace {
        cell: trace_cell,
        t: eval.iter().map(|s| s.t).collect(),
        actions: eval
            .iter()
            .map(|s| s.actions[range.clone()].to_vec())
            .collect(),
        demand_share: eval
            .iter()
            .map(|s| {
                let d = &s.demand[range.clone()];
                let total: f64 = d.iter().sum();
                if total > 0.0 {
                    d.iter().map(|x| x / total).collect()
                } else {
                    vec![1.0 / n as f64; n]
                }
            })
            .collect(),
    };
    Ok(SeedSummary {
        seed: log.seed,
        mean_eval_reward: mean(eval.iter().map(|s| s.global_reward)),
        min_slice_throughput_sat: min_of(&thr),
        min_slice_delay_sat: min_of(&delay),
        min_slice_throughput_satisfied: min_of(&thr_ok),
        min_slice_delay_satisfied: min_of(&delay_ok),
        slice_level_capped: slice_means(log, &eval, |s, i| level(s, i).min(1.0)),
        slice_level: slice_means(log, &eval, level),
        reward_trajectory: log.global_rewards(),
        throughput_samples: samples(|s, i| s.throughput_sat[i]),
        delay_samples: samples(|s, i| s.delay_sat[i]),
        trace,
    })
}

impl RunSummary {
    pub fn from_runs(scheme: &str, reward: RewardKind, runs: Vec<SeedSummary>) -> Result<Self> {
        if runs.is_empty() {
            return Err(Error::Contract("no runs to summarize".into()));
        }
        Ok(RunSummary {
            scheme: scheme.into(),
            reward,
            seeds: runs.iter().map(|r| r.seed).collect(),
            mean_eval_reward: mean(runs.iter().map(|r| r.mean_eval_reward)),
            min_slice_throughput_sat: mean(runs.iter().map(|r| r.min_slice_throughput_sat)),
            min_slice_delay_sat: mean(runs.iter().map(|r| r.min_slice_delay_sat)),
            runs,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::parse(path, e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
    }
}

/// Runs every seed (in parallel), writes `metrics_seed<S>.csv`,
/// `checkpoints/seed<S>/<name>/` and `summary.json` under the output
/// directory, and returns the aggregated summary. Relative scenario and
/// output paths resolve against `base_dir`.
pub fn run_experiment(config: &ExperimentConfig, base_dir: Option<&Path>) -> Result<RunSummary> {
    config.validate()?;
    let scenario = Scenario::resolve(&config.scenario, base_dir)?;
    let out: PathBuf = match base_dir {
        Some(b) if config.output.is_relative() => b.join(&config.output),
        _ => config.output.clone(),
    };
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let runs = config
        .seeds
        .par_iter()
        .map(|&seed| -> Result<SeedSummary> {
            info!("running {} seed {seed}", config.scheme);
            let run = run_scheme(config, &scenario, seed)?;
            run.log
                .save_csv(&out.join(format!("metrics_seed{seed}.csv")))?;
            if config.write_checkpoints {
                for (name, agent) in &run.agents {
                    agent.save(
                        &out.join("checkpoints")
                            .join(format!("seed{seed}"))
                            .join(name),
                    )?;
                }
            }
            summarize_log(&run.log, 0)
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = RunSummary::from_runs(config.scheme.as_str(), config.reward, runs)?;
    summary.save(&out.join("summary.json"))?;
    Ok(summary)
}
