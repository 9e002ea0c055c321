//! Command-line entry point: run experiments, render plots, inspect
//! checkpoints.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;

use dirp_core::approx::Checkpoint;
use dirp_core::harness::{
    emit_plot, run_experiment, ExperimentConfig, PlotKind, RunSummary, Scheme,
};
use dirp_core::mdp::RewardKind;
use dirp_core::td3::Td3Agent;
use dirp_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "dirp",
    version,
    about = "Multi-agent inter-slice RAN resource partitioning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scheme under one or more seeds.
    Run {
        /// Experiment config (TOML). Flags below override its fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        scheme: Option<Scheme>,
        #[arg(long)]
        reward: Option<RewardKind>,
        /// Repeatable; replaces the configured seed list.
        #[arg(long)]
        seed: Vec<u64>,
        /// Scenario used when no config is given: `default`, `small` or a path.
        #[arg(long, default_value = "small")]
        scenario: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render an SVG figure from one or more `summary.json` files.
    Plot {
        #[arg(long)]
        kind: PlotKind,
        #[arg(long = "in", required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the architecture and checksums of an agent directory or a
    /// single network checkpoint.
    InspectCheckpoint { path: PathBuf },
}

fn build_config(
    config: Option<&Path>,
    scheme: Option<Scheme>,
    reward: Option<RewardKind>,
    seeds: Vec<u64>,
    scenario: String,
    out: Option<PathBuf>,
) -> Result<(ExperimentConfig, Option<PathBuf>)> {
    let (mut cfg, base) = match config {
        Some(path) => (
            ExperimentConfig::load(path)?,
            path.parent().map(Path::to_path_buf),
        ),
        None => {
            let scheme = scheme
                .ok_or_else(|| Error::Config("--scheme is required without --config".into()))?;
            let reward = reward
                .ok_or_else(|| Error::Config("--reward is required without --config".into()))?;
            (ExperimentConfig::new(&scenario, scheme, reward), None)
        }
    };
    if let Some(s) = scheme {
        cfg.scheme = s;
    }
    if let Some(r) = reward {
        cfg.reward = r;
    }
    if !seeds.is_empty() {
        cfg.seeds = seeds;
    }
    // An explicit --out is taken relative to the working directory.
    let base = match out {
        Some(o) => {
            cfg.output = o;
            None
        }
        None => base,
    };
    cfg.validate()?;
    Ok((cfg, base))
}

fn inspect(path: &Path) -> Result<()> {
    if path.is_dir() {
        let agent = Td3Agent::load(path)?;
        println!("agent: {}", path.display());
        println!(
            "  obs_dim {}  action_dim {}  groups {}",
            agent.arch.obs_dim, agent.arch.action_dim, agent.arch.groups
        );
        println!(
            "  train_steps {}  actor_updates {}",
            agent.train_steps, agent.actor_updates
        );
        for (name, net) in [
            ("actor", &agent.actor),
            ("critic1", &agent.critic1),
            ("critic2", &agent.critic2),
            ("actor_target", &agent.actor_target),
            ("critic1_target", &agent.critic1_target),
            ("critic2_target", &agent.critic2_target),
        ] {
            println!(
                "  {name:<15} {:?}  params {}  sha256 {}",
                net.sizes(),
                net.num_params(),
                net.checksum()
            );
        }
    } else {
        let ckpt = Checkpoint::load(path)?;
        let (net, opt) = ckpt.restore()?;
        println!("network: {}", path.display());
        println!(
            "  format {}  sizes {:?}  params {}",
            ckpt.format,
            net.sizes(),
            net.num_params()
        );
        println!("  sha256 {}", net.checksum());
        match opt {
            Some(o) => println!("  optimizer: adam step {}  lr {}", o.step, o.config.lr),
            None => println!("  optimizer: none"),
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            scheme,
            reward,
            seed,
            scenario,
            out,
        } => {
            let (cfg, base) = build_config(config.as_deref(), scheme, reward, seed, scenario, out)?;
            let summary = run_experiment(&cfg, base.as_deref())?;
            info!("wrote results for {} seeds", summary.seeds.len());
            println!(
                "{} ({}): mean eval reward {:.4}  min-slice throughput sat {:.4}  min-slice delay sat {:.4}",
                summary.scheme,
                summary.reward,
                summary.mean_eval_reward,
                summary.min_slice_throughput_sat,
                summary.min_slice_delay_sat
            );
        }
        Command::Plot { kind, inputs, out } => {
            let summaries = inputs
                .iter()
                .map(|p| RunSummary::load(p))
                .collect::<Result<Vec<_>>>()?;
            let svg = emit_plot(&summaries, kind)?;
            std::fs::write(&out, svg).map_err(|e| Error::Io {
                path: out.clone(),
                source: e,
            })?;
            println!("wrote {}", out.display());
        }
        Command::InspectCheckpoint { path } => inspect(&path)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
