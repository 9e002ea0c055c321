//! Baselines, experiment configuration and orchestration, summaries and
//! plots.

mod baselines;
mod config;
mod experiment;
pub mod plot;

pub use baselines::{
    bl_heur_action, run_bl_cen, run_bl_dist, run_bl_heur, CentralController, HeuristicController,
};
pub use config::{ExperimentConfig, Scheme};
pub use experiment::{
    run_experiment, run_scheme, summarize_log, CellTrace, RunSummary, SeedRun, SeedSummary,
};
pub use plot::{emit_plot, PlotKind};
