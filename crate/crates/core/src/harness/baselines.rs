use crate::agent::{
    mean_critic_loss, run_dirp, run_episode, CellAgent, Controller, Learner, MessageMode,
    MetricsLog, Outcome, Phase, PhaseSchedule, Stage, StepContext,
};
use crate::env::{Env, KpiReport};
use crate::error::{check_dim, Result};
use crate::mdp::{build_global_state, demand_proportional_action, PartitionAction, RewardKind};
use crate::rng::{stream_rng, Stream};
use crate::td3::{Architecture, Td3Agent, Td3Hyper, Transition};

/// Traffic-proportional partition `a_n = D_n / sum_m D_m` from a report.
pub fn bl_heur_action(kpi: &KpiReport, cell: usize) -> PartitionAction {
    demand_proportional_action(kpi, cell)
}

/// Heuristic baseline: no learning.
pub struct HeuristicController;

impl Controller for HeuristicController {
    fn act(&mut self, ctx: &StepContext<'_>) -> Result<Vec<PartitionAction>> {
        Ok(ctx.heuristic())
    }

    fn learn(
        &mut self,
        _: &StepContext<'_>,
        _: &[PartitionAction],
        _: &Outcome<'_>,
    ) -> Result<Option<f64>> {
        Ok(None)
    }
}

pub fn run_bl_heur(
    env: &mut Env,
    schedule: &PhaseSchedule,
    reward: RewardKind,
) -> Result<MetricsLog> {
    let mut log = MetricsLog::new("bl-heur", 0, env.num_cells(), env.num_slices());
    run_episode(
        env,
        &mut HeuristicController,
        schedule,
        reward,
        Stage::Main,
        &mut log,
    )?;
    Ok(log)
}

/// Coordination-free distributed baseline: local states only.
pub fn run_bl_dist(
    env: &mut Env,
    agents: &mut [CellAgent],
    schedule: &PhaseSchedule,
    reward: RewardKind,
) -> Result<MetricsLog> {
    run_dirp(env, agents, schedule, reward, MessageMode::Absent)
}

/// Single agent observing the global state and emitting every cell's
/// partition through a grouped softmax, trained on the global reward.
pub struct CentralController {
    pub learner: Learner,
    obs: Vec<f64>,
}

impl CentralController {
    pub fn new(env: &Env, hyper: Td3Hyper, capacity: usize, seed: u64) -> Result<Self> {
        let (k, n) = (env.num_cells(), env.num_slices());
        let arch = Architecture::central(k * crate::mdp::LocalState::dim(n), k, n);
        let td3 = Td3Agent::new(arch, hyper, &mut stream_rng(seed, Stream::CentralInit))?;
        Ok(CentralController {
            learner: Learner::new(td3, capacity, stream_rng(seed, Stream::Central))?,
            obs: Vec::new(),
        })
    }
}

impl Controller for CentralController {
    fn act(&mut self, ctx: &StepContext<'_>) -> Result<Vec<PartitionAction>> {
        let n = ctx.env.num_slices();
        self.obs = build_global_state(ctx.prev, ctx.env.slices());
        let hint: Vec<f64> = ctx
            .heuristic()
            .iter()
            .flat_map(|a| a.as_slice().iter().copied())
            .collect();
        let a = self.learner.select_action(
            &self.obs,
            ctx.phase,
            ctx.step_in_phase,
            ctx.schedule,
            &hint,
        )?;
        check_dim("central action", ctx.env.num_cells() * n, a.len())?;
        Ok(a.chunks(n)
            .map(|g| PartitionAction::normalized(g.to_vec()))
            .collect())
    }

    fn learn(
        &mut self,
        ctx: &StepContext<'_>,
        actions: &[PartitionAction],
        outcome: &Outcome<'_>,
    ) -> Result<Option<f64>> {
        if ctx.phase != Phase::Eval {
            self.learner.observe_and_store(Transition {
                state: std::mem::take(&mut self.obs),
                action: actions
                    .iter()
                    .flat_map(|a| a.as_slice().iter().copied())
                    .collect(),
                reward: outcome.global_reward,
                next_state: build_global_state(outcome.report, ctx.env.slices()),
                t: outcome.report.t,
                cell: 0,
            })?;
        }
        if ctx.phase == Phase::Train {
            self.learner.decay_epsilon();
        }
        let stats = self.learner.maybe_train(ctx.phase)?;
        Ok(mean_critic_loss(stats.iter()))
    }
}

pub fn run_bl_cen(
    env: &mut Env,
    controller: &mut CentralController,
    schedule: &PhaseSchedule,
    reward: RewardKind,
) -> Result<MetricsLog> {
    let mut log = MetricsLog::new("bl-cen", 0, env.num_cells(), env.num_slices());
    run_episode(env, controller, schedule, reward, Stage::Main, &mut log)?;
    Ok(log)
}
