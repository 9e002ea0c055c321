//! Per-cell learners, the phased exploration schedule, replay, and the
//! lockstep loop that drives any [`Controller`] against the environment.

mod metrics;
mod replay;
mod schedule;

pub use metrics::{MetricsLog, PhaseLabel, Stage, StepMetrics};
pub use replay::{ReplayBuffer, DEFAULT_CAPACITY};
pub use schedule::{Phase, PhaseSchedule};

use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;

use crate::env::{Env, KpiReport};
use crate::error::{check_dim, Result};
use crate::mdp::{
    build_local_state_scaled, combine_local_rewards, demand_proportional_action, extract_message,
    local_reward, satisfaction, LocalState, PartitionAction, RewardKind, StateScale,
};
use crate::rng::{stream_rng, SimRng, Stream};
use crate::td3::{Architecture, Td3Agent, Td3Hyper, TrainStats, Transition};

/// How the neighbour message enters a local observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MessageMode {
    /// Mean neighbour load per slice.
    Neighbors,
    /// Message slots present but always zero.
    Zeroed,
    /// No message slots (coordination-free agent).
    Absent,
}

impl MessageMode {
    pub fn dim(self, num_slices: usize) -> usize {
        match self {
            MessageMode::Absent => 0,
            _ => num_slices,
        }
    }
}

/// Local observation `s_k ⊕ c_k` built from a KPI report.
pub fn observation(
    report: &KpiReport,
    cell: usize,
    env: &Env,
    scale: &StateScale,
    mode: MessageMode,
) -> Vec<f64> {
    let mut obs = build_local_state_scaled(report, cell, env.slices(), scale).into_inner();
    match mode {
        MessageMode::Neighbors => {
            obs.extend(extract_message(report, cell, &env.topology().neighbors[cell]).extracted)
        }
        MessageMode::Zeroed => obs.extend(std::iter::repeat_n(0.0, env.num_slices())),
        MessageMode::Absent => {}
    }
    obs
}

/// Uniform point on each of `groups` simplexes of `width` components.
pub fn random_simplex<R: Rng + ?Sized>(groups: usize, width: usize, rng: &mut R) -> Vec<f64> {
    let mut out = Vec::with_capacity(groups * width);
    for _ in 0..groups {
        let draws: Vec<f64> = (0..width).map(|_| rng.sample::<f64, _>(Exp1)).collect();
        let total: f64 = draws.iter().sum();
        out.extend(draws.iter().map(|d| d / total));
    }
    out
}

/// A TD3 agent with its replay buffer, behaviour RNG and epsilon counter.
#[derive(Debug, Clone)]
pub struct Learner {
    pub td3: Td3Agent,
    pub buffer: ReplayBuffer,
    rng: SimRng,
    epsilon_steps: u64,
}

impl Learner {
    pub fn new(td3: Td3Agent, capacity: usize, rng: SimRng) -> Result<Self> {
        Ok(Learner {
            td3,
            buffer: ReplayBuffer::new(capacity)?,
            rng,
            epsilon_steps: 0,
        })
    }

    /// Number of epsilon decays applied so far.
    pub fn epsilon_steps(&self) -> u64 {
        self.epsilon_steps
    }

    pub fn set_epsilon_steps(&mut self, n: u64) {
        self.epsilon_steps = n;
    }

    pub fn epsilon(&self, schedule: &PhaseSchedule) -> f64 {
        schedule.epsilon(self.epsilon_steps)
    }

    pub fn decay_epsilon(&mut self) {
        self.epsilon_steps += 1;
    }

    fn oriented(&mut self, p_hint: f64, hint: &[f64]) -> Vec<f64> {
        if self.rng.random::<f64>() < p_hint {
            hint.to_vec()
        } else {
            let groups = self.td3.arch.groups;
            random_simplex(groups, self.td3.arch.action_dim / groups, &mut self.rng)
        }
    }

    /// Behaviour action for one observation. `hint` is the heuristic action
    /// in the same layout as the actor output.
    pub fn select_action(
        &mut self,
        obs: &[f64],
        phase: Phase,
        step_in_phase: usize,
        schedule: &PhaseSchedule,
        hint: &[f64],
    ) -> Result<Vec<f64>> {
        check_dim("heuristic hint", self.td3.arch.action_dim, hint.len())?;
        match phase {
            Phase::Explore => Ok(self.oriented(schedule.hint_probability(step_in_phase), hint)),
            Phase::Train => {
                if self.rng.random::<f64>() < self.epsilon(schedule) {
                    Ok(self.oriented(schedule.hint_end, hint))
                } else {
                    self.td3.act_noisy(obs, &mut self.rng)
                }
            }
            Phase::Eval => self.td3.act(obs),
        }
    }

    pub fn observe_and_store(&mut self, tr: Transition) -> Result<()> {
        let arch = &self.td3.arch;
        check_dim("transition state", arch.obs_dim, tr.state.len())?;
        check_dim("transition next state", arch.obs_dim, tr.next_state.len())?;
        check_dim("transition action", arch.action_dim, tr.action.len())?;
        if !tr.reward.is_finite() {
            return Err(crate::Error::NonFinite("transition reward"));
        }
        self.buffer.push(tr);
        Ok(())
    }

    /// One TD3 update when training and the buffer holds a full batch.
    pub fn maybe_train(&mut self, phase: Phase) -> Result<Option<TrainStats>> {
        let batch_size = self.td3.hyper.batch_size;
        if phase != Phase::Train || self.buffer.len() < batch_size {
            return Ok(None);
        }
        let batch = self.buffer.sample(batch_size, &mut self.rng)?;
        self.td3.train_step(&batch, &mut self.rng).map(Some)
    }

    /// Uniform minibatch pass over the buffer in shuffled order (no env).
    pub fn train_epoch(&mut self) -> Result<usize> {
        let batch_size = self.td3.hyper.batch_size;
        let order = rand::seq::index::sample(&mut self.rng, self.buffer.len(), self.buffer.len())
            .into_vec();
        let all: Vec<&Transition> = self.buffer.iter().collect();
        let mut updates = 0;
        for chunk in order.chunks(batch_size) {
            let batch: Vec<&Transition> = chunk.iter().map(|&i| all[i]).collect();
            self.td3.train_step(&batch, &mut self.rng)?;
            updates += 1;
        }
        Ok(updates)
    }
}

/// Learner bound to one cell.
#[derive(Debug, Clone)]
pub struct CellAgent {
    pub cell: usize,
    pub learner: Learner,
}

impl CellAgent {
    /// Fresh agent for `cell`; parameters and behaviour draw from the
    /// cell's own seed streams.
    pub fn new(
        cell: usize,
        arch: Architecture,
        hyper: Td3Hyper,
        capacity: usize,
        seed: u64,
    ) -> Result<Self> {
        let td3 = Td3Agent::new(arch, hyper, &mut stream_rng(seed, Stream::AgentInit(cell)))?;
        Ok(CellAgent {
            cell,
            learner: Learner::new(td3, capacity, stream_rng(seed, Stream::Agent(cell)))?,
        })
    }
}

/// Local-agent architecture for an env under a message mode.
pub fn local_architecture(env: &Env, mode: MessageMode) -> Architecture {
    let n = env.num_slices();
    Architecture::local(LocalState::dim(n), mode.dim(n), n)
}

/// One fresh agent per cell.
pub fn build_cell_agents(
    env: &Env,
    hyper: Td3Hyper,
    capacity: usize,
    seed: u64,
    mode: MessageMode,
) -> Result<Vec<CellAgent>> {
    let arch = local_architecture(env, mode);
    (0..env.num_cells())
        .map(|k| CellAgent::new(k, arch.clone(), hyper, capacity, seed))
        .collect()
}

/// View of the environment handed to a controller each timestamp.
pub struct StepContext<'a> {
    pub env: &'a Env,
    /// Report of the previous slot, i.e. the current observation.
    pub prev: &'a KpiReport,
    pub phase: Phase,
    pub step_in_phase: usize,
    pub schedule: &'a PhaseSchedule,
}

impl StepContext<'_> {
    /// Demand-proportional action for every cell from the previous report.
    pub fn heuristic(&self) -> Vec<PartitionAction> {
        (0..self.env.num_cells())
            .map(|k| demand_proportional_action(self.prev, k))
            .collect()
    }
}

/// Result of executing one timestamp.
pub struct Outcome<'a> {
    pub report: &'a KpiReport,
    pub local_rewards: &'a [f64],
    pub global_reward: f64,
}

/// Decides every cell's partition and learns from the outcome.
pub trait Controller {
    fn act(&mut self, ctx: &StepContext<'_>) -> Result<Vec<PartitionAction>>;

    /// Stores experience and trains; returns a representative critic loss
    /// when an update happened.
    fn learn(
        &mut self,
        ctx: &StepContext<'_>,
        actions: &[PartitionAction],
        outcome: &Outcome<'_>,
    ) -> Result<Option<f64>>;
}

/// Runs `schedule.horizon()` consecutive timestamps, appending to `log`.
pub fn run_episode<C: Controller + ?Sized>(
    env: &mut Env,
    controller: &mut C,
    schedule: &PhaseSchedule,
    reward: RewardKind,
    stage: Stage,
    log: &mut MetricsLog,
) -> Result<()> {
    schedule.validate()?;
    let (k_cells, n_slices) = (env.num_cells(), env.num_slices());
    for i in 0..schedule.horizon() {
        let (phase, step_in_phase) = schedule.locate(i).expect("index within horizon");
        let prev = env.last_report().clone();
        let ctx = StepContext {
            env,
            prev: &prev,
            phase,
            step_in_phase,
            schedule,
        };
        let actions = controller.act(&ctx)?;
        let t = env.clock();
        let report = env.step(&actions)?;
        let slices = env.slices();
        let local_rewards = (0..k_cells)
            .map(|k| local_reward(&report, k, slices, reward))
            .collect::<Result<Vec<_>>>()?;
        let global_reward = combine_local_rewards(&local_rewards, reward);
        let ctx = StepContext {
            env,
            prev: &prev,
            phase,
            step_in_phase,
            schedule,
        };
        let outcome = Outcome {
            report: &report,
            local_rewards: &local_rewards,
            global_reward,
        };
        let critic_loss = controller.learn(&ctx, &actions, &outcome)?;

        let mut throughput_sat = Vec::with_capacity(k_cells * n_slices);
        let mut delay_sat = Vec::with_capacity(k_cells * n_slices);
        for k in 0..k_cells {
            for (n, spec) in slices.iter().enumerate() {
                let (thr, delay) = satisfaction(&report, k, n, spec);
                throughput_sat.push(thr);
                delay_sat.push(delay);
            }
        }
        log.steps.push(StepMetrics {
            t,
            label: PhaseLabel { stage, phase },
            global_reward,
            local_rewards,
            actions: actions
                .iter()
                .flat_map(|a| a.as_slice().iter().copied())
                .collect(),
            loads: report.load.clone(),
            throughput_sat,
            delay_sat,
            demand: report.demand.clone(),
            critic_loss,
        });
    }
    Ok(())
}

/// K independent agents acting on local observations (DIRP, and the
/// coordination-free variant when messages are absent).
pub struct DirpController<'a> {
    pub agents: &'a mut [CellAgent],
    pub mode: MessageMode,
    /// When false the agents act deterministically and never store or train.
    pub learning: bool,
    scale: StateScale,
    obs: Vec<Vec<f64>>,
}

impl<'a> DirpController<'a> {
    pub fn new(env: &Env, agents: &'a mut [CellAgent], mode: MessageMode) -> Self {
        DirpController {
            agents,
            mode,
            learning: true,
            scale: StateScale::from_slices(env.slices()),
            obs: Vec::new(),
        }
    }
}

impl Controller for DirpController<'_> {
    fn act(&mut self, ctx: &StepContext<'_>) -> Result<Vec<PartitionAction>> {
        check_dim("cell agents", ctx.env.num_cells(), self.agents.len())?;
        let hints = ctx.heuristic();
        self.obs = (0..self.agents.len())
            .map(|k| observation(ctx.prev, k, ctx.env, &self.scale, self.mode))
            .collect();
        // A frozen controller is in pure evaluation whatever the phase.
        let phase = if self.learning {
            ctx.phase
        } else {
            Phase::Eval
        };
        let mut actions = Vec::with_capacity(self.agents.len());
        for (k, agent) in self.agents.iter_mut().enumerate() {
            let a = agent.learner.select_action(
                &self.obs[k],
                phase,
                ctx.step_in_phase,
                ctx.schedule,
                hints[k].as_slice(),
            )?;
            actions.push(PartitionAction::normalized(a));
        }
        Ok(actions)
    }

    fn learn(
        &mut self,
        ctx: &StepContext<'_>,
        actions: &[PartitionAction],
        outcome: &Outcome<'_>,
    ) -> Result<Option<f64>> {
        if !self.learning {
            return Ok(None);
        }
        if ctx.phase != Phase::Eval {
            for (k, agent) in self.agents.iter_mut().enumerate() {
                agent.learner.observe_and_store(Transition {
                    state: std::mem::take(&mut self.obs[k]),
                    action: actions[k].as_slice().to_vec(),
                    reward: outcome.local_rewards[k],
                    next_state: observation(outcome.report, k, ctx.env, &self.scale, self.mode),
                    t: outcome.report.t,
                    cell: k,
                })?;
            }
        }
        if ctx.phase == Phase::Train {
            self.agents
                .iter_mut()
                .for_each(|a| a.learner.decay_epsilon());
        }
        let stats = self
            .agents
            .par_iter_mut()
            .map(|a| a.learner.maybe_train(ctx.phase))
            .collect::<Result<Vec<_>>>()?;
        Ok(mean_critic_loss(stats.iter().flatten()))
    }
}

pub(crate) fn mean_critic_loss<'a>(stats: impl Iterator<Item = &'a TrainStats>) -> Option<f64> {
    let (sum, count) = stats.fold((0.0, 0usize), |(s, c), st| {
        (s + 0.5 * (st.critic.critic1 + st.critic.critic2), c + 1)
    });
    (count > 0).then(|| sum / count as f64)
}

/// Distributed training loop over all cells with the given message mode.
pub fn run_dirp(
    env: &mut Env,
    agents: &mut [CellAgent],
    schedule: &PhaseSchedule,
    reward: RewardKind,
    mode: MessageMode,
) -> Result<MetricsLog> {
    let scheme = if mode == MessageMode::Absent {
        "bl-dist"
    } else {
        "dirp"
    };
    let mut log = MetricsLog::new(scheme, 0, env.num_cells(), env.num_slices());
    let mut controller = DirpController::new(env, agents, mode);
    run_episode(
        env,
        &mut controller,
        schedule,
        reward,
        Stage::Main,
        &mut log,
    )?;
    Ok(log)
}
