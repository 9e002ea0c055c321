//! Generalist-to-specialist transfer: one policy trained on pooled
//! experience from every cell, packaged per cell, then finetuned locally.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{
    build_cell_agents, local_architecture, mean_critic_loss, observation, run_episode, CellAgent,
    Controller, DirpController, Learner, MessageMode, MetricsLog, Outcome, Phase, PhaseSchedule,
    Stage, StepContext,
};
use crate::env::Env;
use crate::error::{Error, Result};
use crate::mdp::{PartitionAction, RewardKind, StateScale};
use crate::rng::{stream_rng, Stream};
use crate::td3::{Td3Agent, Td3Hyper, Transition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransferScheme {
    /// Frozen generalist deployed in every cell.
    GenOnly,
    /// Models and same-cell instances, online finetuning.
    SpecFull,
    SpecInstanceOnly,
    SpecModelOnly,
    /// Models and instances, offline then online finetuning.
    TlDirp,
}

impl TransferScheme {
    pub const ALL: [TransferScheme; 5] = [
        TransferScheme::GenOnly,
        TransferScheme::SpecFull,
        TransferScheme::SpecInstanceOnly,
        TransferScheme::SpecModelOnly,
        TransferScheme::TlDirp,
    ];

    pub fn plan(self) -> TransferPlan {
        let base = TransferPlan::none();
        match self {
            TransferScheme::GenOnly => TransferPlan {
                models: true,
                frozen: true,
                skip_exploration: true,
                ..base
            },
            TransferScheme::SpecFull => TransferPlan {
                models: true,
                instances: true,
                skip_exploration: true,
                ..base
            },
            TransferScheme::SpecInstanceOnly => TransferPlan {
                instances: true,
                skip_exploration: true,
                ..base
            },
            TransferScheme::SpecModelOnly => TransferPlan {
                models: true,
                ..base
            },
            TransferScheme::TlDirp => TransferPlan {
                models: true,
                instances: true,
                skip_exploration: true,
                offline_epochs: DEFAULT_OFFLINE_EPOCHS,
                ..base
            },
        }
    }
}

impl fmt::Display for TransferScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransferScheme::GenOnly => "gen",
            TransferScheme::SpecFull => "spec",
            TransferScheme::SpecInstanceOnly => "spec-instance",
            TransferScheme::SpecModelOnly => "spec-model",
            TransferScheme::TlDirp => "tl-dirp",
        })
    }
}

impl FromStr for TransferScheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        TransferScheme::ALL
            .into_iter()
            .find(|x| x.to_string() == s)
            .ok_or_else(|| Error::Config(format!("unknown transfer scheme '{s}'")))
    }
}

pub const DEFAULT_OFFLINE_EPOCHS: usize = 3;

/// What a specialist receives and how it is trained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransferPlan {
    pub models: bool,
    pub instances: bool,
    pub offline_epochs: usize,
    pub skip_exploration: bool,
    /// Deploy without learning or behaviour noise.
    pub frozen: bool,
}

impl TransferPlan {
    /// Nothing transferred: specialists are ordinary fresh agents.
    pub fn none() -> Self {
        TransferPlan {
            models: false,
            instances: false,
            offline_epochs: 0,
            skip_exploration: false,
            frozen: false,
        }
    }
}

/// Schedules and learner settings of a transfer pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct TlSetup {
    /// Generalist period; a zero-length schedule skips generalist training.
    pub generalist: PhaseSchedule,
    pub specialist: PhaseSchedule,
    pub reward: RewardKind,
    pub hyper: Td3Hyper,
    pub capacity: usize,
    pub seed: u64,
}

/// One shared learner acting for every cell, storing all K transitions
/// per timestamp in its single buffer.
pub struct GeneralistController {
    pub learner: Learner,
    scale: StateScale,
    obs: Vec<Vec<f64>>,
}

impl GeneralistController {
    pub fn new(env: &Env, hyper: Td3Hyper, capacity: usize, seed: u64) -> Result<Self> {
        let arch = local_architecture(env, MessageMode::Neighbors);
        let td3 = Td3Agent::new(arch, hyper, &mut stream_rng(seed, Stream::GeneralistInit))?;
        Ok(GeneralistController {
            learner: Learner::new(td3, capacity, stream_rng(seed, Stream::Generalist))?,
            scale: StateScale::from_slices(env.slices()),
            obs: Vec::new(),
        })
    }
}

impl Controller for GeneralistController {
    fn act(&mut self, ctx: &StepContext<'_>) -> Result<Vec<PartitionAction>> {
        let hints = ctx.heuristic();
        let k_cells = ctx.env.num_cells();
        self.obs = (0..k_cells)
            .map(|k| observation(ctx.prev, k, ctx.env, &self.scale, MessageMode::Neighbors))
            .collect();
        (0..k_cells)
            .map(|k| {
                self.learner
                    .select_action(
                        &self.obs[k],
                        ctx.phase,
                        ctx.step_in_phase,
                        ctx.schedule,
                        hints[k].as_slice(),
                    )
                    .map(PartitionAction::normalized)
            })
            .collect()
    }

    fn learn(
        &mut self,
        ctx: &StepContext<'_>,
        actions: &[PartitionAction],
        outcome: &Outcome<'_>,
    ) -> Result<Option<f64>> {
        if ctx.phase != Phase::Eval {
            for (k, action) in actions.iter().enumerate() {
                self.learner.observe_and_store(Transition {
                    state: std::mem::take(&mut self.obs[k]),
                    action: action.as_slice().to_vec(),
                    reward: outcome.local_rewards[k],
                    next_state: observation(
                        outcome.report,
                        k,
                        ctx.env,
                        &self.scale,
                        MessageMode::Neighbors,
                    ),
                    t: outcome.report.t,
                    cell: k,
                })?;
            }
        }
        if ctx.phase == Phase::Train {
            self.learner.decay_epsilon();
        }
        let stats = self.learner.maybe_train(ctx.phase)?;
        Ok(mean_critic_loss(stats.iter()))
    }
}

/// Centralized generalist training. The shared buffer holds `capacity`
/// transitions per cell so no cell's instances are evicted early.
pub fn train_generalist(
    env: &mut Env,
    schedule: &PhaseSchedule,
    reward: RewardKind,
    hyper: Td3Hyper,
    capacity: usize,
    seed: u64,
) -> Result<(Learner, MetricsLog)> {
    let mut ctrl = GeneralistController::new(env, hyper, capacity * env.num_cells(), seed)?;
    let mut log = MetricsLog::new("gen", seed, env.num_cells(), env.num_slices());
    run_episode(
        env,
        &mut ctrl,
        schedule,
        reward,
        Stage::Generalist,
        &mut log,
    )?;
    Ok((ctrl.learner, log))
}

/// Knowledge handed to the specialist of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgePackage {
    pub cell: usize,
    pub model: Option<Td3Agent>,
    pub instances: Vec<Transition>,
    /// Length of the generalist period the knowledge stems from.
    pub generalist_steps: usize,
    /// Epsilon decays the generalist performed; specialists continue from it.
    pub epsilon_steps: u64,
}

pub fn build_package(
    generalist: &Learner,
    plan: &TransferPlan,
    cell: usize,
    generalist_steps: usize,
) -> KnowledgePackage {
    KnowledgePackage {
        cell,
        model: plan.models.then(|| generalist.td3.clone()),
        instances: if plan.instances {
            generalist
                .buffer
                .iter()
                .filter(|tr| tr.cell == cell)
                .cloned()
                .collect()
        } else {
            Vec::new()
        },
        generalist_steps,
        epsilon_steps: generalist.epsilon_steps(),
    }
}

const PACKAGE_FORMAT: &str = "dirp-knowledge/1";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PackageMeta {
    format: String,
    cell: usize,
    generalist_steps: usize,
    epsilon_steps: u64,
    has_model: bool,
    num_instances: usize,
    state_dim: usize,
    action_dim: usize,
}

impl KnowledgePackage {
    /// Writes `metadata.json`, `instances.csv` and, when present, `model/`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let (state_dim, action_dim) = self
            .instances
            .first()
            .map(|tr| (tr.state.len(), tr.action.len()))
            .or_else(|| {
                self.model
                    .as_ref()
                    .map(|m| (m.arch.obs_dim, m.arch.action_dim))
            })
            .unwrap_or((0, 0));
        let meta = PackageMeta {
            format: PACKAGE_FORMAT.into(),
            cell: self.cell,
            generalist_steps: self.generalist_steps,
            epsilon_steps: self.epsilon_steps,
            has_model: self.model.is_some(),
            num_instances: self.instances.len(),
            state_dim,
            action_dim,
        };
        let path = dir.join("metadata.json");
        let text = serde_json::to_string_pretty(&meta).map_err(|e| Error::parse(&path, e))?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;

        let path = dir.join("instances.csv");
        let mut w = csv::Writer::from_path(&path).map_err(|e| Error::parse(&path, e))?;
        let mut header = vec!["t".to_string(), "cell".into(), "reward".into()];
        header.extend((0..state_dim).map(|i| format!("s{i}")));
        header.extend((0..action_dim).map(|i| format!("a{i}")));
        header.extend((0..state_dim).map(|i| format!("next_s{i}")));
        w.write_record(&header)
            .map_err(|e| Error::parse(&path, e))?;
        for tr in &self.instances {
            if tr.state.len() != state_dim
                || tr.next_state.len() != state_dim
                || tr.action.len() != action_dim
            {
                return Err(Error::Contract("instances of mixed dimensions".into()));
            }
            let mut rec = vec![tr.t.to_string(), tr.cell.to_string(), tr.reward.to_string()];
            rec.extend(
                tr.state
                    .iter()
                    .chain(&tr.action)
                    .chain(&tr.next_state)
                    .map(f64::to_string),
            );
            w.write_record(&rec).map_err(|e| Error::parse(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;

        if let Some(model) = &self.model {
            model.save(&dir.join("model"))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("metadata.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let meta: PackageMeta = serde_json::from_str(&text).map_err(|e| Error::parse(&path, e))?;
        if meta.format != PACKAGE_FORMAT {
            return Err(Error::parse(
                &path,
                format!("unsupported package format {:?}", meta.format),
            ));
        }
        let path = dir.join("instances.csv");
        let mut r = csv::Reader::from_path(&path).map_err(|e| Error::parse(&path, e))?;
        let (sd, ad) = (meta.state_dim, meta.action_dim);
        let mut instances = Vec::with_capacity(meta.num_instances);
        for rec in r.records() {
            let rec = rec.map_err(|e| Error::parse(&path, e))?;
            if rec.len() != 3 + 2 * sd + ad {
                return Err(Error::parse(
                    &path,
                    format!("record has {} fields", rec.len()),
                ));
            }
            let num = |i: usize| -> Result<f64> {
                rec[i].parse::<f64>().map_err(|e| Error::parse(&path, e))
            };
            let int = |i: usize| -> Result<usize> {
                rec[i].parse::<usize>().map_err(|e| Error::parse(&path, e))
            };
            let vals = (3..rec.len()).map(num).collect::<Result<Vec<_>>>()?;
            instances.push(Transition {
                t: int(0)?,
                cell: int(1)?,
                reward: num(2)?,
                state: vals[..sd].to_vec(),
                action: vals[sd..sd + ad].to_vec(),
                next_state: vals[sd + ad..].to_vec(),
            });
        }
        if instances.len() != meta.num_instances {
            return Err(Error::parse(
                &path,
                "instance count disagrees with metadata",
            ));
        }
        let model = if meta.has_model {
            Some(Td3Agent::load(&dir.join("model"))?)
        } else {
            None
        };
        Ok(KnowledgePackage {
            cell: meta.cell,
            model,
            instances,
            generalist_steps: meta.generalist_steps,
            epsilon_steps: meta.epsilon_steps,
        })
    }
}

/// Applies `package` to a fresh specialist and runs the offline stage.
/// Touches no environment state.
pub fn prepare_specialist(
    agent: &mut CellAgent,
    package: &KnowledgePackage,
    plan: &TransferPlan,
) -> Result<()> {
    if package.cell != agent.cell {
        return Err(Error::Contract(format!(
            "package for cell {} applied to cell {}",
            package.cell, agent.cell
        )));
    }
    if let Some(model) = &package.model {
        agent.learner.td3.load_parameters_from(model)?;
    }
    for tr in &package.instances {
        agent.learner.observe_and_store(tr.clone())?;
    }
    agent.learner.set_epsilon_steps(package.epsilon_steps);
    if !agent.learner.buffer.is_empty() {
        for _ in 0..plan.offline_epochs {
            agent.learner.train_epoch()?;
        }
    }
    Ok(())
}

/// Builds, initializes and offline-finetunes the K specialists.
pub fn prepare_specialists(
    env: &Env,
    generalist: Option<(&Learner, usize)>,
    setup: &TlSetup,
    plan: &TransferPlan,
) -> Result<Vec<CellAgent>> {
    let mut agents = build_cell_agents(
        env,
        setup.hyper,
        setup.capacity,
        setup.seed,
        MessageMode::Neighbors,
    )?;
    if let Some((gen, steps)) = generalist {
        agents.par_iter_mut().try_for_each(|agent| {
            let package = build_package(gen, plan, agent.cell, steps);
            prepare_specialist(agent, &package, plan)
        })?;
    }
    Ok(agents)
}

/// Lockstep online finetuning of prepared specialists.
pub fn finetune_specialists(
    env: &mut Env,
    agents: &mut [CellAgent],
    setup: &TlSetup,
    plan: &TransferPlan,
) -> Result<MetricsLog> {
    let schedule = if plan.skip_exploration {
        setup.specialist.without_exploration()
    } else {
        setup.specialist
    };
    let mut log = MetricsLog::new("spec", setup.seed, env.num_cells(), env.num_slices());
    let mut ctrl = DirpController::new(env, agents, MessageMode::Neighbors);
    ctrl.learning = !plan.frozen;
    run_episode(
        env,
        &mut ctrl,
        &schedule,
        setup.reward,
        Stage::Specialist,
        &mut log,
    )?;
    Ok(log)
}

pub struct TlRun {
    pub log: MetricsLog,
    pub generalist: Option<Learner>,
    pub specialists: Vec<CellAgent>,
}

/// End-to-end pipeline: generalist period, packaging, specialist period.
pub fn run_tl_with_plan(env: &mut Env, setup: &TlSetup, plan: &TransferPlan) -> Result<TlRun> {
    let mut log = MetricsLog::new("tl", setup.seed, env.num_cells(), env.num_slices());
    let steps = setup.generalist.horizon();
    let generalist = if steps > 0 {
        let (gen, gen_log) = train_generalist(
            env,
            &setup.generalist,
            setup.reward,
            setup.hyper,
            setup.capacity,
            setup.seed,
        )?;
        log.append(gen_log)?;
        Some(gen)
    } else {
        None
    };
    let mut specialists =
        prepare_specialists(env, generalist.as_ref().map(|g| (g, steps)), setup, plan)?;
    log.append(finetune_specialists(env, &mut specialists, setup, plan)?)?;
    Ok(TlRun {
        log,
        generalist,
        specialists,
    })
}

pub fn run_tl_dirp(env: &mut Env, setup: &TlSetup, scheme: TransferScheme) -> Result<TlRun> {
    let mut run = run_tl_with_plan(env, setup, &scheme.plan())?;
    run.log.scheme = scheme.to_string();
    Ok(run)
}
