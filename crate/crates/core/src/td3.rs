//! Twin delayed deep deterministic policy gradient on [`crate::approx`]
//! networks, with a grouped-softmax actor producing simplex actions.

use std::ops::Range;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::approx::{Activation, AdamConfig, AdamState, Checkpoint, Gradient, ParamSet};
use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Td3Hyper {
    pub gamma: f64,
    pub tau: f64,
    /// Std of the target policy smoothing noise, in action units.
    pub target_noise: f64,
    pub noise_clip: f64,
    pub policy_delay: u64,
    pub batch_size: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub action_low: f64,
    pub action_high: f64,
    /// Std of the behaviour noise added to actor logits.
    pub exploration_noise: f64,
}

impl Default for Td3Hyper {
    fn default() -> Self {
        Td3Hyper {
            gamma: 0.1,
            tau: 0.005,
            target_noise: 0.1,
            noise_clip: 0.25,
            policy_delay: 2,
            batch_size: 32,
            actor_lr: 5e-4,
            critic_lr: 1e-3,
            action_low: 0.0,
            action_high: 1.0,
            exploration_noise: 0.2,
        }
    }
}

impl Td3Hyper {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("invalid TD3 hyperparameter: {what}")));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must lie in (0, 1]");
        }
        if !(self.noise_clip > 0.0) {
            return bad("noise_clip must be positive");
        }
        if self.policy_delay < 1 {
            return bad("policy_delay must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.target_noise >= 0.0 && self.exploration_noise >= 0.0) {
            return bad("noise std must be non-negative");
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return bad("learning rates must be positive");
        }
        if !(self.action_low < self.action_high) {
            return bad("action_low must be below action_high");
        }
        Ok(())
    }
}

/// Network sizes for one agent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    /// Observation dimension fed to the actor (state plus message).
    pub obs_dim: usize,
    pub action_dim: usize,
    /// Number of independent simplexes in the action.
    pub groups: usize,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    /// Observation columns that start with zero weights (neighbour message).
    pub side_inputs: Range<usize>,
}

impl Architecture {
    /// Per-cell agent: hidden (48, 24) actor and (64, 24) critic.
    pub fn local(state_dim: usize, message_dim: usize, num_slices: usize) -> Self {
        Architecture {
            obs_dim: state_dim + message_dim,
            action_dim: num_slices,
            groups: 1,
            actor_hidden: vec![48, 24],
            critic_hidden: vec![64, 24],
            side_inputs: state_dim..state_dim + message_dim,
        }
    }

    /// Single controller over all cells: hidden (384, 192, 64) actor and
    /// (324, 144, 64) critic, one softmax group per cell.
    pub fn central(global_state_dim: usize, num_cells: usize, num_slices: usize) -> Self {
        Architecture {
            obs_dim: global_state_dim,
            action_dim: num_cells * num_slices,
            groups: num_cells,
            actor_hidden: vec![384, 192, 64],
            critic_hidden: vec![324, 144, 64],
            side_inputs: 0..0,
        }
    }

    pub fn actor_sizes(&self) -> Vec<usize> {
        std::iter::once(self.obs_dim)
            .chain(self.actor_hidden.iter().copied())
            .chain(std::iter::once(self.action_dim))
            .collect()
    }

    pub fn critic_sizes(&self) -> Vec<usize> {
        std::iter::once(self.obs_dim + self.action_dim)
            .chain(self.critic_hidden.iter().copied())
            .chain(std::iter::once(1))
            .collect()
    }
}

/// One replay instance. Observations already include the message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub t: usize,
    /// Cell that produced the instance.
    pub cell: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticLoss {
    pub critic1: f64,
    pub critic2: f64,
}

/// Evaluations behind one TD target, kept for instrumentation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TdTarget {
    pub y: f64,
    pub q1: f64,
    pub q2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Td3Agent {
    pub arch: Architecture,
    pub hyper: Td3Hyper,
    pub actor: ParamSet,
    pub critic1: ParamSet,
    pub critic2: ParamSet,
    pub actor_target: ParamSet,
    pub critic1_target: ParamSet,
    pub critic2_target: ParamSet,
    pub actor_opt: AdamState,
    pub critic1_opt: AdamState,
    pub critic2_opt: AdamState,
    /// Training steps taken (critic updates).
    pub train_steps: u64,
    pub actor_updates: u64,
}

/// Componentwise clip to `[low, high]` followed by renormalization of each
/// group onto the simplex; an all-zero group becomes uniform.
pub fn project_groups(action: &mut [f64], groups: usize, low: f64, high: f64) {
    let width = action.len() / groups;
    for g in action.chunks_mut(width) {
        for v in g.iter_mut() {
            *v = v.clamp(low, high).max(0.0);
        }
        let s: f64 = g.iter().sum();
        if s > 0.0 {
            g.iter_mut().for_each(|v| *v /= s);
        } else {
            g.iter_mut().for_each(|v| *v = 1.0 / width as f64);
        }
    }
}

impl Td3Agent {
    pub fn new<R: Rng + ?Sized>(arch: Architecture, hyper: Td3Hyper, rng: &mut R) -> Result<Self> {
        hyper.validate()?;
        if arch.groups == 0 || !arch.action_dim.is_multiple_of(arch.groups) {
            return Err(Error::Config(format!(
                "action dimension {} not divisible into {} groups",
                arch.action_dim, arch.groups
            )));
        }
        let head = Activation::DecoupledSoftmax {
            groups: arch.groups,
        };
        let actor =
            ParamSet::with_side_inputs(&arch.actor_sizes(), head, arch.side_inputs.clone(), rng)?;
        let critic1 = ParamSet::with_side_inputs(
            &arch.critic_sizes(),
            Activation::Linear,
            arch.side_inputs.clone(),
            rng,
        )?;
        let critic2 = ParamSet::with_side_inputs(
            &arch.critic_sizes(),
            Activation::Linear,
            arch.side_inputs.clone(),
            rng,
        )?;
        Ok(Self::from_networks(arch, hyper, actor, critic1, critic2))
    }

    fn from_networks(
        arch: Architecture,
        hyper: Td3Hyper,
        actor: ParamSet,
        critic1: ParamSet,
        critic2: ParamSet,
    ) -> Self {
        Td3Agent {
            actor_opt: AdamState::new(&actor, AdamConfig::with_lr(hyper.actor_lr)),
            critic1_opt: AdamState::new(&critic1, AdamConfig::with_lr(hyper.critic_lr)),
            critic2_opt: AdamState::new(&critic2, AdamConfig::with_lr(hyper.critic_lr)),
            actor_target: actor.clone(),
            critic1_target: critic1.clone(),
            critic2_target: critic2.clone(),
            actor,
            critic1,
            critic2,
            arch,
            hyper,
            train_steps: 0,
            actor_updates: 0,
        }
    }

    /// Copies every current and target parameter from `source`; optimizer
    /// moments and counters start fresh.
    pub fn load_parameters_from(&mut self, source: &Td3Agent) -> Result<()> {
        let pairs = [
            (&self.actor, &source.actor),
            (&self.critic1, &source.critic1),
            (&self.critic2, &source.critic2),
        ];
        if pairs.iter().any(|(a, b)| !a.same_architecture(b)) {
            return Err(Error::Config(
                "transferred model architecture does not match".into(),
            ));
        }
        self.actor = source.actor.clone();
        self.critic1 = source.critic1.clone();
        self.critic2 = source.critic2.clone();
        self.actor_target = source.actor_target.clone();
        self.critic1_target = source.critic1_target.clone();
        self.critic2_target = source.critic2_target.clone();
        self.actor_opt.reset();
        self.critic1_opt.reset();
        self.critic2_opt.reset();
        self.train_steps = 0;
        self.actor_updates = 0;
        Ok(())
    }

    /// Deterministic policy output.
    pub fn act(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.actor.predict(obs)
    }

    /// Policy output with Gaussian noise on the logits before the softmax.
    pub fn act_noisy<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let (_, tape) = self.actor.forward(obs)?;
        let mut logits = tape.logits().to_vec();
        if self.hyper.exploration_noise > 0.0 {
            let normal = Normal::new(0.0, self.hyper.exploration_noise)
                .map_err(|e| Error::Config(e.to_string()))?;
            for z in &mut logits {
                *z += normal.sample(rng);
            }
        }
        crate::approx::decoupled_softmax(&logits, self.arch.groups)
    }

    /// Smoothed target action: target actor plus clipped noise, clipped to
    /// the action bounds and renormalized per group.
    pub fn target_action<R: Rng + ?Sized>(
        &self,
        next_obs: &[f64],
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        let mut a = self.actor_target.predict(next_obs)?;
        let h = &self.hyper;
        if h.target_noise > 0.0 {
            let normal =
                Normal::new(0.0, h.target_noise).map_err(|e| Error::Config(e.to_string()))?;
            for v in &mut a {
                *v += normal.sample(rng).clamp(-h.noise_clip, h.noise_clip);
            }
        }
        project_groups(&mut a, self.arch.groups, h.action_low, h.action_high);
        Ok(a)
    }

    fn q(net: &ParamSet, obs: &[f64], action: &[f64]) -> Result<f64> {
        let mut input = Vec::with_capacity(obs.len() + action.len());
        input.extend_from_slice(obs);
        input.extend_from_slice(action);
        Ok(net.predict(&input)?[0])
    }

    /// Current critic estimates for `(obs, action)`.
    pub fn q_values(&self, obs: &[f64], action: &[f64]) -> Result<(f64, f64)> {
        Ok((
            Self::q(&self.critic1, obs, action)?,
            Self::q(&self.critic2, obs, action)?,
        ))
    }

    pub fn td_target<R: Rng + ?Sized>(
        &self,
        reward: f64,
        next_obs: &[f64],
        rng: &mut R,
    ) -> Result<TdTarget> {
        if !reward.is_finite() {
            return Err(Error::NonFinite("reward"));
        }
        let a = self.target_action(next_obs, rng)?;
        let q1 = Self::q(&self.critic1_target, next_obs, &a)?;
        let q2 = Self::q(&self.critic2_target, next_obs, &a)?;
        Ok(TdTarget {
            y: reward + self.hyper.gamma * q1.min(q2),
            q1,
            q2,
        })
    }

    fn check_batch(&self, batch: &[&Transition]) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        for tr in batch {
            check_dim("transition state", self.arch.obs_dim, tr.state.len())?;
            check_dim(
                "transition next state",
                self.arch.obs_dim,
                tr.next_state.len(),
            )?;
            check_dim("transition action", self.arch.action_dim, tr.action.len())?;
        }
        Ok(())
    }

    /// One Adam step per critic on the mean squared TD error. Returns the
    /// pre-update losses together with the targets used.
    pub fn update_critics<R: Rng + ?Sized>(
        &mut self,
        batch: &[&Transition],
        rng: &mut R,
    ) -> Result<(CriticLoss, Vec<TdTarget>)> {
        self.check_batch(batch)?;
        let targets = batch
            .iter()
            .map(|tr| self.td_target(tr.reward, &tr.next_state, rng))
            .collect::<Result<Vec<_>>>()?;
        let scale = 1.0 / batch.len() as f64;
        let mut losses = [0.0; 2];
        let mut grads = [
            Gradient::zeros_like(&self.critic1),
            Gradient::zeros_like(&self.critic2),
        ];
        for (tr, target) in batch.iter().zip(&targets) {
            let mut input = tr.state.clone();
            input.extend_from_slice(&tr.action);
            for (i, net) in [&self.critic1, &self.critic2].into_iter().enumerate() {
                let (q, tape) = net.forward(&input)?;
                let err = q[0] - target.y;
                losses[i] += err * err * scale;
                net.backward_into(&tape, &[2.0 * err * scale], Some(&mut grads[i]))?;
            }
        }
        if !losses.iter().all(|l| l.is_finite()) {
            return Err(Error::NonFinite("critic loss"));
        }
        let [g1, g2] = grads;
        self.critic1_opt.apply(&mut self.critic1, &g1)?;
        self.critic2_opt.apply(&mut self.critic2, &g2)?;
        self.train_steps += 1;
        Ok((
            CriticLoss {
                critic1: losses[0],
                critic2: losses[1],
            },
            targets,
        ))
    }

    /// Delayed policy step: when `step_index % policy_delay == 0` the actor
    /// ascends Q1 and all targets soft-update. Returns the actor loss
    /// `-mean Q1` when an update happened.
    pub fn update_actor_and_targets(
        &mut self,
        batch: &[&Transition],
        step_index: u64,
    ) -> Result<Option<f64>> {
        if !step_index.is_multiple_of(self.hyper.policy_delay) {
            return Ok(None);
        }
        self.check_batch(batch)?;
        let scale = 1.0 / batch.len() as f64;
        let mut grad = Gradient::zeros_like(&self.actor);
        let mut loss = 0.0;
        let obs_dim = self.arch.obs_dim;
        for tr in batch {
            let (a, actor_tape) = self.actor.forward(&tr.state)?;
            let mut input = tr.state.clone();
            input.extend_from_slice(&a);
            let (q, critic_tape) = self.critic1.forward(&input)?;
            loss -= q[0] * scale;
            let dinput = self.critic1.backward_into(&critic_tape, &[-scale], None)?;
            self.actor
                .backward_into(&actor_tape, &dinput[obs_dim..], Some(&mut grad))?;
        }
        if !loss.is_finite() {
            return Err(Error::NonFinite("actor loss"));
        }
        self.actor_opt.apply(&mut self.actor, &grad)?;
        self.actor_updates += 1;
        self.soft_update_targets();
        Ok(Some(loss))
    }

    pub fn soft_update_targets(&mut self) {
        let tau = self.hyper.tau;
        self.actor_target.soft_update_from(&self.actor, tau);
        self.critic1_target.soft_update_from(&self.critic1, tau);
        self.critic2_target.soft_update_from(&self.critic2, tau);
    }

    /// Full training step: critics, then the delayed actor update using the
    /// running step counter (starting at 1).
    pub fn train_step<R: Rng + ?Sized>(
        &mut self,
        batch: &[&Transition],
        rng: &mut R,
    ) -> Result<TrainStats> {
        let (critic, _) = self.update_critics(batch, rng)?;
        let actor = self.update_actor_and_targets(batch, self.train_steps)?;
        Ok(TrainStats { critic, actor })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let nets: [(&str, &ParamSet, Option<&AdamState>); 6] = [
            ("actor", &self.actor, Some(&self.actor_opt)),
            ("critic1", &self.critic1, Some(&self.critic1_opt)),
            ("critic2", &self.critic2, Some(&self.critic2_opt)),
            ("actor_target", &self.actor_target, None),
            ("critic1_target", &self.critic1_target, None),
            ("critic2_target", &self.critic2_target, None),
        ];
        for (name, net, opt) in nets {
            Checkpoint::new(net, opt).save(&dir.join(format!("{name}.json")))?;
        }
        let meta = AgentMeta {
            arch: self.arch.clone(),
            hyper: self.hyper,
            train_steps: self.train_steps,
            actor_updates: self.actor_updates,
        };
        let path = dir.join("agent.json");
        let text = serde_json::to_string_pretty(&meta).map_err(|e| Error::parse(&path, e))?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("agent.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let meta: AgentMeta = serde_json::from_str(&text).map_err(|e| Error::parse(&path, e))?;
        let read = |name: &str| Checkpoint::load(&dir.join(format!("{name}.json")))?.restore();
        let (actor, actor_opt) = read("actor")?;
        let (critic1, critic1_opt) = read("critic1")?;
        let (critic2, critic2_opt) = read("critic2")?;
        let mut agent = Td3Agent::from_networks(meta.arch, meta.hyper, actor, critic1, critic2);
        let expect = [
            (&agent.actor, agent.arch.actor_sizes()),
            (&agent.critic1, agent.arch.critic_sizes()),
            (&agent.critic2, agent.arch.critic_sizes()),
        ];
        if expect.iter().any(|(net, sizes)| net.sizes() != *sizes) {
            return Err(Error::Config(format!(
                "checkpoint in {} does not match its declared architecture",
                dir.display()
            )));
        }
        agent.actor_target = read("actor_target")?.0;
        agent.critic1_target = read("critic1_target")?.0;
        agent.critic2_target = read("critic2_target")?.0;
        if !agent.actor_target.same_architecture(&agent.actor)
            || !agent.critic1_target.same_architecture(&agent.critic1)
            || !agent.critic2_target.same_architecture(&agent.critic2)
        {
            return Err(Error::Config("target network architecture mismatch".into()));
        }
        for (slot, opt) in [
            (&mut agent.actor_opt, actor_opt),
            (&mut agent.critic1_opt, critic1_opt),
            (&mut agent.critic2_opt, critic2_opt),
        ] {
            if let Some(opt) = opt {
                *slot = opt;
            }
        }
        agent.train_steps = meta.train_steps;
        agent.actor_updates = meta.actor_updates;
        Ok(agent)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainStats {
    pub critic: CriticLoss,
    pub actor: Option<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AgentMeta {
    arch: Architecture,
    hyper: Td3Hyper,
    train_steps: u64,
    actor_updates: u64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_agent(seed: u64, hyper: Td3Hyper) -> Td3Agent {
        let arch = Architecture {
            obs_dim: 3,
            action_dim: 2,
            groups: 1,
            actor_hidden: vec![8],
            critic_hidden: vec![8],
            side_inputs: 0..0,
        };
        Td3Agent::new(arch, hyper, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    fn transition(i: usize) -> Transition {
        let x = i as f64 * 0.1;
        Transition {
            state: vec![x, 1.0 - x, 0.5],
            action: vec![0.3, 0.7],
            reward: 0.5 + 0.1 * (i % 3) as f64,
            next_state: vec![1.0 - x, x, 0.2],
            t: i,
            cell: 0,
        }
    }

    #[test]
    fn zero_noise_target_action_is_target_actor_output() {
        let hyper = Td3Hyper {
            target_noise: 0.0,
            ..Td3Hyper::default()
        };
        let agent = small_agent(1, hyper);
        let obs = [0.2, 0.4, 0.9];
        let a = agent
            .target_action(&obs, &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap();
        let raw = agent.actor_target.predict(&obs).unwrap();
        for (x, y) in a.iter().zip(&raw) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn noisy_target_action_stays_on_simplex() {
        let hyper = Td3Hyper {
            target_noise: 5.0,
            noise_clip: 3.0,
            ..Td3Hyper::default()
        };
        let agent = small_agent(2, hyper);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let a = agent.target_action(&[0.1, 0.2, 0.3], &mut rng).unwrap();
            assert!(a.iter().all(|v| (0.0..=1.0).contains(v)));
            assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn td_target_arithmetic() {
        // y = r + gamma * min(q1', q2') = 0.9 + 0.1 * 0.4
        let mut agent = small_agent(4, Td3Hyper::default());
        for (net, q) in [
            (&mut agent.critic1_target, 0.4),
            (&mut agent.critic2_target, 0.6),
        ] {
            let last = net.layers.last_mut().unwrap();
            last.weights.iter_mut().for_each(|w| *w = 0.0);
            last.bias[0] = q;
        }
        let out = agent
            .td_target(0.9, &[0.0; 3], &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap();
        assert!((out.y - 0.94).abs() < 1e-15);

        let hyper = Td3Hyper {
            gamma: 0.0,
            ..Td3Hyper::default()
        };
        let agent = small_agent(4, hyper);
        let out = agent
            .td_target(0.37, &[0.5; 3], &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap();
        assert_eq!(out.y, 0.37);
        assert!(agent
            .td_target(f64::NAN, &[0.5; 3], &mut ChaCha8Rng::seed_from_u64(0))
            .is_err());
    }

    #[test]
    fn critic_regresses_to_reward_without_discount() {
        let hyper = Td3Hyper {
            gamma: 0.0,
            ..Td3Hyper::default()
        };
        let mut agent = small_agent(5, hyper);
        let tr = transition(2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..5000 {
            agent.update_critics(&[&tr], &mut rng).unwrap();
        }
        let (q1, q2) = agent.q_values(&tr.state, &tr.action).unwrap();
        assert!((q1 - tr.reward).abs() < 1e-3, "q1 = {q1}");
        assert!((q2 - tr.reward).abs() < 1e-3, "q2 = {q2}");
    }

    #[test]
    fn critic_loss_decreases_on_frozen_batch() {
        let mut agent = small_agent(6, Td3Hyper::default());
        let data: Vec<Transition> = (0..8).map(transition).collect();
        let batch: Vec<&Transition> = data.iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (first, _) = agent.update_critics(&batch, &mut rng).unwrap();
        let mut last = first;
        for _ in 0..100 {
            last = agent.update_critics(&batch, &mut rng).unwrap().0;
        }
        assert!(last.critic1 < first.critic1 && last.critic2 < first.critic2);
    }

    #[test]
    fn delayed_actor_updates_and_exact_soft_update() {
        let mut agent = small_agent(7, Td3Hyper::default());
        let data: Vec<Transition> = (0..4).map(transition).collect();
        let batch: Vec<&Transition> = data.iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for step in 1..=9u64 {
            let prev = agent.actor_target.clone();
            let stats = agent.train_step(&batch, &mut rng).unwrap();
            assert_eq!(stats.actor.is_some(), step % 2 == 0);
            if stats.actor.is_some() {
                let tau = agent.hyper.tau;
                for ((t, p), c) in agent
                    .actor_target
                    .values()
                    .zip(prev.values())
                    .zip(agent.actor.values())
                {
                    assert!((t - (tau * c + (1.0 - tau) * p)).abs() <= 1e-15);
                }
            } else {
                assert_eq!(agent.actor_target, prev);
            }
        }
        assert_eq!(agent.actor_updates, 4);
    }

    #[test]
    fn unit_tau_copies_networks() {
        let hyper = Td3Hyper {
            tau: 1.0,
            policy_delay: 1,
            ..Td3Hyper::default()
        };
        let mut agent = small_agent(8, hyper);
        let data = [transition(1)];
        agent
            .train_step(&[&data[0]], &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap();
        assert_eq!(agent.actor_target, agent.actor);
        assert_eq!(agent.critic1_target, agent.critic1);
        assert_eq!(agent.critic2_target, agent.critic2);
    }

    #[test]
    fn actor_moves_towards_higher_q() {
        let mut agent = small_agent(
            9,
            Td3Hyper {
                policy_delay: 1,
                ..Td3Hyper::default()
            },
        );
        // Critic that prefers slice 0: Q = 10 * a0 on a linear path.
        let w = agent.critic1.layers[0].inputs;
        for layer in agent.critic1.layers.iter_mut() {
            layer.weights.iter_mut().for_each(|v| *v = 0.0);
            layer.bias.iter_mut().for_each(|v| *v = 0.0);
        }
        agent.critic1.layers[0].weights[3] = 10.0;
        agent.critic1.layers[1].weights[0] = 1.0;
        assert_eq!(w, 5);
        let data = [transition(0)];
        let before = agent.act(&data[0].state).unwrap()[0];
        for i in 1..=50 {
            agent.update_actor_and_targets(&[&data[0]], i).unwrap();
        }
        let after = agent.act(&data[0].state).unwrap()[0];
        assert!(after > before, "{before} -> {after}");
    }

    #[test]
    fn identical_seeds_identical_training() {
        let data: Vec<Transition> = (0..6).map(transition).collect();
        let batch: Vec<&Transition> = data.iter().collect();
        let run = || {
            let mut agent = small_agent(10, Td3Hyper::default());
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            for _ in 0..20 {
                agent.train_step(&batch, &mut rng).unwrap();
            }
            agent
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut agent = small_agent(11, Td3Hyper::default());
        let data = [transition(3)];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..3 {
            agent.train_step(&[&data[0]], &mut rng).unwrap();
        }
        let dir = tempfile::tempdir().unwrap();
        agent.save(dir.path()).unwrap();
        assert_eq!(Td3Agent::load(dir.path()).unwrap(), agent);
    }

    #[test]
    fn transfer_resets_optimizer() {
        let mut source = small_agent(12, Td3Hyper::default());
        let data = [transition(3)];
        source
            .train_step(&[&data[0]], &mut ChaCha8Rng::seed_from_u64(5))
            .unwrap();
        let mut dest = small_agent(13, Td3Hyper::default());
        dest.load_parameters_from(&source).unwrap();
        assert_eq!(dest.actor.checksum(), source.actor.checksum());
        assert_eq!(dest.critic1_opt.step, 0);
        assert!(dest.actor_opt.m.iter().all(|&m| m == 0.0));
    }
}
