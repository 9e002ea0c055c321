use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Explore,
    Train,
    Eval,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Explore => "expl",
            Phase::Train => "train",
            Phase::Eval => "eval",
        })
    }
}

/// Consecutive exploration, training and evaluation periods plus the
/// exploration constants that go with them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhaseSchedule {
    pub exploration: usize,
    pub train: usize,
    pub eval: usize,
    pub epsilon0: f64,
    pub epsilon_decay: f64,
    /// Probability of following the heuristic at the start of exploration.
    pub hint_start: f64,
    /// ... and at its end; also used for the random branch of training.
    pub hint_end: f64,
}

impl Default for PhaseSchedule {
    fn default() -> Self {
        PhaseSchedule {
            exploration: 100,
            train: 5000,
            eval: 500,
            epsilon0: 1.0,
            epsilon_decay: 0.999,
            hint_start: 0.5,
            hint_end: 0.9,
        }
    }
}

impl PhaseSchedule {
    pub fn with_lengths(exploration: usize, train: usize, eval: usize) -> Self {
        PhaseSchedule {
            exploration,
            train,
            eval,
            ..PhaseSchedule::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon() == 0 {
            return Err(Error::Config("schedule has no steps".into()));
        }
        if !(0.0..=1.0).contains(&self.epsilon0) || !(0.0..=1.0).contains(&self.epsilon_decay) {
            return Err(Error::Config(
                "epsilon0 and epsilon_decay must lie in [0, 1]".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.hint_start) || !(0.0..=1.0).contains(&self.hint_end) {
            return Err(Error::Config(
                "heuristic probabilities must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }

    pub fn horizon(&self) -> usize {
        self.exploration + self.train + self.eval
    }

    /// Same schedule without the exploration period.
    pub fn without_exploration(&self) -> Self {
        PhaseSchedule {
            exploration: 0,
            ..*self
        }
    }

    /// Phase of step `t` and the step's index within that phase.
    pub fn locate(&self, t: usize) -> Option<(Phase, usize)> {
        if t < self.exploration {
            Some((Phase::Explore, t))
        } else if t < self.exploration + self.train {
            Some((Phase::Train, t - self.exploration))
        } else if t < self.horizon() {
            Some((Phase::Eval, t - self.exploration - self.train))
        } else {
            None
        }
    }

    /// Heuristic-following probability at exploration step `i`, linear from
    /// `hint_start` to `hint_end` across the period.
    pub fn hint_probability(&self, i: usize) -> f64 {
        if self.exploration <= 1 {
            return self.hint_start;
        }
        let frac = i.min(self.exploration - 1) as f64 / (self.exploration - 1) as f64;
        self.hint_start + (self.hint_end - self.hint_start) * frac
    }

    /// Exploration rate after `n` training selections.
    pub fn epsilon(&self, n: u64) -> f64 {
        self.epsilon0 * self.epsilon_decay.powi(n.min(i32::MAX as u64) as i32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phases_partition_the_horizon() {
        let s = PhaseSchedule::with_lengths(2, 3, 1);
        let phases: Vec<_> = (0..7).map(|t| s.locate(t)).collect();
        assert_eq!(
            phases,
            vec![
                Some((Phase::Explore, 0)),
                Some((Phase::Explore, 1)),
                Some((Phase::Train, 0)),
                Some((Phase::Train, 1)),
                Some((Phase::Train, 2)),
                Some((Phase::Eval, 0)),
                None
            ]
        );
    }

    #[test]
    fn hint_ramp_and_epsilon() {
        let s = PhaseSchedule::default();
        assert_eq!(s.hint_probability(0), 0.5);
        assert!((s.hint_probability(99) - 0.9).abs() < 1e-15);
        assert_eq!(s.epsilon(0), 1.0);
        assert_eq!(s.epsilon(3), 0.999f64.powi(3));
        assert!(s.epsilon(5000) < 0.007);
    }

    #[test]
    fn empty_schedule_rejected() {
        assert!(PhaseSchedule::with_lengths(0, 0, 0).validate().is_err());
    }
}
