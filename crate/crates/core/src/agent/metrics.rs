use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::schedule::Phase;
use crate::error::{Error, Result};

/// Which part of a pipeline a step belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Main,
    Generalist,
    Specialist,
}

/// Phase label as written to CSV, e.g. `train`, `gen-expl`, `spec-eval`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PhaseLabel {
    pub stage: Stage,
    pub phase: Phase,
}

impl fmt::Display for PhaseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.stage {
            Stage::Main => write!(f, "{}", self.phase),
            Stage::Generalist => write!(f, "gen-{}", self.phase),
            Stage::Specialist => write!(f, "spec-{}", self.phase),
        }
    }
}

/// Everything logged for one timestamp. Per-(cell, slice) vectors are
/// indexed `k * N + n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub t: usize,
    pub label: PhaseLabel,
    pub global_reward: f64,
    pub local_rewards: Vec<f64>,
    pub actions: Vec<f64>,
    pub loads: Vec<f64>,
    pub throughput_sat: Vec<f64>,
    pub delay_sat: Vec<f64>,
    pub demand: Vec<f64>,
    /// Mean pre-update critic loss over the agents that trained this step.
    pub critic_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsLog {
    pub scheme: String,
    pub seed: u64,
    pub num_cells: usize,
    pub num_slices: usize,
    pub steps: Vec<StepMetrics>,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    t: usize,
    phase: String,
    cell: usize,
    slice: usize,
    action: f64,
    load: f64,
    throughput_sat: f64,
    delay_sat: f64,
    local_reward: f64,
    global_reward: f64,
    scheme: &'a str,
    seed: u64,
}

impl MetricsLog {
    pub fn new(scheme: impl Into<String>, seed: u64, num_cells: usize, num_slices: usize) -> Self {
        MetricsLog {
            scheme: scheme.into(),
            seed,
            num_cells,
            num_slices,
            steps: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }
    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Appends another log of the same network (e.g. a later stage).
    pub fn append(&mut self, other: MetricsLog) -> Result<()> {
        if other.num_cells != self.num_cells || other.num_slices != self.num_slices {
            return Err(Error::Contract(
                "cannot join metrics of different networks".into(),
            ));
        }
        self.steps.extend(other.steps);
        Ok(())
    }

    pub fn global_rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.global_reward).collect()
    }

    /// Steps carrying the given label, in order.
    pub fn with_label(&self, label: PhaseLabel) -> impl Iterator<Item = &StepMetrics> {
        self.steps.iter().filter(move |s| s.label == label)
    }

    /// Steps of a stage, in order.
    pub fn stage(&self, stage: Stage) -> impl Iterator<Item = &StepMetrics> {
        self.steps.iter().filter(move |s| s.label.stage == stage)
    }

    /// Evaluation steps of the last stage present in the log.
    pub fn final_eval(&self) -> Vec<&StepMetrics> {
        let Some(last) = self.steps.last() else {
            return Vec::new();
        };
        let label = PhaseLabel {
            stage: last.label.stage,
            phase: Phase::Eval,
        };
        self.with_label(label).collect()
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for s in &self.steps {
            let phase = s.label.to_string();
            for k in 0..self.num_cells {
                for n in 0..self.num_slices {
                    let i = k * self.num_slices + n;
                    w.serialize(CsvRow {
                        t: s.t,
                        phase: phase.clone(),
                        cell: k,
                        slice: n,
                        action: s.actions[i],
                        load: s.loads[i],
                        throughput_sat: s.throughput_sat[i],
                        delay_sat: s.delay_sat[i],
                        local_reward: s.local_rewards[k],
                        global_reward: s.global_reward,
                        scheme: &self.scheme,
                        seed: self.seed,
                    })?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        self.write_csv(&mut out)
            .map_err(|e| Error::Contract(format!("metrics serialization failed: {e}")))?;
        Ok(out)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
            .map_err(|e| Error::parse(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_one_row_per_cell_slice_step() {
        let mut log = MetricsLog::new("dirp", 3, 2, 2);
        for t in 0..5 {
            log.steps.push(StepMetrics {
                t,
                label: PhaseLabel {
                    stage: Stage::Generalist,
                    phase: Phase::Train,
                },
                global_reward: 0.5,
                local_rewards: vec![0.5, 0.7],
                actions: vec![0.5; 4],
                loads: vec![0.1; 4],
                throughput_sat: vec![1.0; 4],
                delay_sat: vec![1.0; 4],
                demand: vec![1.0; 4],
                critic_loss: None,
            });
        }
        let text = String::from_utf8(log.to_csv_bytes().unwrap()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 1 + 2 * 2 * 5);
        assert_eq!(
            lines[0],
            "t,phase,cell,slice,action,load,throughput_sat,delay_sat,local_reward,global_reward,scheme,seed"
        );
        assert!(lines[1].starts_with("0,gen-train,0,0,"));
    }
}
