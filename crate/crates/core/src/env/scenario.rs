//! Built-in scenarios and the scenario file format.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{SliceSpec, Topology, TrafficMask};
use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Timestamps per day (15-minute KPI reporting).
pub const SLOTS_PER_DAY: usize = 96;

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub topology: Topology,
    pub slices: Vec<SliceSpec>,
    pub mask: TrafficMask,
}

impl Scenario {
    pub fn into_parts(self) -> (Topology, Vec<SliceSpec>, TrafficMask) {
        (self.topology, self.slices, self.mask)
    }

    /// Resolves `"default"`, `"small"`, or a path to a scenario TOML file.
    pub fn resolve(reference: &str, base_dir: Option<&Path>) -> Result<Self> {
        match reference {
            "default" => Ok(default_scenario()),
            "small" => Ok(small_scenario()),
            path => {
                let path = match base_dir {
                    Some(dir) if Path::new(path).is_relative() => dir.join(path),
                    _ => PathBuf::from(path),
                };
                Scenario::load(&path)
            }
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ScenarioFile = toml::from_str(&text).map_err(|e| Error::parse(path, e))?;
        file.into_scenario(path.parent())
    }

    pub fn validate(&self) -> Result<()> {
        self.topology.validate()?;
        self.mask.validate()?;
        for s in &self.slices {
            s.validate()?;
        }
        if self.slices.len() != self.topology.num_slices
            || self.mask.num_slices() != self.topology.num_slices
        {
            return Err(Error::Config("scenario slice count mismatch".into()));
        }
        Ok(())
    }

    pub fn to_file(&self) -> ScenarioFile {
        ScenarioFile {
            topology: self.topology.clone(),
            slices: self.slices.clone(),
            mask: MaskSource::Inline {
                values: self.mask.values.clone(),
            },
        }
    }
}

/// On-disk scenario document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub topology: Topology,
    pub slices: Vec<SliceSpec>,
    pub mask: MaskSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MaskSource {
    /// Rows are slices, columns timestamps.
    Inline { values: Vec<Vec<f64>> },
    /// CSV with one row per slice, one column per timestamp, no header.
    Csv { csv: PathBuf },
    /// Synthetic diurnal pattern.
    Diurnal { days: usize, peak_hours: Vec<f64> },
}

impl ScenarioFile {
    pub fn into_scenario(self, base_dir: Option<&Path>) -> Result<Scenario> {
        let mask = match self.mask {
            MaskSource::Inline { values } => TrafficMask::new(values)?,
            MaskSource::Csv { csv } => {
                let path = match base_dir {
                    Some(dir) if csv.is_relative() => dir.join(&csv),
                    _ => csv,
                };
                read_mask_csv(&path)?
            }
            MaskSource::Diurnal { days, peak_hours } => diurnal_mask(&peak_hours, days),
        };
        let scenario = Scenario {
            topology: self.topology,
            slices: self.slices,
            mask,
        };
        scenario.validate()?;
        Ok(scenario)
    }
}

pub fn read_mask_csv(path: &Path) -> Result<TrafficMask> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::parse(path, e))?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::parse(path, e))?;
        let row = record
            .iter()
            .map(|field| field.parse::<f64>().map_err(|e| Error::parse(path, e)))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    TrafficMask::new(rows)
}

pub fn write_mask_csv(mask: &TrafficMask, path: &Path) -> Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| Error::parse(path, e))?;
    for row in &mask.values {
        writer
            .write_record(row.iter().map(|v| v.to_string()))
            .map_err(|e| Error::parse(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Diurnal per-slice traffic mask over `days` days. Each slice follows a
/// raised-cosine daily profile peaking at its own hour, damped on weekends
/// and perturbed by a small fixed-seed jitter.
pub fn diurnal_mask(peak_hours: &[f64], days: usize) -> TrafficMask {
    use rand::SeedableRng;
    let period = days * SLOTS_PER_DAY;
    let mut jitter_rng = SimRng::seed_from_u64(0x2016);
    let values = peak_hours
        .iter()
        .enumerate()
        .map(|(n, &peak)| {
            (0..period)
                .map(|t| {
                    let hour = (t % SLOTS_PER_DAY) as f64 * 24.0 / SLOTS_PER_DAY as f64;
                    let day = t / SLOTS_PER_DAY;
                    let weekend = if day % 7 >= 5 { 0.8 } else { 1.0 };
                    let phase = 2.0 * PI * (hour - peak) / 24.0;
                    let profile = 0.5 + 0.5 * phase.cos();
                    let sharp = profile.powf(1.5 + 0.25 * n as f64);
                    let jitter: f64 = jitter_rng.random_range(-0.04..0.04);
                    (0.15 + 0.85 * weekend * sharp + jitter).clamp(0.0, 1.0)
                })
                .collect()
        })
        .collect();
    TrafficMask { values }
}

/// 12 cells on 4 three-sector sites, 4 slices, 20 MHz, 16 user groups of at
/// most 10 users, three-week mask. Cells 1 and 5 get weaker serving gain and
/// stronger interference to model heterogeneous channel quality.
pub fn default_scenario() -> Scenario {
    const SITES: usize = 4;
    const SECTORS: usize = 3;
    let k_cells = SITES * SECTORS;
    let site_xy = |s: usize| ((s % 2) as i32, (s / 2) as i32);
    let mut gain = vec![vec![0.0; k_cells]; k_cells];
    let mut neighbors = vec![Vec::new(); k_cells];
    for k in 0..k_cells {
        for j in 0..k_cells {
            let (sk, sj) = (k / SECTORS, j / SECTORS);
            let (xk, yk) = site_xy(sk);
            let (xj, yj) = site_xy(sj);
            let hops = (xk - xj).abs() + (yk - yj).abs();
            gain[k][j] = match (k == j, hops) {
                (true, _) => 1.0,
                (false, 0) => 0.06,
                (false, 1) => 0.015,
                _ => 0.005,
            };
            if k != j && hops <= 1 {
                neighbors[k].push(j);
            }
        }
    }
    for &weak in &[1usize, 5] {
        for j in 0..k_cells {
            gain[weak][j] = if j == weak { 0.55 } else { gain[weak][j] * 1.8 };
        }
    }
    // Each slice has one group of 10 users per site, split over the sectors.
    let splits: [[u32; 3]; 4] = [[4, 3, 3], [3, 4, 3], [3, 3, 4], [2, 4, 4]];
    let mut nominal_users = vec![vec![0u32; 4]; k_cells];
    for site in 0..SITES {
        for n in 0..4 {
            let split = splits[(site + n) % 4];
            for sector in 0..SECTORS {
                nominal_users[site * SECTORS + sector][n] = split[sector];
            }
        }
    }
    let topology = Topology {
        num_cells: k_cells,
        num_slices: 4,
        neighbors,
        gain,
        bandwidth_hz: 20e6,
        tx_power_w: 1.0,
        noise_w: 1e-3,
        nominal_users,
        shadowing_std_db: 1.0,
    };
    let slice = |thr_mbps: f64, delay_ms: f64, packet_bits: f64| SliceSpec {
        thr_req: thr_mbps * 1e6,
        delay_req: delay_ms * 1e-3,
        offered_rate: 1.25 * thr_mbps * 1e6,
        max_users_per_group: 10,
        packet_bits,
    };
    let slices = vec![
        slice(4.0, 1.0, 2500.0),
        slice(1.0, 1.5, 600.0),
        slice(3.0, 2.0, 4800.0),
        slice(0.5, 1.0, 160.0),
    ];
    let mask = diurnal_mask(&[20.0, 12.0, 15.0, 9.0], 21);
    Scenario {
        topology,
        slices,
        mask,
    }
}

/// Desk-scale scenario: one three-sector site, two slices. Cell 2 is the
/// heterogeneous (weak) cell.
pub fn small_scenario() -> Scenario {
    let k_cells = 3;
    let mut gain = vec![vec![0.08; k_cells]; k_cells];
    for (k, row) in gain.iter_mut().enumerate() {
        row[k] = 1.0;
    }
    for j in 0..k_cells {
        gain[2][j] = if j == 2 { 0.6 } else { gain[2][j] * 1.6 };
    }
    let neighbors = (0..k_cells)
        .map(|k| (0..k_cells).filter(|&j| j != k).collect())
        .collect();
    let topology = Topology {
        num_cells: k_cells,
        num_slices: 2,
        neighbors,
        gain,
        bandwidth_hz: 20e6,
        tx_power_w: 1.0,
        noise_w: 1e-3,
        nominal_users: vec![vec![6, 9], vec![5, 8], vec![5, 7]],
        shadowing_std_db: 1.0,
    };
    // A delay-critical low-rate slice next to a rate-heavy, delay-tolerant
    // one, so demand-proportional sharing is clearly suboptimal under load.
    let slices = vec![
        SliceSpec {
            thr_req: 1e6,
            delay_req: 1e-3,
            offered_rate: 1.25e6,
            max_users_per_group: 10,
            packet_bits: 1000.0,
        },
        SliceSpec {
            thr_req: 4e6,
            delay_req: 5e-3,
            offered_rate: 5e6,
            max_users_per_group: 10,
            packet_bits: 4000.0,
        },
    ];
    let mask = diurnal_mask(&[20.0, 12.0], 21);
    Scenario {
        topology,
        slices,
        mask,
    }
}
