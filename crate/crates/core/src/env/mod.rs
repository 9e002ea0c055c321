//! Multi-cell multi-slice network simulator.
//!
//! KPIs come from a load-coupled interference model: a cell's spectral
//! efficiency depends on the resource activity of the cells that interfere
//! with it, and each slice's load depends on that spectral efficiency. The
//! pair is solved as a monotone fixed point every timestamp. Throughput is
//! the served share of offered demand and delay follows a queueing blow-up in
//! the slice utilization.

mod scenario;

pub use scenario::{
    default_scenario, diurnal_mask, read_mask_csv, small_scenario, write_mask_csv, MaskSource,
    Scenario, ScenarioFile, SLOTS_PER_DAY,
};

use log::warn;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::mdp::PartitionAction;
use crate::rng::{stream_rng, SimRng, Stream};

/// Fixed-point stopping tolerance on the max absolute load change.
pub const FIXED_POINT_TOL: f64 = 1e-6;
/// Fixed-point iteration cap.
pub const FIXED_POINT_MAX_ITERS: usize = 100;
/// Utilization guard of the delay model.
pub const UTILIZATION_GUARD: f64 = 1e-3;
/// Rate/capacity guard (bits/s) used in divisions.
pub const RATE_GUARD: f64 = 1e-9;
/// Tolerance used when checking that an action lies on the simplex.
pub const SIMPLEX_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Topology {
    pub num_cells: usize,
    pub num_slices: usize,
    /// Symmetric neighbor relation used for message exchange.
    pub neighbors: Vec<Vec<usize>>,
    /// `gain[k][j]`: mean gain from cell j's transmitter to cell k's users.
    pub gain: Vec<Vec<f64>>,
    pub bandwidth_hz: f64,
    pub tx_power_w: f64,
    pub noise_w: f64,
    /// Nominal per-cell per-slice user group size `U[k][n]`, scaled by the mask.
    pub nominal_users: Vec<Vec<u32>>,
    /// Log-normal shadowing on the serving gain, redrawn every timestamp.
    #[serde(default)]
    pub shadowing_std_db: f64,
}

impl Topology {
    pub fn validate(&self) -> Result<()> {
        let k = self.num_cells;
        if k == 0 || self.num_slices == 0 {
            return Err(Error::Config(
                "topology needs at least one cell and one slice".into(),
            ));
        }
        check_dim("topology neighbor sets", k, self.neighbors.len())?;
        check_dim("topology gain rows", k, self.gain.len())?;
        check_dim("topology nominal user rows", k, self.nominal_users.len())?;
        for (cell, row) in self.gain.iter().enumerate() {
            check_dim("topology gain columns", k, row.len())?;
            for (j, &g) in row.iter().enumerate() {
                if !(g > 0.0 && g <= 1.0) {
                    return Err(Error::Config(format!(
                        "gain[{cell}][{j}] = {g} outside (0, 1]"
                    )));
                }
                if j != cell && g > row[cell] {
                    return Err(Error::Config(format!(
                        "cross gain[{cell}][{j}] exceeds serving gain"
                    )));
                }
            }
        }
        for (cell, set) in self.neighbors.iter().enumerate() {
            for &j in set {
                if j >= k {
                    return Err(Error::Config(format!(
                        "neighbor {j} of cell {cell} out of range"
                    )));
                }
                if j == cell {
                    return Err(Error::Config(format!(
                        "cell {cell} lists itself as a neighbor"
                    )));
                }
                if !self.neighbors[j].contains(&cell) {
                    return Err(Error::Config(format!(
                        "neighbor relation not symmetric between {cell} and {j}"
                    )));
                }
            }
        }
        for row in &self.nominal_users {
            check_dim("topology nominal user columns", self.num_slices, row.len())?;
        }
        for (name, v) in [
            ("bandwidth_hz", self.bandwidth_hz),
            ("tx_power_w", self.tx_power_w),
            ("noise_w", self.noise_w),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.shadowing_std_db >= 0.0 && self.shadowing_std_db.is_finite()) {
            return Err(Error::Config("shadowing_std_db must be nonnegative".into()));
        }
        Ok(())
    }

    /// Spectral efficiency of cell `k` given every cell's resource activity.
    pub fn spectral_efficiency(&self, k: usize, activity: &[f64], shadow: f64) -> f64 {
        let p = self.tx_power_w;
        let interference: f64 = (0..self.num_cells)
            .filter(|&j| j != k)
            .map(|j| activity[j] * p * self.gain[k][j])
            .sum();
        let sinr = p * self.gain[k][k] * shadow / (interference + self.noise_w);
        (1.0 + sinr).log2()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceSpec {
    /// Per-user throughput requirement, bits/s.
    pub thr_req: f64,
    /// Delay requirement, seconds.
    pub delay_req: f64,
    /// Per-user offered rate, bits/s.
    pub offered_rate: f64,
    pub max_users_per_group: u32,
    /// Packet size, bits.
    pub packet_bits: f64,
}

impl SliceSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if ok(self.thr_req)
            && ok(self.delay_req)
            && ok(self.offered_rate)
            && ok(self.packet_bits)
            && self.max_users_per_group > 0
        {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "slice fields must be strictly positive: {self:?}"
            )))
        }
    }
}

/// Per-slice time-dependent traffic scaling, repeated with `period`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficMask {
    /// `values[n][t]` for `t < period`.
    pub values: Vec<Vec<f64>>,
}

impl TrafficMask {
    pub fn new(values: Vec<Vec<f64>>) -> Result<Self> {
        let mask = TrafficMask { values };
        mask.validate()?;
        Ok(mask)
    }

    pub fn validate(&self) -> Result<()> {
        let period = self.period();
        if self.values.is_empty() || period == 0 {
            return Err(Error::Config("traffic mask is empty".into()));
        }
        for row in &self.values {
            check_dim("traffic mask row length", period, row.len())?;
            if row.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Config(
                    "traffic mask values must lie in [0, 1]".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn num_slices(&self) -> usize {
        self.values.len()
    }

    pub fn period(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn value(&self, slice: usize, t: usize) -> f64 {
        let row = &self.values[slice];
        row[t % row.len()]
    }
}

/// Per-cell per-slice KPIs for one timestamp. Indexed `k * N + n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiReport {
    pub t: usize,
    pub num_cells: usize,
    pub num_slices: usize,
    /// Average per-user throughput, bits/s.
    pub throughput: Vec<f64>,
    /// Delay, seconds.
    pub delay: Vec<f64>,
    /// Fraction of the cell's resource used by the slice.
    pub load: Vec<f64>,
    pub active_users: Vec<u32>,
    /// Offered demand `u * lambda`, bits/s.
    pub demand: Vec<f64>,
    /// Per-cell spectral efficiency at the fixed point, bit/s/Hz.
    pub spectral_efficiency: Vec<f64>,
    pub fixed_point_iterations: usize,
    pub converged: bool,
}

impl KpiReport {
    #[inline]
    fn idx(&self, k: usize, n: usize) -> usize {
        k * self.num_slices + n
    }
    pub fn throughput(&self, k: usize, n: usize) -> f64 {
        self.throughput[self.idx(k, n)]
    }
    pub fn delay(&self, k: usize, n: usize) -> f64 {
        self.delay[self.idx(k, n)]
    }
    pub fn load(&self, k: usize, n: usize) -> f64 {
        self.load[self.idx(k, n)]
    }
    pub fn active_users(&self, k: usize, n: usize) -> u32 {
        self.active_users[self.idx(k, n)]
    }
    pub fn demand(&self, k: usize, n: usize) -> f64 {
        self.demand[self.idx(k, n)]
    }
    pub fn cell_loads(&self, k: usize) -> &[f64] {
        &self.load[k * self.num_slices..(k + 1) * self.num_slices]
    }
    pub fn cell_demand(&self, k: usize) -> &[f64] {
        &self.demand[k * self.num_slices..(k + 1) * self.num_slices]
    }
}

/// Result of the load/efficiency fixed point.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPoint {
    /// `loads[k * N + n]`
    pub loads: Vec<f64>,
    pub spectral_efficiency: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Solves `l = min(a, D / (B * SE(l)))` by iterating from zero load. The map
/// is monotone in the loads, so the iterates increase towards the least fixed
/// point and stay inside `[0, a]`.
pub fn solve_load_fixed_point(
    topology: &Topology,
    demand: &[f64],
    actions: &[PartitionAction],
    shadow: &[f64],
) -> FixedPoint {
    let k_cells = topology.num_cells;
    let n_slices = topology.num_slices;
    let bw = topology.bandwidth_hz;
    let mut loads = vec![0.0; k_cells * n_slices];
    let mut se = vec![0.0; k_cells];
    let mut activity = vec![0.0; k_cells];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < FIXED_POINT_MAX_ITERS {
        iterations += 1;
        for k in 0..k_cells {
            activity[k] = loads[k * n_slices..(k + 1) * n_slices].iter().sum();
        }
        let mut max_change: f64 = 0.0;
        for k in 0..k_cells {
            se[k] = topology.spectral_efficiency(k, &activity, shadow[k]);
            let capacity = bw * se[k];
            for n in 0..n_slices {
                let i = k * n_slices + n;
                let a = actions[k].share(n);
                let next = a.min(demand[i] / capacity.max(RATE_GUARD));
                max_change = max_change.max((next - loads[i]).abs());
                loads[i] = next;
            }
        }
        if max_change < FIXED_POINT_TOL {
            converged = true;
            break;
        }
    }
    if converged {
        // Report the efficiency consistent with the final loads.
        for k in 0..k_cells {
            activity[k] = loads[k * n_slices..(k + 1) * n_slices].iter().sum();
        }
        for k in 0..k_cells {
            se[k] = topology.spectral_efficiency(k, &activity, shadow[k]);
        }
    }
    FixedPoint {
        loads,
        spectral_efficiency: se,
        iterations,
        converged,
    }
}

/// Per-slice throughput and delay from allocation, demand and capacity.
/// Returns `(served_rate, per_user_throughput, delay)`.
pub fn slice_service(
    share: f64,
    demand: f64,
    users: u32,
    capacity: f64,
    packet_bits: f64,
) -> (f64, f64, f64) {
    let allocated = share * capacity;
    let served = demand.min(allocated);
    let throughput = served / f64::from(users.max(1));
    let utilization = demand / allocated.max(RATE_GUARD);
    let headroom = (1.0 - utilization.min(1.0 - UTILIZATION_GUARD)).max(UTILIZATION_GUARD);
    let delay = (packet_bits / throughput.max(RATE_GUARD)) / headroom;
    (served, throughput, delay)
}

fn round_half_up(x: f64) -> u32 {
    (x + 0.5).floor() as u32
}

/// A seeded simulator instance. Single-threaded; independent instances may
/// live on separate threads.
#[derive(Debug, Clone)]
pub struct Env {
    topology: Topology,
    slices: Vec<SliceSpec>,
    mask: TrafficMask,
    rng: SimRng,
    t: usize,
    steps: usize,
    initial: KpiReport,
    last: Option<KpiReport>,
}

impl Env {
    pub fn reset(
        topology: Topology,
        slices: Vec<SliceSpec>,
        mask: TrafficMask,
        seed: u64,
    ) -> Result<Self> {
        topology.validate()?;
        mask.validate()?;
        if slices.len() != topology.num_slices {
            return Err(Error::Config(format!(
                "{} slice specs for a topology with {} slices",
                slices.len(),
                topology.num_slices
            )));
        }
        if mask.num_slices() != topology.num_slices {
            return Err(Error::Config(format!(
                "traffic mask has {} rows, expected {}",
                mask.num_slices(),
                topology.num_slices
            )));
        }
        for s in &slices {
            s.validate()?;
        }
        let mut env = Env {
            rng: stream_rng(seed, Stream::Env),
            initial: KpiReport {
                t: 0,
                num_cells: 0,
                num_slices: 0,
                throughput: vec![],
                delay: vec![],
                load: vec![],
                active_users: vec![],
                demand: vec![],
                spectral_efficiency: vec![],
                fixed_point_iterations: 0,
                converged: true,
            },
            topology,
            slices,
            mask,
            t: 0,
            steps: 0,
            last: None,
        };
        let uniform = vec![PartitionAction::uniform(env.num_slices()); env.num_cells()];
        env.initial = env.evaluate(&uniform);
        Ok(env)
    }

    pub fn from_scenario(scenario: &Scenario, seed: u64) -> Result<Self> {
        Env::reset(
            scenario.topology.clone(),
            scenario.slices.clone(),
            scenario.mask.clone(),
            seed,
        )
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }
    pub fn slices(&self) -> &[SliceSpec] {
        &self.slices
    }
    pub fn mask(&self) -> &TrafficMask {
        &self.mask
    }
    pub fn num_cells(&self) -> usize {
        self.topology.num_cells
    }
    pub fn num_slices(&self) -> usize {
        self.topology.num_slices
    }
    /// Current timestamp (the slot the next `step` will simulate).
    pub fn clock(&self) -> usize {
        self.t
    }
    /// Number of `step` calls since reset.
    pub fn steps_taken(&self) -> usize {
        self.steps
    }
    /// Warm-up report computed at reset with a uniform partition; the first
    /// observation every scheme sees.
    pub fn initial_report(&self) -> &KpiReport {
        &self.initial
    }

    /// Report of the most recent step, or the warm-up report before the
    /// first step. This is what agents observe before acting.
    pub fn last_report(&self) -> &KpiReport {
        self.last.as_ref().unwrap_or(&self.initial)
    }

    /// Active users per (k, n) at the current timestamp.
    pub fn active_users(&self) -> Vec<u32> {
        let n_slices = self.num_slices();
        let mut users = Vec::with_capacity(self.num_cells() * n_slices);
        for k in 0..self.num_cells() {
            for n in 0..n_slices {
                let tau = self.mask.value(n, self.t);
                users.push(round_half_up(
                    tau * f64::from(self.topology.nominal_users[k][n]),
                ));
            }
        }
        users
    }

    /// Simulates the current slot under `actions` and advances the clock.
    pub fn step(&mut self, actions: &[PartitionAction]) -> Result<KpiReport> {
        check_dim("env step actions", self.num_cells(), actions.len())?;
        for (k, a) in actions.iter().enumerate() {
            check_dim("env step action length", self.num_slices(), a.len())?;
            if !a.is_on_simplex(SIMPLEX_TOL) {
                return Err(Error::Contract(format!(
                    "action of cell {k} is off the simplex: {:?}",
                    a.as_slice()
                )));
            }
        }
        let report = self.evaluate(actions);
        self.t += 1;
        self.steps += 1;
        self.last = Some(report.clone());
        Ok(report)
    }

    fn evaluate(&mut self, actions: &[PartitionAction]) -> KpiReport {
        let k_cells = self.num_cells();
        let n_slices = self.num_slices();
        let users = self.active_users();
        let demand: Vec<f64> = users
            .iter()
            .enumerate()
            .map(|(i, &u)| f64::from(u) * self.slices[i % n_slices].offered_rate)
            .collect();
        let shadow: Vec<f64> = (0..k_cells)
            .map(|_| {
                if self.topology.shadowing_std_db > 0.0 {
                    let x: f64 = self.rng.sample(StandardNormal);
                    10f64.powf(x * self.topology.shadowing_std_db / 10.0)
                } else {
                    1.0
                }
            })
            .collect();
        let fp = solve_load_fixed_point(&self.topology, &demand, actions, &shadow);
        if !fp.converged {
            warn!(
                "load fixed point did not converge in {} iterations at t={}",
                FIXED_POINT_MAX_ITERS, self.t
            );
        }
        let mut throughput = vec![0.0; k_cells * n_slices];
        let mut delay = vec![0.0; k_cells * n_slices];
        let mut load = fp.loads.clone();
        for k in 0..k_cells {
            let capacity = self.topology.bandwidth_hz * fp.spectral_efficiency[k];
            for n in 0..n_slices {
                let i = k * n_slices + n;
                let spec = &self.slices[n];
                if users[i] == 0 {
                    throughput[i] = spec.thr_req;
                    delay[i] = spec.delay_req;
                    load[i] = 0.0;
                    continue;
                }
                let (_, phi, d) = slice_service(
                    actions[k].share(n),
                    demand[i],
                    users[i],
                    capacity,
                    spec.packet_bits,
                );
                throughput[i] = phi;
                delay[i] = d;
            }
        }
        KpiReport {
            t: self.t,
            num_cells: k_cells,
            num_slices: n_slices,
            throughput,
            delay,
            load,
            active_users: users,
            demand,
            spectral_efficiency: fp.spectral_efficiency,
            fixed_point_iterations: fp.iterations,
            converged: fp.converged,
        }
    }
}
