//! States, actions, neighbor messages and rewards built from raw KPIs.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::env::{KpiReport, SliceSpec};
use crate::error::{Error, Result};

/// Floor applied to delays before forming `d* / d`.
pub const DELAY_FLOOR: f64 = 1e-6;

/// Per-cell resource partition on the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PartitionAction(Vec<f64>);

impl PartitionAction {
    /// Builds an action, rejecting vectors further than 1e-6 from the simplex.
    pub fn new(shares: Vec<f64>) -> Result<Self> {
        let action = PartitionAction(shares);
        if action.is_on_simplex(crate::env::SIMPLEX_TOL) {
            Ok(action)
        } else {
            Err(Error::Contract(format!("not a partition: {:?}", action.0)))
        }
    }

    pub fn new_unchecked(shares: Vec<f64>) -> Self {
        PartitionAction(shares)
    }

    pub fn uniform(num_slices: usize) -> Self {
        PartitionAction(vec![1.0 / num_slices as f64; num_slices])
    }

    /// Clamps negatives to zero and rescales by the sum; uniform if the sum
    /// vanishes.
    pub fn normalized(mut shares: Vec<f64>) -> Self {
        for s in shares.iter_mut() {
            if !(*s > 0.0) {
                *s = 0.0;
            }
        }
        let total: f64 = shares.iter().sum();
        if total > 0.0 && total.is_finite() {
            shares.iter_mut().for_each(|s| *s /= total);
            PartitionAction(shares)
        } else {
            PartitionAction::uniform(shares.len())
        }
    }

    pub fn is_on_simplex(&self, tol: f64) -> bool {
        !self.0.is_empty()
            && self
                .0
                .iter()
                .all(|&a| a.is_finite() && a >= -tol && a <= 1.0 + tol)
            && (self.0.iter().sum::<f64>() - 1.0).abs() <= tol
    }

    pub fn share(&self, n: usize) -> f64 {
        self.0[n].max(0.0)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardKind {
    MaxMin,
    LogUtility,
}

impl fmt::Display for RewardKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RewardKind::MaxMin => "maxmin",
            RewardKind::LogUtility => "log",
        })
    }
}

impl FromStr for RewardKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "maxmin" | "max-min" => Ok(RewardKind::MaxMin),
            "log" | "log-utility" | "logutility" => Ok(RewardKind::LogUtility),
            other => Err(Error::Config(format!("unknown reward kind '{other}'"))),
        }
    }
}

/// Shares proportional to each slice's traffic demand in `kpi`; uniform
/// when the cell has no demand.
pub fn demand_proportional_action(kpi: &KpiReport, cell: usize) -> PartitionAction {
    let demand = kpi.cell_demand(cell);
    let total: f64 = demand.iter().sum();
    if total > 0.0 {
        PartitionAction::new_unchecked(demand.iter().map(|d| d / total).collect())
    } else {
        PartitionAction::uniform(demand.len())
    }
}

/// Fixed normalizers applied to the raw KPIs in a local state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateScale {
    max_thr_req: f64,
    max_delay_req: f64,
    max_users: f64,
}

impl StateScale {
    pub fn from_slices(slices: &[SliceSpec]) -> Self {
        let max = |f: fn(&SliceSpec) -> f64| slices.iter().map(f).fold(0.0, f64::max);
        StateScale {
            max_thr_req: max(|s| s.thr_req),
            max_delay_req: max(|s| s.delay_req),
            max_users: max(|s| f64::from(s.max_users_per_group)),
        }
    }
}

/// Normalized local observation of one cell, `5N` entries in the order
/// (throughput, load, users, throughput requirement, delay requirement),
/// each block indexed by slice.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalState(Vec<f64>);

impl LocalState {
    pub fn dim(num_slices: usize) -> usize {
        5 * num_slices
    }
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

pub fn build_local_state(kpi: &KpiReport, cell: usize, slices: &[SliceSpec]) -> LocalState {
    let scale = StateScale::from_slices(slices);
    build_local_state_scaled(kpi, cell, slices, &scale)
}

pub fn build_local_state_scaled(
    kpi: &KpiReport,
    cell: usize,
    slices: &[SliceSpec],
    scale: &StateScale,
) -> LocalState {
    let n_slices = slices.len();
    let mut v = Vec::with_capacity(5 * n_slices);
    v.extend((0..n_slices).map(|n| kpi.throughput(cell, n) / scale.max_thr_req));
    v.extend((0..n_slices).map(|n| kpi.load(cell, n)));
    v.extend((0..n_slices).map(|n| f64::from(kpi.active_users(cell, n)) / scale.max_users));
    v.extend(slices.iter().map(|s| s.thr_req / scale.max_thr_req));
    v.extend(slices.iter().map(|s| s.delay_req / scale.max_delay_req));
    LocalState(v)
}

/// Concatenation of every cell's local state (centralized observation).
pub fn build_global_state(kpi: &KpiReport, slices: &[SliceSpec]) -> Vec<f64> {
    let scale = StateScale::from_slices(slices);
    (0..kpi.num_cells)
        .flat_map(|k| build_local_state_scaled(kpi, k, slices, &scale).into_inner())
        .collect()
}

/// Raw neighbor loads and their per-slice average.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborMessage {
    /// `raw[i * N + n]`: load of the i-th listed neighbor on slice n.
    pub raw: Vec<f64>,
    /// Average per-slice neighbor load, length N.
    pub extracted: Vec<f64>,
    /// Set when the cell has no neighbors; `extracted` is then all zeros.
    pub degenerate: bool,
}

pub fn extract_message(kpi: &KpiReport, cell: usize, neighbors: &[usize]) -> NeighborMessage {
    let n_slices = kpi.num_slices;
    debug_assert!(cell < kpi.num_cells);
    let raw: Vec<f64> = neighbors
        .iter()
        .flat_map(|&i| kpi.cell_loads(i).iter().copied())
        .collect();
    if neighbors.is_empty() {
        return NeighborMessage {
            raw,
            extracted: vec![0.0; n_slices],
            degenerate: true,
        };
    }
    let count = neighbors.len() as f64;
    let extracted = (0..n_slices)
        .map(|n| neighbors.iter().map(|&i| kpi.load(i, n)).sum::<f64>() / count)
        .collect();
    NeighborMessage {
        raw,
        extracted,
        degenerate: false,
    }
}

/// Throughput and delay satisfaction ratios `(phi / phi*, d* / d)`.
pub fn satisfaction(kpi: &KpiReport, cell: usize, slice: usize, spec: &SliceSpec) -> (f64, f64) {
    let thr = kpi.throughput(cell, slice) / spec.thr_req;
    let delay = spec.delay_req / kpi.delay(cell, slice).max(DELAY_FLOOR);
    (thr, delay)
}

/// Service satisfaction level `min(phi / phi*, d* / d)`.
pub fn service_level(kpi: &KpiReport, cell: usize, slice: usize, spec: &SliceSpec) -> f64 {
    let (thr, delay) = satisfaction(kpi, cell, slice, spec);
    thr.min(delay)
}

/// Reward from per-slice service levels of one cell.
pub fn reward_from_levels(levels: &[f64], kind: RewardKind) -> f64 {
    match kind {
        RewardKind::MaxMin => levels.iter().fold(1.0, |acc: f64, &s| acc.min(s.min(1.0))),
        RewardKind::LogUtility => {
            levels.iter().map(|&s| (s + 1.0).log2()).sum::<f64>() / levels.len() as f64
        }
    }
}

pub fn local_reward(
    kpi: &KpiReport,
    cell: usize,
    slices: &[SliceSpec],
    kind: RewardKind,
) -> Result<f64> {
    let levels = (0..slices.len())
        .map(|n| {
            let phi = kpi.throughput(cell, n);
            let d = kpi.delay(cell, n);
            if !phi.is_finite() || !d.is_finite() {
                return Err(Error::NonFinite("kpi report"));
            }
            Ok(service_level(kpi, cell, n, &slices[n]))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(reward_from_levels(&levels, kind))
}

/// Combines local rewards: minimum for max-min, mean for log utility.
pub fn combine_local_rewards(locals: &[f64], kind: RewardKind) -> f64 {
    match kind {
        RewardKind::MaxMin => locals.iter().copied().fold(f64::INFINITY, f64::min),
        RewardKind::LogUtility => locals.iter().sum::<f64>() / locals.len() as f64,
    }
}

pub fn global_reward(kpi: &KpiReport, slices: &[SliceSpec], kind: RewardKind) -> Result<f64> {
    let locals = (0..kpi.num_cells)
        .map(|k| local_reward(kpi, k, slices, kind))
        .collect::<Result<Vec<_>>>()?;
    Ok(combine_local_rewards(&locals, kind))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(num_cells: usize, num_slices: usize) -> KpiReport {
        let len = num_cells * num_slices;
        KpiReport {
            t: 0,
            num_cells,
            num_slices,
            throughput: vec![0.0; len],
            delay: vec![1.0; len],
            load: vec![0.0; len],
            active_users: vec![0; len],
            demand: vec![0.0; len],
            spectral_efficiency: vec![1.0; num_cells],
            fixed_point_iterations: 1,
            converged: true,
        }
    }

    fn slices(n: usize) -> Vec<SliceSpec> {
        crate::env::default_scenario()
            .slices
            .into_iter()
            .cycle()
            .take(n)
            .collect()
    }

    /// A report whose cell-0 service levels equal `levels` exactly.
    fn report_with_levels(levels: &[f64], specs: &[SliceSpec]) -> KpiReport {
        let mut r = report(1, levels.len());
        for (n, &s) in levels.iter().enumerate() {
            r.throughput[n] = s * specs[n].thr_req;
            r.delay[n] = specs[n].delay_req / (s + 1.0);
        }
        r
    }

    #[test]
    fn local_state_dimensions() {
        let s = slices(4);
        let st = build_local_state(&report(12, 4), 3, &s);
        assert_eq!(st.as_slice().len(), 20);
        assert_eq!(build_global_state(&report(12, 4), &s).len(), 240);
    }

    #[test]
    fn zero_kpis_keep_only_requirements() {
        let s = slices(4);
        let st = build_local_state(&report(1, 4), 0, &s).into_inner();
        assert!(st[..12].iter().all(|&v| v == 0.0));
        assert_eq!(&st[12..16], &[1.0, 0.25, 0.75, 0.125]);
        assert_eq!(&st[16..20], &[0.5, 0.75, 1.0, 0.5]);
    }

    #[test]
    fn message_is_mean_of_neighbor_loads() {
        let mut r = report(4, 2);
        r.load[2] = 0.2; // cell 1 slice 0
        r.load[4] = 0.4; // cell 2 slice 0
        let m = extract_message(&r, 0, &[1, 2]);
        assert!((m.extracted[0] - 0.3).abs() < 1e-12);
        assert_eq!(m.raw.len(), 4);

        r.load[2] = 0.1;
        r.load[4] = 0.2;
        r.load[6] = 0.6;
        let m = extract_message(&r, 0, &[1, 2, 3]);
        assert!((m.extracted[0] - 0.3).abs() < 1e-12);
        assert_eq!(m.extracted[1], 0.0);
    }

    #[test]
    fn empty_neighbor_set_is_degenerate() {
        let m = extract_message(&report(1, 3), 0, &[]);
        assert!(m.degenerate);
        assert_eq!(m.extracted, vec![0.0; 3]);
    }

    #[test]
    fn reward_examples() {
        let s = slices(2);
        let exact = report_with_levels(&[1.0, 1.0], &s);
        assert_eq!(
            local_reward(&exact, 0, &s, RewardKind::MaxMin).unwrap(),
            1.0
        );
        assert_eq!(
            local_reward(&exact, 0, &s, RewardKind::LogUtility).unwrap(),
            1.0
        );
        assert_eq!(
            reward_from_levels(&[0.5, 2.0, 3.0], RewardKind::MaxMin),
            0.5
        );
        assert_eq!(reward_from_levels(&[1.0, 3.0], RewardKind::LogUtility), 1.5);
    }

    #[test]
    fn nonfinite_kpi_is_rejected() {
        let s = slices(1);
        let mut r = report(1, 1);
        r.throughput[0] = f64::NAN;
        assert!(matches!(
            local_reward(&r, 0, &s, RewardKind::MaxMin),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn global_composition() {
        let locals = [0.9, 0.5, 1.0];
        assert_eq!(combine_local_rewards(&locals, RewardKind::MaxMin), 0.5);
        assert!((combine_local_rewards(&locals, RewardKind::LogUtility) - 0.8).abs() < 1e-15);
        assert_eq!(combine_local_rewards(&[1.0; 4], RewardKind::MaxMin), 1.0);
    }

    #[test]
    fn over_provisioning_does_not_raise_maxmin() {
        let a = reward_from_levels(&[0.7, 1.2], RewardKind::MaxMin);
        let b = reward_from_levels(&[0.7, 5.0], RewardKind::MaxMin);
        assert_eq!(a, b);
    }

    #[test]
    fn normalized_action_handles_degenerate_input() {
        assert_eq!(
            PartitionAction::normalized(vec![0.0, 0.0]),
            PartitionAction::uniform(2)
        );
        let a = PartitionAction::normalized(vec![2.0, -1.0, 2.0]);
        assert_eq!(a.as_slice(), &[0.5, 0.0, 0.5]);
        assert!(PartitionAction::new(vec![0.6, 0.6]).is_err());
    }

    #[test]
    fn reward_kind_parsing() {
        assert_eq!("maxmin".parse::<RewardKind>().unwrap(), RewardKind::MaxMin);
        assert_eq!("log".parse::<RewardKind>().unwrap(), RewardKind::LogUtility);
        assert!("mean".parse::<RewardKind>().is_err());
    }
}
