//! Helpers shared by the integration tests and the acceptance runner.
#![allow(dead_code)]

use dirp_core::approx::{Activation, ParamSet};
use dirp_core::env::{SliceSpec, Topology, TrafficMask};
use dirp_core::mdp::PartitionAction;
use dirp_core::td3::Architecture;
use rand::Rng;

/// The four production networks: local actor/critic and centralized
/// actor/critic of the default 12-cell, 4-slice scenario.
pub fn production_networks<R: Rng>(rng: &mut R) -> Vec<(&'static str, ParamSet)> {
    let local = Architecture::local(20, 4, 4);
    let central = Architecture::central(240, 12, 4);
    let mut out = Vec::new();
    for (names, arch) in [
        (["local actor", "local critic"], local),
        (["central actor", "central critic"], central),
    ] {
        let actor = ParamSet::new(
            &arch.actor_sizes(),
            Activation::DecoupledSoftmax {
                groups: arch.groups,
            },
            rng,
        )
        .unwrap();
        let critic = ParamSet::new(&arch.critic_sizes(), Activation::Linear, rng).unwrap();
        out.push((names[0], actor));
        out.push((names[1], critic));
    }
    out
}

/// Relu activation pattern of every hidden unit, computed without the
/// library's forward pass.
fn relu_pattern(net: &ParamSet, x: &[f64]) -> Vec<bool> {
    let mut h = x.to_vec();
    let mut pattern = Vec::new();
    for layer in &net.layers {
        let z: Vec<f64> = (0..layer.outputs)
            .map(|o| {
                layer.bias[o]
                    + (0..layer.inputs)
                        .map(|i| layer.weights[o * layer.inputs + i] * h[i])
                        .sum::<f64>()
            })
            .collect();
        if matches!(layer.activation, Activation::Relu) {
            pattern.extend(z.iter().map(|&v| v > 0.0));
            h = z.into_iter().map(|v| v.max(0.0)).collect();
        } else {
            h = z;
        }
    }
    pattern
}

fn param_mut(net: &mut ParamSet, layer: usize, is_bias: bool, i: usize) -> &mut f64 {
    let layer = &mut net.layers[layer];
    if is_bias {
        &mut layer.bias[i]
    } else {
        &mut layer.weights[i]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Coordinates whose perturbation flipped a relu (not differentiable there).
    pub skipped: usize,
}

/// Relative error with a floor so that vanishing gradients are compared
/// absolutely.
pub fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Central-difference check of parameter and input gradients of the scalar
/// loss `c . f(x)`. Checks every parameter when `sample` is `None`, otherwise
/// `sample` randomly chosen parameters.
pub fn gradient_check<R: Rng>(
    net: &ParamSet,
    rng: &mut R,
    sample: Option<usize>,
    h: f64,
) -> GradCheck {
    let x: Vec<f64> = (0..net.input_dim())
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let c: Vec<f64> = (0..net.output_dim())
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let loss = |net: &ParamSet, x: &[f64]| -> f64 {
        net.predict(x)
            .unwrap()
            .iter()
            .zip(&c)
            .map(|(o, w)| o * w)
            .sum()
    };
    let (_, tape) = net.forward(&x).unwrap();
    let (grad, input_grad) = net.backward(&tape, &c).unwrap();
    let base_pattern = relu_pattern(net, &x);

    // (layer, is_bias, index)
    let mut coords: Vec<(usize, bool, usize)> = Vec::new();
    for (l, layer) in net.layers.iter().enumerate() {
        coords.extend((0..layer.weights.len()).map(|i| (l, false, i)));
        coords.extend((0..layer.bias.len()).map(|i| (l, true, i)));
    }
    if let Some(n) = sample {
        coords = (0..n)
            .map(|_| coords[rng.random_range(0..coords.len())])
            .collect();
    }

    let mut report = GradCheck {
        max_rel_error: 0.0,
        checked: 0,
        skipped: 0,
    };
    let mut probe = net.clone();
    for (l, is_bias, i) in coords {
        let orig = *param_mut(&mut probe, l, is_bias, i);
        *param_mut(&mut probe, l, is_bias, i) = orig + h;
        let plus_pattern = relu_pattern(&probe, &x);
        let plus = loss(&probe, &x);
        *param_mut(&mut probe, l, is_bias, i) = orig - h;
        let minus_pattern = relu_pattern(&probe, &x);
        let minus = loss(&probe, &x);
        *param_mut(&mut probe, l, is_bias, i) = orig;
        if plus_pattern != base_pattern || minus_pattern != base_pattern {
            report.skipped += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * h);
        let analytic = if is_bias {
            grad.bias[l][i]
        } else {
            grad.weights[l][i]
        };
        report.max_rel_error = report.max_rel_error.max(rel_error(analytic, numeric));
        report.checked += 1;
    }

    // Input gradient, used when the actor is trained through the critic.
    for i in 0..x.len().min(64) {
        let mut xp = x.clone();
        xp[i] += h;
        let mut xm = x.clone();
        xm[i] -= h;
        if relu_pattern(net, &xp) != base_pattern || relu_pattern(net, &xm) != base_pattern {
            report.skipped += 1;
            continue;
        }
        let numeric = (loss(net, &xp) - loss(net, &xm)) / (2.0 * h);
        report.max_rel_error = report.max_rel_error.max(rel_error(input_grad[i], numeric));
        report.checked += 1;
    }
    report
}

pub fn random_slice<R: Rng>(rng: &mut R) -> SliceSpec {
    SliceSpec {
        thr_req: rng.random_range(0.5e6..8e6),
        delay_req: rng.random_range(1e-3..20e-3),
        offered_rate: rng.random_range(0.5e6..8e6),
        max_users_per_group: rng.random_range(1..12),
        packet_bits: rng.random_range(500.0..12000.0),
    }
}

/// Fully connected 3-cell topology with random gains and `n` slices.
pub fn random_three_cell<R: Rng>(rng: &mut R, n: usize) -> Topology {
    let k = 3;
    let mut gain = vec![vec![0.0; k]; k];
    for (a, row) in gain.iter_mut().enumerate() {
        row[a] = rng.random_range(0.3..1.0);
        for b in 0..k {
            if b != a {
                row[b] = rng.random_range(0.001..0.3) * row[a];
            }
        }
    }
    Topology {
        num_cells: k,
        num_slices: n,
        neighbors: (0..k)
            .map(|a| (0..k).filter(|&b| b != a).collect())
            .collect(),
        gain,
        bandwidth_hz: rng.random_range(5e6..40e6),
        tx_power_w: rng.random_range(0.5..5.0),
        noise_w: rng.random_range(1e-3..1e-1),
        nominal_users: (0..k)
            .map(|_| (0..n).map(|_| rng.random_range(0..12)).collect())
            .collect(),
        shadowing_std_db: 0.0,
    }
}

pub fn random_action<R: Rng>(rng: &mut R, n: usize) -> PartitionAction {
    PartitionAction::normalized((0..n).map(|_| rng.random_range(0.01..1.0)).collect())
}

pub fn flat_mask(n: usize) -> TrafficMask {
    TrafficMask::new(vec![vec![1.0; 4]; n]).unwrap()
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

/// Report with the given per-(cell, slice) KPIs and one active user each.
pub fn report(
    k: usize,
    n: usize,
    throughput: Vec<f64>,
    delay: Vec<f64>,
    load: Vec<f64>,
    demand: Vec<f64>,
) -> dirp_core::env::KpiReport {
    dirp_core::env::KpiReport {
        t: 0,
        num_cells: k,
        num_slices: n,
        throughput,
        delay,
        load,
        active_users: vec![1; k * n],
        demand,
        spectral_efficiency: vec![1.0; k],
        fixed_point_iterations: 1,
        converged: true,
    }
}

/// Shannon efficiency written out from the interference model.
fn oracle_se(topo: &Topology, k: usize, activity: &[f64]) -> f64 {
    let mut interference = 0.0;
    for (j, a) in activity.iter().enumerate() {
        if j != k {
            interference += a * topo.tx_power_w * topo.gain[k][j];
        }
    }
    (1.0 + topo.tx_power_w * topo.gain[k][k] / (interference + topo.noise_w)).log2()
}

/// Solves `cases` random 3-cell load fixed points and checks convergence,
/// bounds and the fixed-point equation. Returns the largest iteration count.
pub fn fixed_point_oracle<R: Rng>(rng: &mut R, cases: usize) -> Result<usize, String> {
    use dirp_core::env::{solve_load_fixed_point, FIXED_POINT_MAX_ITERS};
    let mut max_iters = 0;
    for case in 0..cases {
        let n = rng.random_range(1..5);
        let topo = random_three_cell(rng, n);
        let actions: Vec<PartitionAction> = (0..3).map(|_| random_action(rng, n)).collect();
        let cap_alone = topo.bandwidth_hz * (1.0 + topo.tx_power_w / topo.noise_w).log2();
        let demand: Vec<f64> = (0..3 * n)
            .map(|_| rng.random_range(0.0..0.6) * cap_alone / n as f64)
            .collect();
        let fp = solve_load_fixed_point(&topo, &demand, &actions, &[1.0; 3]);
        if !fp.converged || fp.iterations >= FIXED_POINT_MAX_ITERS {
            return Err(format!(
                "case {case}: not converged after {} iterations",
                fp.iterations
            ));
        }
        max_iters = max_iters.max(fp.iterations);
        let activity: Vec<f64> = (0..3)
            .map(|k| fp.loads[k * n..(k + 1) * n].iter().sum())
            .collect();
        for k in 0..3 {
            let se = oracle_se(&topo, k, &activity);
            if (fp.spectral_efficiency[k] - se).abs() > 1e-9 * se {
                return Err(format!(
                    "case {case}: efficiency {} vs {se}",
                    fp.spectral_efficiency[k]
                ));
            }
            for s in 0..n {
                let l = fp.loads[k * n + s];
                let a = actions[k].share(s);
                if !(0.0..=1.0).contains(&l) || l > a + 1e-15 {
                    return Err(format!("case {case}: load {l} with share {a}"));
                }
                let expected = a.min(demand[k * n + s] / (topo.bandwidth_hz * se));
                if (l - expected).abs() >= 1e-5 {
                    return Err(format!(
                        "case {case}: fixed-point residual {:.3e}",
                        (l - expected).abs()
                    ));
                }
            }
        }
    }
    Ok(max_iters)
}

/// Steps random single-cell environments and compares throughput, load and
/// delay with the closed form. Returns the largest relative error.
pub fn single_cell_oracle<R: Rng>(rng: &mut R, cases: usize) -> Result<f64, String> {
    use dirp_core::env::Env;
    let mut worst: f64 = 0.0;
    for case in 0..cases {
        let mut topo = random_three_cell(rng, 1);
        topo.num_cells = 1;
        topo.neighbors = vec![vec![]];
        topo.gain = vec![vec![topo.gain[0][0]]];
        let users = rng.random_range(1..8);
        topo.nominal_users = vec![vec![users]];
        let mut slice = random_slice(rng);
        slice.max_users_per_group = users;
        let capacity =
            topo.bandwidth_hz * (1.0 + topo.tx_power_w * topo.gain[0][0] / topo.noise_w).log2();
        // Utilization strictly below one so the queueing branch applies.
        slice.offered_rate = rng.random_range(0.05..0.9) * capacity / users as f64;
        let mut env = Env::reset(topo, vec![slice.clone()], flat_mask(1), case as u64)
            .map_err(|e| e.to_string())?;
        let kpi = env
            .step(&[PartitionAction::uniform(1)])
            .map_err(|e| e.to_string())?;
        let u = kpi.active_users(0, 0) as f64;
        if u == 0.0 {
            return Err(format!("case {case}: no active users"));
        }
        let demand = u * slice.offered_rate;
        let rho = demand / capacity;
        let phi = demand / u;
        let delay = slice.packet_bits / phi / (1.0 - rho);
        for (got, want) in [
            (kpi.load(0, 0), rho),
            (kpi.throughput(0, 0), phi),
            (kpi.delay(0, 0), delay),
        ] {
            worst = worst.max((got - want).abs() / want);
        }
    }
    Ok(worst)
}
