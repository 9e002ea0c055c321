//! Property-based invariants of the constraint layer, rewards, messages,
//! heuristics, replay and schedules.

mod common;

use dirp_core::agent::{random_simplex, Phase, PhaseSchedule, ReplayBuffer};
use dirp_core::approx::decoupled_softmax;
use dirp_core::env::SliceSpec;
use dirp_core::harness::bl_heur_action;
use dirp_core::harness::plot::survival_curve;
use dirp_core::mdp::{
    combine_local_rewards, extract_message, global_reward, local_reward, reward_from_levels,
    RewardKind,
};
use dirp_core::td3::{project_groups, Transition};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn unit_slice() -> SliceSpec {
    SliceSpec {
        thr_req: 1.0,
        delay_req: 1.0,
        offered_rate: 1.0,
        max_users_per_group: 1,
        packet_bits: 1.0,
    }
}

proptest! {
    #[test]
    fn softmax_groups_are_simplices(
        groups in 1usize..6,
        width in 1usize..6,
        seed in any::<u64>(),
    ) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let logits: Vec<f64> = (0..groups * width).map(|_| rng.random_range(-50.0..50.0)).collect();
        let out = decoupled_softmax(&logits, groups).unwrap();
        for g in out.chunks(width) {
            prop_assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(g.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn projection_lands_on_the_simplex(v in prop::collection::vec(-2.0f64..2.0, 8), groups in prop::sample::select(vec![1usize, 2, 4, 8])) {
        let mut a = v.clone();
        project_groups(&mut a, groups, 0.0, 1.0);
        for g in a.chunks(8 / groups) {
            prop_assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(g.iter().all(|&x| (0.0..=1.0).contains(&x)));
        }
    }

    #[test]
    fn random_simplex_is_feasible(groups in 1usize..5, width in 1usize..6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_simplex(groups, width, &mut rng);
        prop_assert_eq!(a.len(), groups * width);
        for g in a.chunks(width) {
            prop_assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn maxmin_reward_in_unit_interval(levels in prop::collection::vec(0.0f64..10.0, 1..8)) {
        let r = reward_from_levels(&levels, RewardKind::MaxMin);
        prop_assert!((0.0..=1.0).contains(&r));
        let capped = levels.iter().fold(1.0f64, |m, &s| m.min(s.min(1.0)));
        prop_assert_eq!(r, capped);
    }

    #[test]
    fn log_reward_is_mean_log2(levels in prop::collection::vec(0.0f64..10.0, 1..8)) {
        let r = reward_from_levels(&levels, RewardKind::LogUtility);
        let oracle = levels.iter().map(|s| (1.0 + s).ln() / std::f64::consts::LN_2).sum::<f64>() / levels.len() as f64;
        prop_assert!((r - oracle).abs() < 1e-12);
    }

    #[test]
    fn global_maxmin_is_min_of_local(
        thr in prop::collection::vec(0.0f64..3.0, 6),
        delay in prop::collection::vec(0.1f64..5.0, 6),
    ) {
        let kpi = common::report(3, 2, thr, delay, vec![0.0; 6], vec![0.0; 6]);
        let slices = vec![unit_slice(), unit_slice()];
        for kind in [RewardKind::MaxMin, RewardKind::LogUtility] {
            let locals: Vec<f64> = (0..3).map(|k| local_reward(&kpi, k, &slices, kind).unwrap()).collect();
            let g = global_reward(&kpi, &slices, kind).unwrap();
            prop_assert!((g - combine_local_rewards(&locals, kind)).abs() < 1e-12);
            if kind == RewardKind::MaxMin {
                prop_assert!((g - locals.iter().copied().fold(f64::INFINITY, f64::min)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn overprovisioning_leaves_maxmin_unchanged(ratio in 1.2f64..5.0, bottleneck in 0.05f64..0.99) {
        let base = reward_from_levels(&[bottleneck, 1.2], RewardKind::MaxMin);
        prop_assert_eq!(reward_from_levels(&[bottleneck, ratio], RewardKind::MaxMin), base);
        prop_assert_eq!(base, bottleneck);
    }

    #[test]
    fn message_is_permutation_invariant_mean(
        loads in prop::collection::vec(0.0f64..1.0, 5 * 3),
        perm_seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        let kpi = common::report(5, 3, vec![1.0; 15], vec![1.0; 15], loads.clone(), vec![0.0; 15]);
        let mut neighbors = vec![1usize, 2, 3, 4];
        let msg = extract_message(&kpi, 0, &neighbors);
        for n in 0..3 {
            let mean = (1..5).map(|j| loads[j * 3 + n]).sum::<f64>() / 4.0;
            prop_assert!((msg.extracted[n] - mean).abs() < 1e-12);
        }
        neighbors.shuffle(&mut ChaCha8Rng::seed_from_u64(perm_seed));
        let shuffled = extract_message(&kpi, 0, &neighbors);
        for n in 0..3 {
            prop_assert!((shuffled.extracted[n] - msg.extracted[n]).abs() < 1e-12);
        }
    }

    #[test]
    fn heuristic_is_scale_invariant(demand in prop::collection::vec(0.0f64..1e7, 4), scale in 1e-3f64..1e3) {
        let kpi = common::report(1, 4, vec![1.0; 4], vec![1.0; 4], vec![0.0; 4], demand.clone());
        let scaled = common::report(1, 4, vec![1.0; 4], vec![1.0; 4], vec![0.0; 4], demand.iter().map(|d| d * scale).collect());
        let a = bl_heur_action(&kpi, 0);
        let b = bl_heur_action(&scaled, 0);
        prop_assert!(a.is_on_simplex(1e-12));
        for n in 0..4 {
            prop_assert!((a.share(n) - b.share(n)).abs() < 1e-12);
        }
    }

    #[test]
    fn replay_never_exceeds_capacity(cap in 1usize..50, pushes in 0usize..200) {
        let mut buf = ReplayBuffer::new(cap).unwrap();
        for t in 0..pushes {
            buf.push(Transition { state: vec![], action: vec![], reward: t as f64, next_state: vec![], t, cell: 0 });
        }
        prop_assert_eq!(buf.len(), pushes.min(cap));
        // The oldest entries are the ones evicted.
        let first_kept = pushes.saturating_sub(cap);
        prop_assert!(buf.iter().all(|tr| tr.t >= first_kept));
    }

    #[test]
    fn schedule_partitions_the_horizon(e in 0usize..20, tr in 0usize..20, ev in 1usize..20) {
        let s = PhaseSchedule::with_lengths(e, tr, ev);
        let mut counts = [0usize; 3];
        for t in 0..s.horizon() {
            let (phase, _) = s.locate(t).unwrap();
            counts[match phase { Phase::Explore => 0, Phase::Train => 1, Phase::Eval => 2 }] += 1;
        }
        prop_assert_eq!(counts, [e, tr, ev]);
        prop_assert!(s.locate(s.horizon()).is_none());
    }

    #[test]
    fn survival_curve_is_a_survival_function(samples in prop::collection::vec(0.0f64..3.0, 1..60)) {
        let pts = survival_curve(&samples);
        prop_assert_eq!(pts[0], (0.0, 1.0));
        prop_assert!(pts.windows(2).all(|w| w[1].1 <= w[0].1 && w[1].0 >= w[0].0));
        for &(x, y) in &pts[1..pts.len() - 1] {
            let frac = samples.iter().filter(|&&s| s >= x).count() as f64 / samples.len() as f64;
            prop_assert!((y - frac).abs() < 1e-12);
        }
    }
}
