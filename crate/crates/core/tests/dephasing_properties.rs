use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qlink::config::default_scenario;
use qlink::dephasing::{
    default_time_step, evolve_spin1, propagate_trajectory, sample_initial_conditions, simulate_channel_family,
    DephasingConfig, Vec3,
};
use qlink::quantum::C64;

fn node_config(n_trajectories: usize, seed: u64) -> DephasingConfig {
    let s = default_scenario();
    let node = s.nodes.get(0);
    DephasingConfig {
        trap: node.trap,
        field: node.field,
        temperature: node.temperature,
        n_trajectories,
        time_step: default_time_step(&node.trap),
        seed,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn bound_trajectories_conserve_energy(seed in any::<u64>()) {
        let cfg = node_config(100, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ic = sample_initial_conditions(&cfg.trap, cfg.temperature, &mut rng).unwrap();
        let traj = propagate_trajectory(&cfg.trap, &ic, cfg.time_step, 200e-6).unwrap();
        if !traj.escaped {
            prop_assert!(traj.max_relative_energy_drift < 1e-6, "drift {:e}", traj.max_relative_energy_drift);
        }
    }

    #[test]
    fn spin_evolution_keeps_norm(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut amps = [0.0f64; 6];
        for a in amps.iter_mut() {
            *a = rng.random_range(-1.0..1.0);
        }
        let norm = amps.iter().map(|a| a * a).sum::<f64>().sqrt();
        let initial = [
            C64::new(amps[0], amps[1]) / norm,
            C64::new(amps[2], amps[3]) / norm,
            C64::new(amps[4], amps[5]) / norm,
        ];
        let fields: Vec<Vec3> = (0..4001)
            .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        let res = evolve_spin1(initial, &fields, 50e-9).unwrap();
        for s in &res.spin_states {
            let n = s.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            prop_assert!((n - 1.0).abs() < 1e-9, "norm {n}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn channels_are_trace_preserving_and_positive(seed in any::<u64>()) {
        let n = 200;
        let fam = simulate_channel_family(&node_config(n, seed), &[0.0, 40e-6, 120e-6]).unwrap();
        let bound = -3.0 / (fam.trajectories_used as f64).sqrt();
        for ch in fam.lab.iter().chain(&fam.rotating) {
            prop_assert!(ch.trace_preservation_error() < 1e-9);
            prop_assert!(ch.choi_min_eigenvalue() >= bound);
        }
    }
}

#[test]
fn monte_carlo_converges_with_trajectory_count() {
    let times = [30e-6, 90e-6];
    let n = 400;
    let small = simulate_channel_family(&node_config(n, 11), &times).unwrap();
    let large = simulate_channel_family(&node_config(4 * n, 12), &times).unwrap();
    for (a, b) in small.rotating.iter().zip(&large.rotating) {
        let diff = (a.superop() - b.superop()).camax();
        assert!(diff < 2.0 / (n as f64).sqrt(), "difference {diff}");
    }
}

#[test]
fn channel_family_is_independent_of_thread_count() {
    let cfg = node_config(300, 5);
    let times = [10e-6, 60e-6];
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| simulate_channel_family(&cfg, &times).unwrap())
    };
    let one = run(1);
    let three = run(3);
    for (a, b) in one.lab.iter().zip(&three.lab) {
        assert_eq!(a.superop(), b.superop());
    }
    assert_eq!(simulate_channel_family(&cfg, &times).unwrap().lab[1].superop(), one.lab[1].superop());
}
