use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qlink::channel::{
    coincidence_distribution, drift_step, indistinguishability, link_transmission, polarization_control_cycle,
    residual_error, unordered_pairs, pair_probability, ControllerState, FibreLink, FibreUnitary, PhotonWavepacket,
};

fn packet(decay_ns: f64, offset_ns: f64) -> PhotonWavepacket {
    PhotonWavepacket { emission_offset: offset_ns * 1e-9, decay_time: decay_ns * 1e-9, excitation_fwhm: 21e-9 }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn coincidence_distribution_is_normalized(xi in 0.0f64..=1.0) {
        let g = coincidence_distribution(xi).unwrap();
        prop_assert!((g.total() - 1.0).abs() < 1e-12);
        let pairs: f64 = unordered_pairs().iter().map(|(a, b)| pair_probability(*a, *b, xi)).sum();
        prop_assert!((pairs - 1.0).abs() < 1e-12);
        // Interference suppresses the D-null pattern.
        let more = coincidence_distribution((xi + 0.1).min(1.0)).unwrap();
        prop_assert!(more.d_null <= g.d_null + 1e-12);
    }

    #[test]
    fn indistinguishability_symmetric_and_monotone(
        tau1 in 10.0f64..40.0,
        tau2 in 10.0f64..40.0,
        dt in 0.0f64..80.0,
        extra in 0.0f64..40.0,
        xi_max in 0.5f64..=1.0,
    ) {
        let (w1, w2) = (packet(tau1, 0.0), packet(tau2, 0.0));
        let near = indistinguishability(&w1, &w2, dt * 1e-9, xi_max).unwrap();
        let swapped = indistinguishability(&w2, &w1, dt * 1e-9, xi_max).unwrap();
        let mirrored = indistinguishability(&w2, &w1, -dt * 1e-9, xi_max).unwrap();
        let far = indistinguishability(&w1, &w2, (dt + extra) * 1e-9, xi_max).unwrap();
        prop_assert!((near - mirrored).abs() < 1e-12);
        prop_assert!(far <= near + 1e-12);
        prop_assert!((0.0..=xi_max + 1e-12).contains(&near));
        if tau1 == tau2 {
            prop_assert!((near - swapped).abs() < 1e-12);
        }
    }

    #[test]
    fn concatenated_links_multiply(l1 in 0.0f64..30.0, l2 in 0.0f64..30.0, x1 in 0.0f64..5.0, x2 in 0.0f64..5.0) {
        let a = FibreLink::new(l1, 0.3 * l1 + x1).unwrap();
        let b = FibreLink::new(l2, 0.3 * l2 + x2).unwrap();
        let joined = link_transmission(&a.concatenate(&b));
        prop_assert!((joined - link_transmission(&a) * link_transmission(&b)).abs() < 1e-14);
    }

    #[test]
    fn drift_stays_unitary(seed in any::<u64>(), rate in 0.0f64..0.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut u = FibreUnitary::identity();
        for _ in 0..200 {
            u = drift_step(&u, 1.0, rate, &mut rng).unwrap();
        }
        prop_assert!(u.unitarity_error() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn control_cycle_never_worsens(seed in any::<u64>(), rate in 0.001f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fibre = FibreUnitary::identity();
        let mut state = ControllerState::default();
        for _ in 0..5 {
            fibre = drift_step(&fibre, 1.0, rate, &mut rng).unwrap();
            let before = residual_error(&fibre.then(&qlink::channel::compensator(&state.settings)));
            let out = polarization_control_cycle(&fibre, &mut state);
            prop_assert!((out.initial_residual - before).abs() < 1e-12);
            prop_assert!(out.residual_error <= before + 1e-12);
        }
    }
}
