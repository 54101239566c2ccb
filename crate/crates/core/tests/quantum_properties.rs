use std::f64::consts::FRAC_1_SQRT_2;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qlink::quantum::{
    atom_bell_state, atom_photon_state, basis, bell_project, chsh_s, joint_readout_probabilities, measure_atom,
    project_photons, AtomBasisSetting, BellOutcome, ChshCorrelators, CMatrix, CVector, DensityMatrix, HilbertSpace,
    Plane, StateVector, C64,
};

fn random_matrix(n: usize, rng: &mut ChaCha8Rng) -> CMatrix {
    CMatrix::from_fn(n, n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

/// Full-rank or low-rank random state: A·A†/tr with A of the given column count.
fn random_density(dims: &[usize], rank: usize, rng: &mut ChaCha8Rng) -> DensityMatrix {
    let space = HilbertSpace::new(dims.to_vec()).unwrap();
    let n = space.total_dim();
    let a = CMatrix::from_fn(n, rank, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let m = &a * a.adjoint();
    let tr = m.trace();
    DensityMatrix::new(space, m / tr).unwrap()
}

fn random_unitary(n: usize, rng: &mut ChaCha8Rng) -> CMatrix {
    random_matrix(n, rng).qr().q()
}

fn random_setting(rng: &mut ChaCha8Rng) -> AtomBasisSetting {
    let plane = if rng.random_bool(0.5) { Plane::Equator } else { Plane::Z };
    AtomBasisSetting::new(rng.random_range(0.0..std::f64::consts::TAU), plane)
}

fn photon_phi(sign: f64) -> StateVector {
    let amps = (basis::pol_h().kronecker(&basis::pol_h()) + basis::pol_v().kronecker(&basis::pol_v())* C64::new(sign, 0.0))
        * C64::new(FRAC_1_SQRT_2, 0.0);
    StateVector::new(HilbertSpace::new(vec![2, 2]).unwrap(), amps).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn bell_outcomes_and_complement_sum_to_one(seed in any::<u64>(), rank in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rho = random_density(&[3, 2, 3, 2], rank, &mut rng);
        let mut total = 0.0;
        for outcome in BellOutcome::ALL {
            let (p, atoms) = bell_project(&rho, outcome).unwrap();
            prop_assert!(atoms.validate().is_ok());
            total += p;
        }
        let (p_phi, _) = project_photons(&rho, &[photon_phi(1.0), photon_phi(-1.0)]).unwrap();
        prop_assert!((total + p_phi - 1.0).abs() < 1e-12, "sum {}", total + p_phi);
    }

    #[test]
    fn operations_preserve_validity(seed in any::<u64>(), rank in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rho = random_density(&[3, 2], rank, &mut rng);
        prop_assert!(rho.validate().is_ok());
        let u = random_unitary(3, &mut rng);
        let rotated = rho.apply_local_unitary(0, &u).unwrap();
        prop_assert!(rotated.validate().is_ok());
        prop_assert!((rotated.purity() - rho.purity()).abs() < 1e-10);
        let other = random_density(&[3, 2], 2, &mut rng);
        let product = rho.tensor(&other);
        prop_assert!(product.validate().is_ok());
        let back = product.partial_trace(&[2, 3]).unwrap();
        prop_assert!((back.matrix() - other.matrix()).camax() < 1e-12);
        let w: f64 = rng.random_range(0.0..1.0);
        let mix = DensityMatrix::mixture(&[(w, &rho), (1.0 - w, &rotated)]).unwrap();
        prop_assert!(mix.validate().is_ok());
        let m = measure_atom(&rho, random_setting(&mut rng), 0).unwrap();
        prop_assert!((m.p_up + m.p_down + m.p_zero - 1.0).abs() < 1e-12);
        for post in [&m.post_up, &m.post_down, &m.post_zero].into_iter().flatten() {
            prop_assert!(post.validate().is_ok());
        }
    }

    #[test]
    fn joint_readout_is_a_distribution(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rho = random_density(&[3, 3], 3, &mut rng);
        let p = joint_readout_probabilities(&rho, random_setting(&mut rng), random_setting(&mut rng)).unwrap();
        prop_assert!(p.as_array().iter().all(|v| *v >= 0.0));
        prop_assert!((p.as_array().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.correlator().abs() <= 1.0 + 1e-12);
    }

    #[test]
    fn chsh_invariant_under_global_sign_flip(e in prop::array::uniform4(-1.0f64..=1.0)) {
        let c = ChshCorrelators { alpha_beta: e[0], alpha1_beta: e[1], alpha1_beta1: e[2], alpha2_beta1: e[3] };
        let flipped = c.scaled(-1.0);
        prop_assert_eq!(chsh_s(&c).unwrap(), chsh_s(&flipped).unwrap());
        prop_assert!(chsh_s(&c).unwrap() <= 4.0);
    }
}

#[test]
fn atom_photon_state_agrees_in_both_bases() {
    // (|↓⟩x|V⟩ + |↑⟩x|H⟩)/√2 against (|↓⟩z|L⟩ + |↑⟩z|R⟩)/√2.
    let linear: CVector =
        (basis::down_x().kronecker(&basis::pol_v()) + basis::up_x().kronecker(&basis::pol_h()))* C64::new(FRAC_1_SQRT_2, 0.0);
    let circular = atom_photon_state();
    let dev = (circular.amplitudes() - &linear).camax();
    assert!(dev < 1e-12, "deviation {dev}");
}

#[test]
fn ideal_swap_gives_bell_states_for_both_outcomes() {
    let pair = atom_photon_state().tensor(&atom_photon_state()).to_density();
    for outcome in BellOutcome::ALL {
        let (p, atoms) = bell_project(&pair, outcome).unwrap();
        assert!((p - 0.25).abs() < 1e-12);
        assert!((atoms.fidelity_to_pure(&atom_bell_state(outcome)) - 1.0).abs() < 1e-10);
    }
}

#[test]
fn invalid_matrices_are_rejected() {
    let space = HilbertSpace::new(vec![3]).unwrap();
    let mut m = CMatrix::identity(3, 3) / C64::new(3.0, 0.0);
    m[(0, 1)] = C64::new(0.1, 0.0);
    assert!(DensityMatrix::new(space.clone(), m).is_err());
    let neg = CMatrix::from_diagonal(&CVector::from_vec(vec![C64::new(1.2, 0.0), C64::new(-0.2, 0.0), C64::new(0.0, 0.0)]));
    assert!(DensityMatrix::new(space, neg).is_err());
}
