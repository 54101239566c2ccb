use std::sync::OnceLock;

use proptest::prelude::*;

use qlink::analysis::binomial_stderr;
use qlink::config::preset_scenario;
use qlink::protocol::{
    acceptance_window, check_readout_times, effective_readout_time, herald_probability, readout_bound,
    run_sequence_with_model, sbr_model, snap_readout, try_period, HeraldModel, ProtocolError, RunMode, RunOutput,
    RunTarget, Scenario, PRESET_NAMES,
};
use qlink::quantum::BellOutcome;

fn short_scenario() -> &'static (Scenario, HeraldModel) {
    static CELL: OnceLock<(Scenario, HeraldModel)> = OnceLock::new();
    CELL.get_or_init(|| {
        let s = preset_scenario("l6").unwrap();
        let model = HeraldModel::new(&s).unwrap();
        (s, model)
    })
}

fn dm_run() -> &'static RunOutput {
    static CELL: OnceLock<RunOutput> = OnceLock::new();
    CELL.get_or_init(|| {
        let (s, model) = short_scenario();
        run_sequence_with_model(s, RunMode::DensityMatrix, RunTarget::events(3000), 21, model).unwrap()
    })
}

#[test]
fn wall_times_increase_at_the_herald_rate() {
    let (s, _) = short_scenario();
    let out = dm_run();
    assert!(out.events.windows(2).all(|w| w[1].wall_time > w[0].wall_time));
    let n = out.events.len() as f64;
    let expected = herald_probability(s, &acceptance_window(s)) / try_period(s) * out.summary.rates.duty_cycle;
    let observed = out.summary.observed_event_rate;
    let sigma = expected / n.sqrt();
    assert!((observed - expected).abs() < 3.0 * sigma, "observed {observed} expected {expected} ± {sigma}");
}

#[test]
fn exact_events_carry_valid_states() {
    for e in &dm_run().events {
        let state = e.state.as_ref().expect("state kept in memory");
        state.validate().unwrap();
        let p = e.probabilities.expect("exact probabilities");
        assert!((p.as_array().iter().sum::<f64>() - 1.0).abs() < 1e-10);
        assert!((0.0..=1.0).contains(&e.fidelity));
    }
}

#[test]
fn bell_outcomes_split_evenly() {
    let out = dm_run();
    let n = out.events.len() as f64;
    let plus = out.events.iter().filter(|e| e.outcome == BellOutcome::PsiPlus).count() as f64 / n;
    assert!((plus - 0.5).abs() < 3.0 * binomial_stderr(0.5, n), "Ψ+ share {plus}");
    assert_eq!(out.summary.psi_plus + out.summary.psi_minus, out.events.len());
}

#[test]
fn settings_follow_round_robin() {
    let (s, _) = short_scenario();
    let pairs = s.readout.setting_pairs();
    for (i, e) in dm_run().events.iter().enumerate() {
        assert_eq!(e.index, i);
        assert_eq!(e.setting, pairs[i % pairs.len()]);
    }
}

#[test]
fn sampled_runs_split_evenly_and_are_reproducible() {
    let (s, model) = short_scenario();
    let a = run_sequence_with_model(s, RunMode::SampledClicks, RunTarget::events(1200), 3, model).unwrap();
    let b = run_sequence_with_model(s, RunMode::SampledClicks, RunTarget::events(1200), 3, model).unwrap();
    assert_eq!(serde_json::to_string(&a.events).unwrap(), serde_json::to_string(&b.events).unwrap());
    assert_eq!(a.clicks, b.clicks);
    let n = a.events.len() as f64;
    let plus = a.summary.psi_plus as f64 / n;
    assert!((plus - 0.5).abs() < 3.0 * binomial_stderr(0.5, n), "Ψ+ share {plus}");
    assert!(a.events.iter().all(|e| e.readout.is_some() && e.timestamps.is_some()));
}

#[test]
fn coincidence_sbr_survives_the_longest_link() {
    let short = sbr_model(&preset_scenario("l6").unwrap());
    let long = sbr_model(&preset_scenario("l33").unwrap());
    assert!(long.coincidence >= 0.65 * short.coincidence, "{} vs {}", long.coincidence, short.coincidence);
}

#[test]
fn snapped_readouts_respect_the_signalling_bound() {
    for name in PRESET_NAMES {
        let mut s = preset_scenario(name).unwrap();
        s.readout.snap_to_period = true;
        s.readout.node1_time = 0.0;
        s.readout.node2_time = 0.0;
        for node in 0..2 {
            let t = effective_readout_time(&s, node);
            let period = s.nodes.get(node).trap_oscillation_period;
            assert!(t >= readout_bound(s.links.get(node)));
            let cycles = t / period;
            assert!((cycles - cycles.round()).abs() < 1e-6, "{name}: {cycles} periods");
        }
        check_readout_times(&s).unwrap();
        s.readout.snap_to_period = false;
        assert!(matches!(check_readout_times(&s), Err(ProtocolError::ReadoutTooEarly { .. })));
    }
}

proptest! {
    #[test]
    fn snapping_lands_on_the_next_whole_period(bound in 1e-7f64..1e-3, period in 1e-6f64..1e-4) {
        let t = snap_readout(bound, period);
        prop_assert!(t >= bound - 1e-9 * period);
        prop_assert!(t < bound + period * (1.0 + 1e-9) || t == period);
        let cycles = t / period;
        prop_assert!((cycles - cycles.round()).abs() < 1e-9);
    }
}
