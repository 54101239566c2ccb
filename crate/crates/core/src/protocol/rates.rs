use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::config::{NodeConfig, Scenario};
use super::ProtocolError;
use crate::analysis::TimeWindow;
use crate::channel::{link_transmission, propagation_delay, DetectorParams, FibreLink};

/// Detectors behind the beamsplitter; all of them see every photon and every dark count.
pub const DETECTOR_COUNT: f64 = 4.0;

/// Probability per try that node `i`'s photon produces a click (before any time gating).
pub fn node_detection_efficiency(node: &NodeConfig, link: &FibreLink, detector: &DetectorParams) -> f64 {
    node.pump_efficiency
        * node.collection_efficiency
        * node.qfc.external_efficiency
        * link_transmission(link)
        * detector.efficiency
}

pub fn acceptance_window(s: &Scenario) -> TimeWindow {
    TimeWindow::new(s.bsm.window_start, s.bsm.acceptance_window)
}

pub fn hardware_window(s: &Scenario) -> TimeWindow {
    TimeWindow::new(s.bsm.frame_start, s.bsm.hardware_window)
}

/// Fraction of one photon's detection-time distribution inside `w`.
pub fn photon_fraction(s: &Scenario, w: &TimeWindow) -> f64 {
    s.bsm.wavepacket.window_fraction(w.start, w.width)
}

/// Signal click probability of each node inside `w`.
pub fn signal_in_window(s: &Scenario, w: &TimeWindow) -> [f64; 2] {
    let f = photon_fraction(s, w);
    [0, 1].map(|i| node_detection_efficiency(s.nodes.get(i), s.links.get(i), &s.bsm.detector) * f)
}

/// Total background counts/s at the station: both converters' pump background after their fibres,
/// plus dark counts of all detectors.
pub fn background_rate(s: &Scenario) -> f64 {
    let raman: f64 = (0..2).map(|i| s.nodes.get(i).qfc.background_rate * link_transmission(s.links.get(i))).sum();
    raman + DETECTOR_COUNT * s.bsm.detector.dark_rate
}

/// ½(S1·S2) for the heralding patterns; the Bell analyzer accepts half of all pairs.
pub fn success_probability(s: &Scenario) -> f64 {
    let [a, b] = signal_in_window(s, &acceptance_window(s));
    0.5 * a * b
}

/// Heralding probability per try including accidental pairs in window `w`.
pub fn herald_probability(s: &Scenario, w: &TimeWindow) -> f64 {
    let [a, b] = signal_in_window(s, w);
    let mu = background_rate(s) * w.width;
    0.5 * (a * b + mu * (a + b) + 0.5 * mu * mu)
}

/// Recorded coincidences falling in the acceptance window.
pub fn accepted_fraction(s: &Scenario) -> f64 {
    herald_probability(s, &acceptance_window(s)) / herald_probability(s, &hardware_window(s))
}

/// 1/(t_overhead + L1/(2/3·c)); node 1 is the timing reference.
pub fn repetition_rate(s: &Scenario) -> f64 {
    1.0 / try_period(s)
}

pub fn try_period(s: &Scenario) -> f64 {
    s.sequence.try_overhead + propagation_delay(&s.links.node1)
}

pub fn event_rate(success_probability: f64, repetition_rate: f64, duty_cycle: f64) -> f64 {
    success_probability * repetition_rate * duty_cycle
}

/// One-way signalling time from the station back to node `i`.
pub fn heralding_delay(link: &FibreLink) -> f64 {
    propagation_delay(link)
}

/// Earliest readout: photon flight to the station plus the heralding signal back.
pub fn readout_bound(link: &FibreLink) -> f64 {
    propagation_delay(link) + heralding_delay(link)
}

/// Smallest whole number of oscillation periods not earlier than `bound`.
pub fn snap_readout(bound: f64, period: f64) -> f64 {
    let n = (bound / period - 1e-9).ceil().max(1.0);
    n * period
}

/// Readout delay actually used for node `i`.
pub fn effective_readout_time(s: &Scenario, node: usize) -> f64 {
    let configured = s.readout.time(node);
    if s.readout.snap_to_period {
        let bound = readout_bound(s.links.get(node)).max(configured);
        snap_readout(bound, s.nodes.get(node).trap_oscillation_period)
    } else {
        configured
    }
}

pub fn check_readout_times(s: &Scenario) -> Result<(), ProtocolError> {
    for node in 0..2 {
        let t = effective_readout_time(s, node);
        let bound = readout_bound(s.links.get(node));
        if t + 1e-12 < bound {
            return Err(ProtocolError::ReadoutTooEarly { node: node + 1, readout: t, bound });
        }
    }
    Ok(())
}

/// Single-node and coincidence signal-to-background ratios in the acceptance window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SbrModel {
    pub node1: f64,
    pub node2: f64,
    pub coincidence: f64,
    /// Expected background counts per try in the window.
    pub background_per_window: f64,
}

pub fn sbr_model(s: &Scenario) -> SbrModel {
    let w = acceptance_window(s);
    let [a, b] = signal_in_window(s, &w);
    let mu = background_rate(s) * w.width;
    SbrModel {
        node1: a / mu,
        node2: b / mu,
        coincidence: a * b / (mu * (a + b) + 0.5 * mu * mu),
        background_per_window: mu,
    }
}

/// Fraction of heralds involving at least one background click: 1/(1 + SBR_c).
pub fn background_weight(s: &Scenario) -> f64 {
    1.0 / (1.0 + sbr_model(s).coincidence)
}

/// ln Φ(z), using the asymptotic tail below z = −30 where erfc underflows.
fn ln_normal_cdf(z: f64) -> f64 {
    if z > -30.0 {
        (0.5 * erfc(-z / std::f64::consts::SQRT_2)).ln()
    } else {
        let z2 = z * z;
        -0.5 * z2 - (-z).ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() + (1.0 - 1.0 / z2 + 3.0 / (z2 * z2)).ln()
    }
}

/// E[exp(−|X|/τ)] for X ~ N(μ, σ²).
fn mean_exponential_overlap(mu: f64, sigma: f64, tau: f64) -> f64 {
    if sigma == 0.0 {
        return (-mu.abs() / tau).exp();
    }
    let a = sigma * sigma / (2.0 * tau * tau);
    // Both terms in log space so large |μ| gives 0 instead of ∞·0.
    let t1 = (a - mu / tau + ln_normal_cdf(mu / sigma - sigma / tau)).exp();
    let t2 = (a + mu / tau + ln_normal_cdf(-mu / sigma - sigma / tau)).exp();
    (t1 + t2).min(1.0)
}

/// Relative arrival-time spread of the two photons.
pub fn relative_jitter(s: &Scenario) -> f64 {
    s.nodes.node1.sync_jitter_sigma.hypot(s.nodes.node2.sync_jitter_sigma)
}

/// Mean indistinguishability at deliberate offset `delta_tau`, averaged over synchronization jitter.
pub fn mean_indistinguishability(s: &Scenario, delta_tau: f64) -> f64 {
    s.bsm.xi_max * mean_exponential_overlap(delta_tau, relative_jitter(s), s.bsm.wavepacket.decay_time)
}

/// Contrast expected without background correction: ξ̄ · SBR_c/(1 + SBR_c).
pub fn expected_contrast(s: &Scenario, delta_tau: f64) -> f64 {
    mean_indistinguishability(s, delta_tau) * (1.0 - background_weight(s))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateBudget {
    pub repetition_rate: f64,
    pub success_probability: f64,
    pub duty_cycle: f64,
    pub event_rate: f64,
}

pub fn rate_budget(s: &Scenario, duty_cycle: f64) -> RateBudget {
    let repetition_rate = repetition_rate(s);
    let success_probability = success_probability(s);
    RateBudget {
        repetition_rate,
        success_probability,
        duty_cycle,
        event_rate: event_rate(success_probability, repetition_rate, duty_cycle),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn snapping() {
        assert_relative_eq!(snap_readout(26.0e-6, 14.3e-6), 28.6e-6, epsilon = 1e-12);
        assert_relative_eq!(snap_readout(28.6e-6, 14.3e-6), 28.6e-6, epsilon = 1e-12);
        assert_relative_eq!(snap_readout(0.0, 17.8e-6), 17.8e-6, epsilon = 1e-12);
    }

    #[test]
    fn overlap_average() {
        assert_relative_eq!(mean_exponential_overlap(0.0, 0.0, 26.2e-9), 1.0);
        assert_relative_eq!(mean_exponential_overlap(26.2e-9, 0.0, 26.2e-9), (-1.0f64).exp());
        // Quadrature oracle.
        let (mu, sigma, tau) = (5e-9, 2e-9, 26.2e-9);
        let n = 20000;
        let mut acc = 0.0;
        for i in 0..n {
            let x = mu - 8.0 * sigma + 16.0 * sigma * (i as f64 + 0.5) / n as f64;
            let g = (-(x - mu).powi(2) / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt());
            acc += g * (-x.abs() / tau).exp() * 16.0 * sigma / n as f64;
        }
        assert_relative_eq!(mean_exponential_overlap(mu, sigma, tau), acc, epsilon = 1e-6);
        assert!(mean_exponential_overlap(1e-3, 1e-9, 26.2e-9) < 1e-12);
        assert!(mean_exponential_overlap(-1e-3, 1e-9, 26.2e-9) < 1e-12);
        // Tail branch joins the direct one smoothly.
        let (lo, hi) = (ln_normal_cdf(-30.0 - 1e-9), ln_normal_cdf(-30.0 + 1e-9));
        assert!((lo - hi).abs() < 1e-6, "{lo} {hi}");
    }
}
