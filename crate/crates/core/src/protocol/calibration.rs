use serde::{Deserialize, Serialize};

use super::config::Scenario;
use super::fidelity::calibrate_memory_visibility;
use super::presets::preset;
use super::rates::{
    accepted_fraction, expected_contrast, photon_fraction, repetition_rate, success_probability, acceptance_window,
    node_detection_efficiency,
};
use super::ProtocolError;

/// Observables the free parameters are fitted to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationTargets {
    /// Preset whose fibres define success probability, contrast and window targets.
    pub reference: String,
    /// (preset, Hz) pairs for the try overhead.
    pub repetition_rates: Vec<RateTarget>,
    pub success_probability: f64,
    /// Two-photon contrast at zero offset.
    pub contrast: f64,
    /// Recorded heralds falling inside the acceptance window.
    pub accepted_fraction: f64,
    /// Atom-photon fidelities of node 1 and 2 at the reference readout delays.
    pub atom_photon_fidelity: [f64; 2],
    /// Relative residual above which calibration counts as failed.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_tolerance() -> f64 {
    0.10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateTarget {
    pub preset: String,
    pub rate: f64,
}

impl Default for CalibrationTargets {
    fn default() -> Self {
        Self {
            reference: "l6".into(),
            repetition_rates: vec![
                RateTarget { preset: "l6".into(), rate: 30.8e3 },
                RateTarget { preset: "l33".into(), rate: 9.7e3 },
            ],
            success_probability: 3.66e-6,
            contrast: 0.955,
            accepted_fraction: 0.65,
            atom_photon_fidelity: [0.941, 0.911],
            tolerance: default_tolerance(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub observable: String,
    pub target: f64,
    pub achieved: f64,
    pub relative: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub scenario: Scenario,
    pub residuals: Vec<Residual>,
    pub converged: bool,
    /// Why a fit could not meet its target, if any.
    pub notes: Vec<String>,
}

fn residual(observable: &str, target: f64, achieved: f64) -> Residual {
    let relative = if target != 0.0 { (achieved - target).abs() / target.abs() } else { achieved.abs() };
    Residual { observable: observable.into(), target, achieved, relative }
}

fn lookup(name: &str) -> Result<super::config::LinkScenario, ProtocolError> {
    preset(name).ok_or_else(|| ProtocolError::InvalidConfig(format!("unknown preset {name:?}")))
}

/// Overhead minimizing the largest relative rate error over all targets.
fn fit_overhead(base: &Scenario, targets: &[RateTarget]) -> Result<f64, ProtocolError> {
    let rows: Vec<(Scenario, f64)> =
        targets.iter().map(|t| Ok((base.with_links(&lookup(&t.preset)?), t.rate))).collect::<Result<_, ProtocolError>>()?;
    let worst = |overhead: f64| {
        rows.iter()
            .map(|(s, rate)| {
                let mut s = s.clone();
                s.sequence.try_overhead = overhead;
                (repetition_rate(&s) / rate - 1.0).abs()
            })
            .fold(0.0, f64::max)
    };
    // Max of convex functions is convex: golden-section search.
    let (mut a, mut b) = (1e-9, 1e-3);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if worst(c) < worst(d) {
            b = d;
        } else {
            a = c;
        }
    }
    Ok(0.5 * (a + b))
}

/// Equal collection efficiency in both nodes reproducing `target` at the reference fibres.
fn fit_collection(s: &mut Scenario, target: f64) {
    let f = photon_fraction(s, &acceptance_window(s));
    let per_unit: f64 = (0..2)
        .map(|i| {
            let mut node = *s.nodes.get(i);
            node.collection_efficiency = 1.0;
            node_detection_efficiency(&node, s.links.get(i), &s.bsm.detector) * f
        })
        .product();
    let c = (2.0 * target / per_unit).sqrt();
    s.nodes.node1.collection_efficiency = c;
    s.nodes.node2.collection_efficiency = c;
}

/// Window start after the optimum where the accepted fraction falls to `target`.
fn fit_window(s: &mut Scenario, target: f64) -> Result<(), ProtocolError> {
    let latest = s.bsm.frame_start + s.bsm.hardware_window - s.bsm.acceptance_window;
    let n = 400;
    let frac_at = |s: &Scenario, start: f64| {
        let mut t = s.clone();
        t.bsm.window_start = start;
        accepted_fraction(&t)
    };
    let (mut best, mut best_start) = (0.0, s.bsm.frame_start);
    for i in 0..=n {
        let start = s.bsm.frame_start + (latest - s.bsm.frame_start) * i as f64 / n as f64;
        let f = frac_at(s, start);
        if f > best {
            best = f;
            best_start = start;
        }
    }
    if target > best {
        return Err(ProtocolError::InvalidConfig(format!(
            "accepted fraction {target} unreachable; the window accepts at most {best:.3}"
        )));
    }
    let (mut a, mut b) = (best_start, latest);
    if frac_at(s, b) > target {
        s.bsm.window_start = b;
        return Ok(());
    }
    for _ in 0..100 {
        let m = 0.5 * (a + b);
        if frac_at(s, m) > target {
            a = m;
        } else {
            b = m;
        }
    }
    s.bsm.window_start = 0.5 * (a + b);
    Ok(())
}

/// Fits try overhead, window position, collection efficiency, the indistinguishability
/// ceiling and storage-free visibilities, in that order (the window and collection are
/// coupled through the background share and iterated).
pub fn calibrate(base: &Scenario, targets: &CalibrationTargets) -> Result<CalibrationReport, ProtocolError> {
    let mut notes = Vec::new();
    let reference = lookup(&targets.reference)?;
    let mut s = base.clone();
    let name = s.name.clone();

    let overhead = fit_overhead(&s, &targets.repetition_rates)?;
    s.sequence.try_overhead = overhead;

    let mut r = s.with_links(&reference);
    for _ in 0..4 {
        if let Err(e) = fit_window(&mut r, targets.accepted_fraction) {
            notes.push(e.to_string());
            break;
        }
        fit_collection(&mut r, targets.success_probability);
    }
    let collection_ok = r.nodes.node1.collection_efficiency <= 1.0;
    if !collection_ok {
        notes.push(format!("collection efficiency {:.3} exceeds 1", r.nodes.node1.collection_efficiency));
    }

    r.bsm.xi_max = 1.0;
    let unit = expected_contrast(&r, 0.0);
    let xi = targets.contrast / unit;
    if xi > 1.0 {
        notes.push(format!("contrast {} needs an indistinguishability ceiling of {xi:.3} > 1", targets.contrast));
    }
    r.bsm.xi_max = xi.min(1.0);

    match calibrate_memory_visibility(
        &r,
        &reference,
        targets.atom_photon_fidelity,
        r.readout.dephasing_trajectories,
        r.readout.dephasing_seed,
    ) {
        Ok(v) => {
            r.nodes.node1.atom_photon_visibility = v[0];
            r.nodes.node2.atom_photon_visibility = v[1];
        }
        Err(e) => notes.push(e.to_string()),
    }

    // Back onto the caller's fibres with every fitted value transferred.
    s.nodes = r.nodes;
    s.bsm = r.bsm;
    s.name = name;

    let mut residuals = Vec::new();
    for t in &targets.repetition_rates {
        let row = s.with_links(&lookup(&t.preset)?);
        residuals.push(residual(&format!("repetition_rate[{}]", t.preset), t.rate, repetition_rate(&row)));
    }
    let at_ref = s.with_links(&reference);
    residuals.push(residual("success_probability", targets.success_probability, success_probability(&at_ref)));
    residuals.push(residual("contrast", targets.contrast, expected_contrast(&at_ref, 0.0)));
    residuals.push(residual("accepted_fraction", targets.accepted_fraction, accepted_fraction(&at_ref)));
    let converged = notes.is_empty() && residuals.iter().all(|r| r.relative < targets.tolerance);
    Ok(CalibrationReport { scenario: s, residuals, converged, notes })
}
