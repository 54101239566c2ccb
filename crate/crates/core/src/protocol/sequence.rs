use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric, Normal};
use serde::{Deserialize, Serialize};

use super::config::Scenario;
use super::duty::SequenceClock;
use super::herald::{HeraldKind, HeraldModel};
use super::rates::{
    acceptance_window, accepted_fraction, background_rate, background_weight, hardware_window, herald_probability,
    node_detection_efficiency, photon_fraction, rate_budget, sbr_model, try_period, RateBudget, SbrModel, DETECTOR_COUNT,
};
use super::ProtocolError;
use crate::analysis::{contrast_with_error, CorrelationDataset, SettingPair, TimeWindow};
use crate::channel::{
    classify_pair, pair_probability, unordered_pairs, ClickOrigin, ClickRecord, CoincidenceClass, DetectorLabel,
};
use crate::quantum::{atom_bell_state, joint_readout_probabilities, BellOutcome, DensityMatrix, JointProbabilities};

/// Largest number of background clicks per try considered; the Poisson tail beyond it is negligible.
const MAX_BACKGROUND_CLICKS: u64 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    /// Exact atom-atom state per herald.
    DensityMatrix,
    /// Detector clicks and single-shot readout outcomes.
    SampledClicks,
}

impl fmt::Display for RunMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunMode::DensityMatrix => "density-matrix",
            RunMode::SampledClicks => "sampled-clicks",
        })
    }
}

impl FromStr for RunMode {
    type Err = ProtocolError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "density-matrix" | "dm" => Ok(RunMode::DensityMatrix),
            "sampled-clicks" | "sampled" => Ok(RunMode::SampledClicks),
            other => Err(ProtocolError::InvalidConfig(format!("unknown mode {other:?}"))),
        }
    }
}

/// Stop condition; whichever limit is reached first ends the run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunTarget {
    pub events: Option<usize>,
    /// Simulated wall time in s.
    pub duration: Option<f64>,
}

impl RunTarget {
    pub fn events(n: usize) -> Self {
        Self { events: Some(n), duration: None }
    }

    pub fn duration(t: f64) -> Self {
        Self { events: None, duration: Some(t) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventReadout {
    pub node1_up: bool,
    pub node2_up: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeraldedEvent {
    pub index: usize,
    /// Wall time of the heralding try, in s.
    pub wall_time: f64,
    pub outcome: BellOutcome,
    pub setting: SettingPair,
    /// Readout delays actually used, in s.
    pub readout_times: [f64; 2],
    /// Coincidence click times (sampled mode).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamps: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<HeraldKind>,
    pub indistinguishability: f64,
    /// Fidelity of the stored atom-atom state to the heralded Bell state.
    pub fidelity: f64,
    /// Exact readout probabilities (density-matrix mode).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probabilities: Option<JointProbabilities>,
    /// Single-shot outcome (sampled mode).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub readout: Option<EventReadout>,
    #[serde(skip)]
    pub state: Option<DensityMatrix>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: String,
    pub mode: RunMode,
    pub seed: u64,
    pub events: usize,
    pub psi_plus: usize,
    pub psi_minus: usize,
    pub tries: u64,
    /// Simulated wall time in s.
    pub wall_time: f64,
    /// Model budget; its duty cycle is the simulated one.
    pub rates: RateBudget,
    pub observed_event_rate: f64,
    pub sbr: SbrModel,
    /// Recorded heralds inside the acceptance window (sampled) or its model value.
    pub accepted_fraction: f64,
    pub recorded_heralds: usize,
    pub mean_fidelity: Option<f64>,
    pub mean_indistinguishability: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub events: Vec<HeraldedEvent>,
    /// Two rows per recorded coincidence with distinct detectors (sampled mode).
    pub clicks: Vec<ClickRecord>,
    pub psi_plus: CorrelationDataset,
    pub psi_minus: CorrelationDataset,
    pub summary: RunSummary,
}

/// Per-try click model over the hardware frame.
struct ClickModel {
    frame: TimeWindow,
    window: TimeWindow,
    dark_share: f64,
    detector_jitter: f64,
    delta_tau: f64,
    /// (x1, x2, k) outcomes with at least two clicks, with cumulative weights.
    patterns: Vec<((bool, bool, u64), f64)>,
    candidate_probability: f64,
}

impl ClickModel {
    fn new(s: &Scenario) -> Self {
        let frame = hardware_window(s);
        let f = photon_fraction(s, &frame);
        let signal = [0, 1].map(|i| node_detection_efficiency(s.nodes.get(i), s.links.get(i), &s.bsm.detector) * f);
        let rate = background_rate(s);
        let mu = rate * frame.width;
        let dark = DETECTOR_COUNT * s.bsm.detector.dark_rate;
        let p_sig = |x: bool, q: f64| if x { q } else { 1.0 - q };
        let mut patterns = Vec::new();
        let mut acc = 0.0;
        let mut poisson = (-mu).exp();
        for k in 0..=MAX_BACKGROUND_CLICKS {
            if k > 0 {
                poisson *= mu / k as f64;
            }
            for x1 in [false, true] {
                for x2 in [false, true] {
                    if (x1 as u64) + (x2 as u64) + k < 2 {
                        continue;
                    }
                    acc += p_sig(x1, signal[0]) * p_sig(x2, signal[1]) * poisson;
                    patterns.push(((x1, x2, k), acc));
                }
            }
        }
        Self {
            frame,
            window: acceptance_window(s),
            dark_share: if rate > 0.0 { dark / rate } else { 0.0 },
            detector_jitter: s.bsm.detector.timing_jitter,
            delta_tau: s.bsm.delta_tau,
            patterns,
            candidate_probability: acc,
        }
    }

    fn sample_pattern<R: Rng + ?Sized>(&self, rng: &mut R) -> (bool, bool, u64) {
        let u = rng.random::<f64>() * self.candidate_probability;
        self.patterns.iter().find(|(_, c)| u < *c).map(|(p, _)| *p).unwrap_or(self.patterns.last().expect("non-empty").0)
    }
}

#[derive(Debug, Clone, Copy)]
struct RawClick {
    time: f64,
    /// Node index for signal photons.
    node: Option<usize>,
    origin: ClickOrigin,
}

fn random_detector<R: Rng + ?Sized>(rng: &mut R) -> DetectorLabel {
    DetectorLabel::ALL[rng.random_range(0..4)]
}

/// Detector pair for two photons with interference weight `xi`, returned in random order.
fn interference_pair<R: Rng + ?Sized>(xi: f64, rng: &mut R) -> (DetectorLabel, DetectorLabel) {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let pairs = unordered_pairs();
    let mut chosen = pairs[pairs.len() - 1];
    for &(a, b) in &pairs {
        acc += pair_probability(a, b, xi);
        if u < acc {
            chosen = (a, b);
            break;
        }
    }
    if rng.random::<bool>() { (chosen.1, chosen.0) } else { chosen }
}

fn sample_outcome<R: Rng + ?Sized>(p: &JointProbabilities, rng: &mut R) -> EventReadout {
    let a = p.as_array();
    let total: f64 = a.iter().sum();
    let u = rng.random::<f64>() * total;
    let idx = if u < a[0] {
        0
    } else if u < a[0] + a[1] {
        1
    } else if u < a[0] + a[1] + a[2] {
        2
    } else {
        3
    };
    EventReadout { node1_up: idx < 2, node2_up: idx % 2 == 0 }
}

/// Runs the try sequence and streams every herald to `sink` with its click rows; recorded
/// coincidences that yield no event arrive with `None`.
pub fn run_sequence_with<F>(
    s: &Scenario,
    mode: RunMode,
    target: RunTarget,
    seed: u64,
    model: &HeraldModel,
    mut sink: F,
) -> Result<RunSummary, ProtocolError>
where
    F: FnMut(Option<&HeraldedEvent>, &[ClickRecord]) -> Result<(), ProtocolError>,
{
    s.validate()?;
    if target.events.is_none() && target.duration.is_none() {
        return Err(ProtocolError::InvalidConfig("run needs an event count or a duration".into()));
    }
    let mut timing = ChaCha8Rng::seed_from_u64(seed);
    timing.set_stream(0);
    let mut physics = ChaCha8Rng::seed_from_u64(seed);
    physics.set_stream(1);

    let clicks_model = ClickModel::new(s);
    let p_try = match mode {
        RunMode::DensityMatrix => herald_probability(s, &acceptance_window(s)),
        RunMode::SampledClicks => clicks_model.candidate_probability,
    };
    let wants_events = target.events.map(|n| n > 0).unwrap_or(true);
    if p_try <= 0.0 && target.duration.is_none() && wants_events {
        return Err(ProtocolError::InvalidConfig("zero herald probability with an event target never ends".into()));
    }
    let settings = s.readout.setting_pairs();
    let period = try_period(s);
    let geometric = if p_try > 0.0 { Some(Geometric::new(p_try.min(1.0)).expect("probability in (0, 1]")) } else { None };
    let max_events = target.events.unwrap_or(usize::MAX);
    let max_time = target.duration.unwrap_or(f64::INFINITY);

    let mut clock = SequenceClock::new(&s.sequence, &mut timing);
    let mut events = 0usize;
    let mut outcomes = [0usize; 2];
    let mut tries = 0u64;
    let mut useful = 0.0;
    let mut recorded = 0usize;
    let mut fidelity_sum = 0.0;
    let mut xi_sum = 0.0;
    let mut end_time = 0.0;
    let mut row_buf: Vec<ClickRecord> = Vec::with_capacity(2);

    'run: while events < max_events && clock.now() < max_time {
        let iv = clock.next_interval(&mut timing);
        let n_block = ((iv.end - iv.start) / period).floor() as u64;
        let block_limit = if iv.start >= max_time { 0 } else { n_block.min(((max_time - iv.start) / period).floor() as u64) };
        useful += (block_limit as f64 * period).min(iv.end - iv.start);
        end_time = clock.now().min(max_time);
        let Some(geo) = &geometric else {
            tries += block_limit;
            continue;
        };
        let mut k = 0u64;
        loop {
            let skip = geo.sample(&mut timing);
            if skip >= block_limit - k {
                tries += block_limit - k;
                break;
            }
            k += skip + 1;
            tries += skip + 1;
            let wall_time = iv.start + (k - 1) as f64 * period;
            let jitter = model.sample_jitter(&mut physics);
            let xi = model.indistinguishability(jitter);
            let setting = settings[events % settings.len()];
            row_buf.clear();

            let (outcome, kind, timestamps) = match mode {
                RunMode::DensityMatrix => {
                    let outcome = if physics.random::<bool>() { BellOutcome::PsiPlus } else { BellOutcome::PsiMinus };
                    (outcome, None, None)
                }
                RunMode::SampledClicks => {
                    match resolve_candidate(&clicks_model, model, jitter, xi, &mut physics) {
                        None => continue,
                        Some(c) => {
                            row_buf.extend_from_slice(&c.rows);
                            if c.outcome.is_some() {
                                recorded += 1;
                            }
                            match (c.outcome, c.accepted) {
                                (Some(o), true) => (o, Some(c.kind), Some([c.rows[0].timestamp, c.rows[1].timestamp])),
                                _ => {
                                    sink(None, &row_buf)?;
                                    continue;
                                }
                            }
                        }
                    }
                }
            };

            let residuals = model.sample_residuals(wall_time, &mut physics);
            let prepared = match kind {
                None => model.mixed_state(outcome, xi, &residuals)?,
                Some(kind) => model.heralded_state(kind, outcome, &residuals)?,
            };
            let state = model.stored(&prepared)?;
            let probs = joint_readout_probabilities(&state, setting.node1, setting.node2)?;
            let fidelity = state.fidelity_to_pure(&atom_bell_state(outcome));
            let readout = (mode == RunMode::SampledClicks).then(|| sample_outcome(&probs, &mut physics));
            let event = HeraldedEvent {
                index: events,
                wall_time,
                outcome,
                setting,
                readout_times: model.readout_times,
                timestamps,
                kind,
                indistinguishability: xi,
                fidelity,
                probabilities: (mode == RunMode::DensityMatrix).then_some(probs),
                readout,
                state: Some(state),
            };
            sink(Some(&event), &row_buf)?;
            events += 1;
            outcomes[(outcome == BellOutcome::PsiMinus) as usize] += 1;
            fidelity_sum += fidelity;
            xi_sum += xi;
            if events >= max_events {
                end_time = wall_time;
                break 'run;
            }
        }
    }

    let wall = end_time.max(f64::MIN_POSITIVE);
    let duty = (useful / wall).min(1.0);
    let rates = rate_budget(s, duty);
    let accepted = match mode {
        RunMode::DensityMatrix => accepted_fraction(s),
        RunMode::SampledClicks => {
            if recorded > 0 {
                events as f64 / recorded as f64
            } else {
                0.0
            }
        }
    };
    Ok(RunSummary {
        scenario: s.name.clone(),
        mode,
        seed,
        events,
        psi_plus: outcomes[0],
        psi_minus: outcomes[1],
        tries,
        wall_time: end_time,
        rates,
        observed_event_rate: events as f64 / wall,
        sbr: sbr_model(s),
        accepted_fraction: accepted,
        recorded_heralds: recorded,
        mean_fidelity: (events > 0).then(|| fidelity_sum / events as f64),
        mean_indistinguishability: (events > 0).then(|| xi_sum / events as f64),
    })
}

struct Candidate {
    rows: [ClickRecord; 2],
    outcome: Option<BellOutcome>,
    accepted: bool,
    kind: HeraldKind,
}

/// Turns a try with at least two clicks into a recorded coincidence, if its detectors differ.
fn resolve_candidate<R: Rng + ?Sized>(
    cm: &ClickModel,
    model: &HeraldModel,
    jitter: [f64; 2],
    xi: f64,
    rng: &mut R,
) -> Option<Candidate> {
    let (x1, x2, k) = cm.sample_pattern(rng);
    let mut raw: Vec<RawClick> = Vec::with_capacity(2 + k as usize);
    let det_jitter = (cm.detector_jitter > 0.0).then(|| Normal::new(0.0, cm.detector_jitter).expect("positive"));
    for (node, present) in [(0usize, x1), (1usize, x2)] {
        if !present {
            continue;
        }
        let offset = jitter[node] + if node == 1 { cm.delta_tau } else { 0.0 };
        let time = loop {
            let mut t = model.wavepacket.sample_emission_time(rng) + offset;
            if let Some(d) = &det_jitter {
                t += d.sample(rng);
            }
            if cm.frame.contains(t) {
                break t;
            }
        };
        raw.push(RawClick { time, node: Some(node), origin: ClickOrigin::Signal });
    }
    for _ in 0..k {
        let origin = if rng.random::<f64>() < cm.dark_share { ClickOrigin::Dark } else { ClickOrigin::Background };
        raw.push(RawClick { time: cm.frame.start + rng.random::<f64>() * cm.frame.width, node: None, origin });
    }
    raw.sort_by(|a, b| a.time.total_cmp(&b.time));
    let (a, b) = (raw[0], raw[1]);
    let both_signal = a.node.is_some() && b.node.is_some();
    let (kind, (da, db)) = if both_signal {
        let interfered = rng.random::<f64>() < xi;
        let column = if interfered { 1.0 } else { 0.0 };
        let kind = if interfered { HeraldKind::Interfered } else { HeraldKind::Distinguishable };
        (kind, interference_pair(column, rng))
    } else {
        (HeraldKind::Background, (random_detector(rng), random_detector(rng)))
    };
    let class = classify_pair(da, db);
    if class == CoincidenceClass::NotDetected {
        return None;
    }
    let rows = [
        ClickRecord { detector: da, timestamp: a.time, origin: a.origin },
        ClickRecord { detector: db, timestamp: b.time, origin: b.origin },
    ];
    let accepted = cm.window.contains(a.time) && cm.window.contains(b.time);
    Some(Candidate { rows, outcome: class.heralded(), accepted, kind })
}

/// Collects a full run in memory.
pub fn run_sequence(s: &Scenario, mode: RunMode, target: RunTarget, seed: u64) -> Result<RunOutput, ProtocolError> {
    let model = HeraldModel::new(s)?;
    run_sequence_with_model(s, mode, target, seed, &model)
}

pub fn run_sequence_with_model(
    s: &Scenario,
    mode: RunMode,
    target: RunTarget,
    seed: u64,
    model: &HeraldModel,
) -> Result<RunOutput, ProtocolError> {
    let mut events = Vec::new();
    let mut clicks = Vec::new();
    let summary = run_sequence_with(s, mode, target, seed, model, |e, rows| {
        clicks.extend_from_slice(rows);
        if let Some(e) = e {
            events.push(e.clone());
        }
        Ok(())
    })?;
    let (psi_plus, psi_minus) = super::events::datasets_from_events(&events);
    Ok(RunOutput { events, clicks, psi_plus, psi_minus, summary })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterferencePoint {
    pub delta_tau: f64,
    pub n_null: u64,
    pub n_plus: u64,
    pub n_minus: u64,
    pub contrast: f64,
    pub contrast_error: f64,
    /// Model contrast at this offset.
    pub expected: f64,
}

/// Coincidence statistics versus deliberate arrival-time offset of the node-2 photon.
pub fn interference_scan(
    s: &Scenario,
    delta_taus: &[f64],
    coincidences_per_point: usize,
    seed: u64,
) -> Result<Vec<InterferencePoint>, ProtocolError> {
    s.validate()?;
    let base = HeraldModel::with_channels(
        s,
        [crate::dephasing::MemoryChannel::identity(), crate::dephasing::MemoryChannel::identity()],
    );
    let r = background_weight(s);
    let mut out = Vec::with_capacity(delta_taus.len());
    for (i, &dt) in delta_taus.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let model = HeraldModel { delta_tau: dt, ..base.clone() };
        let mut counts = [0u64; 4];
        for _ in 0..coincidences_per_point {
            let (a, b) = if rng.random::<f64>() < r {
                (random_detector(&mut rng), random_detector(&mut rng))
            } else {
                let xi = model.indistinguishability(model.sample_jitter(&mut rng));
                let column = if rng.random::<f64>() < xi { 1.0 } else { 0.0 };
                interference_pair(column, &mut rng)
            };
            counts[classify_pair(a, b) as usize] += 1;
        }
        let [_, n_null, n_plus, n_minus] = counts;
        let (contrast, contrast_error) = contrast_with_error(n_null as f64, n_plus as f64, n_minus as f64)?;
        out.push(InterferencePoint {
            delta_tau: dt,
            n_null,
            n_plus,
            n_minus,
            contrast,
            contrast_error,
            expected: super::rates::expected_contrast(s, dt),
        });
    }
    Ok(out)
}
