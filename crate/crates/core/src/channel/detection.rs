use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ChannelError;
use crate::quantum::BellOutcome;

/// Frequency-conversion stage of one node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QfcParams {
    pub external_efficiency: f64,
    /// Pump-induced background at the converter output, in counts/s.
    pub background_rate: f64,
}

impl QfcParams {
    pub fn validate(&self) -> Result<(), ChannelError> {
        check_probability("external_efficiency", self.external_efficiency)?;
        check_rate("background_rate", self.background_rate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorParams {
    pub efficiency: f64,
    /// Dark counts per detector, in counts/s.
    pub dark_rate: f64,
    /// Gaussian timing jitter (standard deviation) in s.
    #[serde(default)]
    pub timing_jitter: f64,
}

impl DetectorParams {
    pub fn validate(&self) -> Result<(), ChannelError> {
        check_probability("efficiency", self.efficiency)?;
        check_rate("dark_rate", self.dark_rate)?;
        check_rate("timing_jitter", self.timing_jitter)
    }
}

pub(crate) fn check_probability(name: &str, v: f64) -> Result<(), ChannelError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(ChannelError::InvalidParameter(format!("{name} must be in [0, 1], got {v}")))
    }
}

pub(crate) fn check_rate(name: &str, v: f64) -> Result<(), ChannelError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(ChannelError::InvalidParameter(format!("{name} must be non-negative, got {v}")))
    }
}

/// Detectors behind the two polarizing beamsplitters of the Bell-state analyzer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DetectorLabel {
    H1,
    V1,
    H2,
    V2,
}

impl DetectorLabel {
    pub const ALL: [DetectorLabel; 4] = [DetectorLabel::H1, DetectorLabel::V1, DetectorLabel::H2, DetectorLabel::V2];

    pub fn port(self) -> u8 {
        match self {
            DetectorLabel::H1 | DetectorLabel::V1 => 1,
            DetectorLabel::H2 | DetectorLabel::V2 => 2,
        }
    }

    pub fn is_horizontal(self) -> bool {
        matches!(self, DetectorLabel::H1 | DetectorLabel::H2)
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for DetectorLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DetectorLabel::H1 => "H1",
            DetectorLabel::V1 => "V1",
            DetectorLabel::H2 => "H2",
            DetectorLabel::V2 => "V2",
        };
        f.write_str(s)
    }
}

impl FromStr for DetectorLabel {
    type Err = ChannelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "H1" => Ok(DetectorLabel::H1),
            "V1" => Ok(DetectorLabel::V1),
            "H2" => Ok(DetectorLabel::H2),
            "V2" => Ok(DetectorLabel::V2),
            other => Err(ChannelError::Parse(format!("unknown detector label {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClickOrigin {
    Signal,
    Background,
    Dark,
}

impl fmt::Display for ClickOrigin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClickOrigin::Signal => "signal",
            ClickOrigin::Background => "background",
            ClickOrigin::Dark => "dark",
        })
    }
}

impl FromStr for ClickOrigin {
    type Err = ChannelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "signal" => Ok(ClickOrigin::Signal),
            "background" => Ok(ClickOrigin::Background),
            "dark" => Ok(ClickOrigin::Dark),
            other => Err(ChannelError::Parse(format!("unknown click origin {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClickRecord {
    pub detector: DetectorLabel,
    /// Time relative to the synchronized excitation of the try, in s.
    pub timestamp: f64,
    pub origin: ClickOrigin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoincidenceClass {
    NotDetected,
    DNull,
    DPlus,
    DMinus,
}

impl CoincidenceClass {
    pub const ALL: [CoincidenceClass; 4] =
        [CoincidenceClass::NotDetected, CoincidenceClass::DNull, CoincidenceClass::DPlus, CoincidenceClass::DMinus];

    pub fn heralded(self) -> Option<BellOutcome> {
        match self {
            CoincidenceClass::DPlus => Some(BellOutcome::PsiPlus),
            CoincidenceClass::DMinus => Some(BellOutcome::PsiMinus),
            _ => None,
        }
    }
}

/// Detector-pair taxonomy of the analyzer; order-insensitive.
pub fn classify_pair(a: DetectorLabel, b: DetectorLabel) -> CoincidenceClass {
    use DetectorLabel::*;
    if a == b {
        return CoincidenceClass::NotDetected;
    }
    let (x, y) = if a <= b { (a, b) } else { (b, a) };
    match (x, y) {
        (H1, H2) | (V1, V2) => CoincidenceClass::DNull,
        (H1, V1) | (H2, V2) => CoincidenceClass::DPlus,
        (H1, V2) | (V1, H2) => CoincidenceClass::DMinus,
        _ => unreachable!("ordered distinct pairs are exhausted above"),
    }
}

pub fn classify_coincidence(a: &ClickRecord, b: &ClickRecord) -> CoincidenceClass {
    classify_pair(a.detector, b.detector)
}

/// The 10 unordered detector pairs, same-detector pairs first.
pub fn unordered_pairs() -> Vec<(DetectorLabel, DetectorLabel)> {
    let mut out = Vec::with_capacity(10);
    for (i, &a) in DetectorLabel::ALL.iter().enumerate() {
        out.push((a, a));
        for &b in &DetectorLabel::ALL[i + 1..] {
            out.push((a, b));
        }
    }
    out.sort_by_key(|&(a, b)| (a != b, a, b));
    out
}

/// Probability of one unordered pair for distinguishable photons.
pub fn pair_probability_no_interference(a: DetectorLabel, b: DetectorLabel) -> f64 {
    if a == b {
        1.0 / 16.0
    } else {
        1.0 / 8.0
    }
}

/// Probability of one unordered pair for perfectly interfering, unpolarized photons.
pub fn pair_probability_perfect_interference(a: DetectorLabel, b: DetectorLabel) -> f64 {
    match classify_pair(a, b) {
        CoincidenceClass::NotDetected => 1.0 / 8.0,
        CoincidenceClass::DNull => 0.0,
        CoincidenceClass::DPlus | CoincidenceClass::DMinus => 1.0 / 8.0,
    }
}

/// Pair probability mixed linearly between the two limits.
pub fn pair_probability(a: DetectorLabel, b: DetectorLabel, xi: f64) -> f64 {
    xi * pair_probability_perfect_interference(a, b) + (1.0 - xi) * pair_probability_no_interference(a, b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupProbabilities {
    pub not_detected: f64,
    pub d_null: f64,
    pub d_plus: f64,
    pub d_minus: f64,
}

impl GroupProbabilities {
    pub fn get(&self, class: CoincidenceClass) -> f64 {
        match class {
            CoincidenceClass::NotDetected => self.not_detected,
            CoincidenceClass::DNull => self.d_null,
            CoincidenceClass::DPlus => self.d_plus,
            CoincidenceClass::DMinus => self.d_minus,
        }
    }

    pub fn total(&self) -> f64 {
        self.not_detected + self.d_null + self.d_plus + self.d_minus
    }
}

pub fn coincidence_distribution(xi: f64) -> Result<GroupProbabilities, ChannelError> {
    check_probability("indistinguishability", xi)?;
    let mut g = GroupProbabilities { not_detected: 0.0, d_null: 0.0, d_plus: 0.0, d_minus: 0.0 };
    for (a, b) in unordered_pairs() {
        let p = pair_probability(a, b, xi);
        match classify_pair(a, b) {
            CoincidenceClass::NotDetected => g.not_detected += p,
            CoincidenceClass::DNull => g.d_null += p,
            CoincidenceClass::DPlus => g.d_plus += p,
            CoincidenceClass::DMinus => g.d_minus += p,
        }
    }
    Ok(g)
}

/// Writes clicks as CSV with columns detector, timestamp_ns, origin.
pub fn write_clicks_csv<W: Write>(clicks: &[ClickRecord], out: W) -> Result<(), ChannelError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["detector", "timestamp_ns", "origin"])?;
    for c in clicks {
        w.write_record([c.detector.to_string(), format!("{:.4}", c.timestamp * 1e9), c.origin.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Lines starting with `#` are skipped; errors report the 1-based file line.
pub fn read_clicks_csv<R: Read>(input: R) -> Result<Vec<ClickRecord>, ChannelError> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != 3 {
            return Err(ChannelError::Parse(format!("line {line}: expected 3 fields, found {}", rec.len())));
        }
        let detector = rec[0].parse().map_err(|e: ChannelError| ChannelError::Parse(format!("line {line}: {e}")))?;
        let ns: f64 = rec[1]
            .parse()
            .map_err(|_| ChannelError::Parse(format!("line {line}: bad timestamp {:?}", &rec[1])))?;
        if !ns.is_finite() {
            return Err(ChannelError::Parse(format!("line {line}: non-finite timestamp")));
        }
        let origin = rec[2].parse().map_err(|e: ChannelError| ChannelError::Parse(format!("line {line}: {e}")))?;
        out.push(ClickRecord { detector, timestamp: ns * 1e-9, origin });
    }
    Ok(out)
}
