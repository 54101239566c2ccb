use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::quantum::{AtomBasisSetting, JointProbabilities};

/// Analysis settings of both nodes for one block of readouts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SettingPair {
    pub node1: AtomBasisSetting,
    pub node2: AtomBasisSetting,
}

impl SettingPair {
    pub fn new(node1: AtomBasisSetting, node2: AtomBasisSetting) -> Self {
        Self { node1, node2 }
    }

    /// Equal as measurements: projectors repeat every 180° of analysis angle.
    pub fn same_as(&self, other: &SettingPair) -> bool {
        same_setting(&self.node1, &other.node1) && same_setting(&self.node2, &other.node2)
    }
}

fn same_setting(a: &AtomBasisSetting, b: &AtomBasisSetting) -> bool {
    let d = (a.angle - b.angle).rem_euclid(PI);
    a.plane == b.plane && (d < 1e-9 || PI - d < 1e-9)
}

impl fmt::Display for SettingPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({:?} {:.2}°, {:?} {:.2}°)",
            self.node1.plane,
            self.node1.angle_deg(),
            self.node2.plane,
            self.node2.angle_deg()
        )
    }
}

/// N↑↑, N↑↓, N↓↑, N↓↓ (node 1 first). Fractional values hold expected counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub up_up: f64,
    pub up_down: f64,
    pub down_up: f64,
    pub down_down: f64,
}

impl OutcomeCounts {
    pub fn total(&self) -> f64 {
        self.up_up + self.up_down + self.down_up + self.down_down
    }

    pub fn correlated(&self) -> f64 {
        self.up_up + self.down_down
    }

    pub fn anticorrelated(&self) -> f64 {
        self.up_down + self.down_up
    }

    pub fn add(&mut self, other: &OutcomeCounts) {
        self.up_up += other.up_up;
        self.up_down += other.up_down;
        self.down_up += other.down_up;
        self.down_down += other.down_down;
    }

    /// Node-1 outcome labels exchanged.
    pub fn flip_node1(&self) -> OutcomeCounts {
        OutcomeCounts { up_up: self.down_up, up_down: self.down_down, down_up: self.up_up, down_down: self.up_down }
    }

    /// Node roles exchanged.
    pub fn swap_nodes(&self) -> OutcomeCounts {
        OutcomeCounts { up_up: self.up_up, up_down: self.down_up, down_up: self.up_down, down_down: self.down_down }
    }

    fn is_valid(&self) -> bool {
        [self.up_up, self.up_down, self.down_up, self.down_down].iter().all(|c| c.is_finite() && *c >= 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEntry {
    pub setting: SettingPair,
    pub counts: OutcomeCounts,
}

/// Outcome counts grouped by setting pair, in first-seen order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorrelationDataset {
    entries: Vec<CorrelationEntry>,
}

impl CorrelationDataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[CorrelationEntry] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, setting: &SettingPair) -> Option<&OutcomeCounts> {
        self.entries.iter().find(|e| e.setting.same_as(setting)).map(|e| &e.counts)
    }

    fn slot(&mut self, setting: &SettingPair) -> &mut OutcomeCounts {
        let i = match self.entries.iter().position(|e| e.setting.same_as(setting)) {
            Some(i) => i,
            None => {
                self.entries.push(CorrelationEntry { setting: *setting, counts: OutcomeCounts::default() });
                self.entries.len() - 1
            }
        };
        &mut self.entries[i].counts
    }

    /// Negative or non-finite counts are ignored.
    pub fn add_counts(&mut self, setting: &SettingPair, counts: &OutcomeCounts) {
        if counts.is_valid() {
            self.slot(setting).add(counts);
        }
    }

    pub fn add_outcome(&mut self, setting: &SettingPair, node1_up: bool, node2_up: bool) {
        let c = self.slot(setting);
        match (node1_up, node2_up) {
            (true, true) => c.up_up += 1.0,
            (true, false) => c.up_down += 1.0,
            (false, true) => c.down_up += 1.0,
            (false, false) => c.down_down += 1.0,
        }
    }

    /// Expected counts of one exactly known event.
    pub fn add_probabilities(&mut self, setting: &SettingPair, p: &JointProbabilities) {
        let counts = OutcomeCounts { up_up: p.up_up, up_down: p.up_down, down_up: p.down_up, down_down: p.down_down };
        self.add_counts(setting, &counts);
    }

    pub fn merge(&mut self, other: &CorrelationDataset) {
        for e in &other.entries {
            self.add_counts(&e.setting, &e.counts);
        }
    }

    pub fn total_events(&self) -> f64 {
        self.entries.iter().map(|e| e.counts.total()).sum()
    }

    /// Dataset with the node roles exchanged.
    pub fn swap_nodes(&self) -> CorrelationDataset {
        let entries = self
            .entries
            .iter()
            .map(|e| CorrelationEntry {
                setting: SettingPair::new(e.setting.node2, e.setting.node1),
                counts: e.counts.swap_nodes(),
            })
            .collect();
        CorrelationDataset { entries }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn settings_match_modulo_half_turn() {
        let a = SettingPair::new(AtomBasisSetting::equator_deg(10.0), AtomBasisSetting::x());
        let b = SettingPair::new(AtomBasisSetting::equator_deg(190.0), AtomBasisSetting::equator_deg(180.0));
        let c = SettingPair::new(AtomBasisSetting::equator_deg(100.0), AtomBasisSetting::x());
        assert!(a.same_as(&b));
        assert!(!a.same_as(&c));
    }

    #[test]
    fn outcomes_accumulate_per_setting() {
        let mut d = CorrelationDataset::new();
        let s = SettingPair::new(AtomBasisSetting::x(), AtomBasisSetting::x());
        d.add_outcome(&s, true, false);
        d.add_outcome(&s, false, false);
        d.add_outcome(&SettingPair::new(AtomBasisSetting::y(), AtomBasisSetting::y()), true, true);
        assert_eq!(d.entries().len(), 2);
        assert_eq!(d.get(&s).unwrap().total(), 2.0);
        assert_eq!(d.get(&s).unwrap().anticorrelated(), 1.0);
        assert_eq!(d.total_events(), 3.0);
    }
}
