use serde::{Deserialize, Serialize};

use super::ProtocolError;
use crate::analysis::SettingPair;
use crate::channel::{DetectorParams, FibreLink, PhotonWavepacket, QfcParams};
use crate::dephasing::{FieldEnvironment, TrapParams};
use crate::quantum::{AtomBasisSetting, ChshCorrelators, Plane};

/// One memory node: state preparation, photon collection, trap and magnetic environment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeConfig {
    /// Optical pumping time per try, in s.
    pub pump_duration: f64,
    pub pump_efficiency: f64,
    /// Probability per try that an emitted photon reaches the converter in its fibre mode.
    pub collection_efficiency: f64,
    /// Std of the excitation timing offset relative to the other node, in s.
    pub sync_jitter_sigma: f64,
    /// Full radial oscillation period of the atom, in s.
    pub trap_oscillation_period: f64,
    /// Atom-photon visibility before any storage.
    pub atom_photon_visibility: f64,
    /// Atom temperature in K.
    pub temperature: f64,
    pub qfc: QfcParams,
    pub trap: TrapParams,
    pub field: FieldEnvironment,
}

impl NodeConfig {
    fn validate(&self, name: &str) -> Result<(), ProtocolError> {
        let bad = |field: &str, msg: String| ProtocolError::InvalidConfig(format!("nodes.{name}.{field}: {msg}"));
        for (field, v) in [
            ("pump_efficiency", self.pump_efficiency),
            ("collection_efficiency", self.collection_efficiency),
            ("atom_photon_visibility", self.atom_photon_visibility),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(bad(field, format!("must be in [0, 1], got {v}")));
            }
        }
        for (field, v) in [
            ("pump_duration", self.pump_duration),
            ("sync_jitter_sigma", self.sync_jitter_sigma),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(bad(field, format!("must be non-negative, got {v}")));
            }
        }
        if !(self.trap_oscillation_period > 0.0 && self.temperature > 0.0) {
            return Err(bad("trap_oscillation_period", "period and temperature must be positive".into()));
        }
        self.qfc.validate().map_err(|e| bad("qfc", e.to_string()))?;
        self.trap.validate().map_err(|e| bad("trap", e.to_string()))?;
        self.field.validate().map_err(|e| bad("field", e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Nodes {
    pub node1: NodeConfig,
    pub node2: NodeConfig,
}

impl Nodes {
    pub fn get(&self, node: usize) -> &NodeConfig {
        if node == 0 { &self.node1 } else { &self.node2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Links {
    pub node1: FibreLink,
    pub node2: FibreLink,
    /// Polarization random-walk rate per Poincaré axis, rad/√s.
    pub drift_rate: f64,
    /// Time between polarization control cycles, in s.
    pub control_cadence: f64,
}

impl Links {
    pub fn get(&self, node: usize) -> &FibreLink {
        if node == 0 { &self.node1 } else { &self.node2 }
    }
}

/// Middle station: detectors, photon temporal mode and coincidence windows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BsmConfig {
    pub detector: DetectorParams,
    pub wavepacket: PhotonWavepacket,
    /// Indistinguishability ceiling from residual mode mismatch.
    pub xi_max: f64,
    /// Deliberate arrival offset of the node-2 photon, in s.
    pub delta_tau: f64,
    /// Post-processing window width, in s.
    pub acceptance_window: f64,
    /// Post-processing window start relative to the arrival reference, in s.
    pub window_start: f64,
    /// Hard-wired coincidence window, in s.
    pub hardware_window: f64,
    /// Start of the hardware window relative to the arrival reference, in s.
    pub frame_start: f64,
}

impl BsmConfig {
    fn validate(&self) -> Result<(), ProtocolError> {
        let bad = |field: &str, msg: String| ProtocolError::InvalidConfig(format!("bsm.{field}: {msg}"));
        self.detector.validate().map_err(|e| bad("detector", e.to_string()))?;
        self.wavepacket.validate().map_err(|e| bad("wavepacket", e.to_string()))?;
        if !(0.0..=1.0).contains(&self.xi_max) {
            return Err(bad("xi_max", format!("must be in [0, 1], got {}", self.xi_max)));
        }
        if !(self.acceptance_window >= 0.0 && self.hardware_window > 0.0) {
            return Err(bad("acceptance_window", "windows must be non-negative".into()));
        }
        if self.window_start < self.frame_start || self.window_start + self.acceptance_window > self.frame_start + self.hardware_window {
            return Err(bad("window_start", "acceptance window must lie inside the hardware window".into()));
        }
        if !self.delta_tau.is_finite() {
            return Err(bad("delta_tau", "must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceConfig {
    pub tries_per_cooling_block: u32,
    /// Re-cooling after each block of tries, in s.
    pub cooling_duration: f64,
    /// Interval of tries between presence checks, in s.
    pub block_period: f64,
    pub presence_check_duration: f64,
    /// Mean atom lifetime in the trap, in s.
    pub trap_lifetime: f64,
    /// Mean time to load a new atom, in s.
    pub loading_time: f64,
    /// Per-try time not spent waiting for photons (pumping, excitation, amortized cooling), in s.
    pub try_overhead: f64,
    /// Fixed duty cycle for rate budgets; the renewal simulation is used when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duty_cycle: Option<f64>,
}

impl SequenceConfig {
    fn validate(&self) -> Result<(), ProtocolError> {
        let bad = |field: &str, v: f64| ProtocolError::InvalidConfig(format!("sequence.{field}: must be positive, got {v}"));
        for (field, v) in [
            ("block_period", self.block_period),
            ("trap_lifetime", self.trap_lifetime),
            ("try_overhead", self.try_overhead),
        ] {
            if !(v > 0.0) {
                return Err(bad(field, v));
            }
        }
        for (field, v) in [
            ("cooling_duration", self.cooling_duration),
            ("presence_check_duration", self.presence_check_duration),
            ("loading_time", self.loading_time),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(bad(field, v));
            }
        }
        if self.tries_per_cooling_block == 0 {
            return Err(bad("tries_per_cooling_block", 0.0));
        }
        if let Some(d) = self.duty_cycle {
            if !(0.0..=1.0).contains(&d) {
                return Err(ProtocolError::InvalidConfig(format!("sequence.duty_cycle: must be in [0, 1], got {d}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    /// (k,k) and (−k,k) for k = X, Y, Z.
    ThreeBasis,
    /// Node-1 angle stepped in 22.5° over 90° with node 2 at X, then at Y.
    FringeScan,
    /// The four CHSH setting pairs.
    Chsh,
    /// The explicit `settings` list.
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SettingEntry {
    pub node1_deg: f64,
    pub node2_deg: f64,
    #[serde(default = "default_plane")]
    pub plane: Plane,
}

fn default_plane() -> Plane {
    Plane::Equator
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadoutConfig {
    /// Readout delay after excitation, in s.
    pub node1_time: f64,
    pub node2_time: f64,
    /// Round readouts up to whole trap oscillation periods after the signalling bound.
    #[serde(default)]
    pub snap_to_period: bool,
    pub schedule: Schedule,
    #[serde(default)]
    pub settings: Vec<SettingEntry>,
    /// Trajectories per node for the storage channel.
    pub dephasing_trajectories: usize,
    pub dephasing_seed: u64,
}

impl ReadoutConfig {
    /// Round-robin list of setting pairs.
    pub fn setting_pairs(&self) -> Vec<SettingPair> {
        let e = AtomBasisSetting::equator_deg;
        match self.schedule {
            Schedule::ThreeBasis => crate::analysis::three_basis_settings()
                .into_iter()
                .flat_map(|(a, b)| [a, b])
                .collect(),
            Schedule::FringeScan => {
                let mut v = Vec::new();
                for beta in [0.0, 45.0] {
                    for i in 0..5 {
                        v.push(SettingPair::new(e(beta + 22.5 * i as f64), e(beta)));
                    }
                }
                v
            }
            Schedule::Chsh => ChshCorrelators::settings().into_iter().map(|(a, b)| SettingPair::new(a, b)).collect(),
            Schedule::Custom => self
                .settings
                .iter()
                .map(|s| {
                    SettingPair::new(
                        AtomBasisSetting::new(s.node1_deg.to_radians(), s.plane),
                        AtomBasisSetting::new(s.node2_deg.to_radians(), s.plane),
                    )
                })
                .collect(),
        }
    }

    pub fn time(&self, node: usize) -> f64 {
        if node == 0 { self.node1_time } else { self.node2_time }
    }
}

/// One fibre configuration with its readout delays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkScenario {
    pub name: String,
    /// Total node-to-node fibre length, in km.
    pub total_length_km: f64,
    pub link1: FibreLink,
    pub link2: FibreLink,
    pub readout_time1: f64,
    pub readout_time2: f64,
}

/// Complete experiment description; every TOML scenario file deserializes into this.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub nodes: Nodes,
    pub links: Links,
    pub bsm: BsmConfig,
    pub sequence: SequenceConfig,
    pub readout: ReadoutConfig,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        self.nodes.node1.validate("node1")?;
        self.nodes.node2.validate("node2")?;
        for (name, link) in [("node1", &self.links.node1), ("node2", &self.links.node2)] {
            link.validate().map_err(|e| ProtocolError::InvalidConfig(format!("links.{name}: {e}")))?;
        }
        if !(self.links.drift_rate >= 0.0 && self.links.control_cadence > 0.0) {
            return Err(ProtocolError::InvalidConfig("links: drift_rate must be >= 0 and control_cadence > 0".into()));
        }
        self.bsm.validate()?;
        self.sequence.validate()?;
        if self.readout.dephasing_trajectories < 100 {
            return Err(ProtocolError::InvalidConfig(format!(
                "readout.dephasing_trajectories: at least 100 required, got {}",
                self.readout.dephasing_trajectories
            )));
        }
        if self.readout.setting_pairs().is_empty() {
            return Err(ProtocolError::InvalidConfig("readout.settings: custom schedule without settings".into()));
        }
        super::rates::check_readout_times(self)
    }

    pub fn link_scenario(&self) -> LinkScenario {
        LinkScenario {
            name: self.name.clone(),
            total_length_km: self.links.node1.length_km + self.links.node2.length_km,
            link1: self.links.node1,
            link2: self.links.node2,
            readout_time1: self.readout.node1_time,
            readout_time2: self.readout.node2_time,
        }
    }

    /// This scenario with the fibres and readout delays of `row`.
    pub fn with_links(&self, row: &LinkScenario) -> Scenario {
        let mut s = self.clone();
        s.name = row.name.clone();
        s.links.node1 = row.link1;
        s.links.node2 = row.link2;
        s.readout.node1_time = row.readout_time1;
        s.readout.node2_time = row.readout_time2;
        s
    }
}
