//! Two-node experiment: scenario description, rate budget, try sequence and heralded events.

mod calibration;
mod config;
mod duty;
mod events;
mod fidelity;
mod herald;
mod presets;
mod rates;
mod sequence;

pub use calibration::{calibrate, CalibrationReport, CalibrationTargets, RateTarget, Residual};
pub use config::{
    BsmConfig, LinkScenario, Links, NodeConfig, Nodes, ReadoutConfig, Scenario, Schedule, SequenceConfig, SettingEntry,
};
pub use duty::{simulate_duty_cycle, simulate_trap_occupancy, DutyCycleReport, SequenceClock, TryInterval};
pub use events::{datasets_from_events, read_events_jsonl, write_event_line, EventRecord};
pub use fidelity::{atom_photon_visibility_from_fidelity, calibrate_memory_visibility, fidelity_vs_length, FidelityRow};
pub use herald::{atom_photon_density, HeraldKind, HeraldModel};
pub use presets::{delay_only, equivalent_length_km, preset, table_presets, PRESET_NAMES};
pub use rates::{
    accepted_fraction, acceptance_window, background_rate, background_weight, check_readout_times, effective_readout_time,
    event_rate, expected_contrast, hardware_window, herald_probability, heralding_delay, mean_indistinguishability,
    node_detection_efficiency, photon_fraction, rate_budget, readout_bound, relative_jitter, repetition_rate, sbr_model,
    signal_in_window, snap_readout, success_probability, try_period, RateBudget, SbrModel, DETECTOR_COUNT,
};
pub use sequence::{
    interference_scan, run_sequence, run_sequence_with, run_sequence_with_model, EventReadout, HeraldedEvent, InterferencePoint, RunMode, RunOutput, RunSummary,
    RunTarget,
};

use crate::analysis::AnalysisError;
use crate::channel::ChannelError;
use crate::dephasing::DephasingError;
use crate::quantum::QuantumError;

#[derive(Debug, thiserror::Error)]
pub enum ProtocolError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("node {node} readout at {readout:e} s precedes the heralding bound {bound:e} s")]
    ReadoutTooEarly { node: usize, readout: f64, bound: f64 },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Quantum(#[from] QuantumError),
    #[error(transparent)]
    Dephasing(#[from] DephasingError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
