//! Photon path from the node to the detectors: fibre, conversion background, wavepackets,
//! polarization drift and the Bell-state analyzer.

mod detection;
mod link;
mod polarization;
mod wavepacket;

pub use detection::{
    classify_coincidence, classify_pair, coincidence_distribution, pair_probability, pair_probability_no_interference,
    pair_probability_perfect_interference, read_clicks_csv, unordered_pairs, write_clicks_csv, ClickOrigin, ClickRecord,
    CoincidenceClass, DetectorLabel, DetectorParams, GroupProbabilities, QfcParams,
};
pub use link::{background_in_window, link_transmission, propagation_delay, sample_counts, Decibels, FibreLink};
pub use polarization::{
    apply_polarization_error, compensator, drift_step, jones_of, max_supported_drift_rate, polarization_control_cycle,
    predicted_average_error, residual_error, simulate_drift_control, stokes_of, ControlOutcome, ControllerState,
    DriftControlConfig, DriftControlReport, FibreUnitary, Stokes, CONVERGED_RESIDUAL, PROBES, STOKES_D, STOKES_H,
    STOKES_R, STOKES_V,
};
pub use wavepacket::{indistinguishability, temporal_overlap, PhotonWavepacket};

#[derive(Debug, thiserror::Error)]
pub enum ChannelError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
