//! Simulation and analysis toolkit for a heralded two-node atom-photon quantum network link.

pub mod constants;
pub mod quantum;
pub mod dephasing;
pub mod channel;
pub mod analysis;
pub mod protocol;
pub mod config;
