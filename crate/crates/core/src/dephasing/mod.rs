//! Spin-1 memory dephasing of an atom moving in a dipole trap.

mod channel;
mod envelope;
mod field;
mod spin;
mod trap;

pub use channel::{
    default_time_step, dephasing_channel, reference_rotation, simulate_channel_family, ChannelFamily, DephasingConfig,
    MemoryChannel,
};
pub use envelope::{coherence_envelope, dominant_frequency, moving_average, Basis, CoherenceEnvelope};
pub use field::{depth_field_equivalent, fictitious_field, local_effective_field, FieldEnvironment};
pub use spin::{evolve_spin1, spin1_operators, spin1_rotation, zeeman_step, SpinOperator, SpinTrajectoryResult, Spinor, ZEEMAN_RATE};
pub use trap::{
    max_time_step, oscillation_frequency, propagate_trajectory, sample_initial_conditions, AtomInitialCondition,
    MotionState, Trajectory, TrapParams, Vec3,
};

#[derive(Debug, thiserror::Error)]
pub enum DephasingError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("at least 100 trajectories required, got {0}")]
    TooFewTrajectories(usize),
    #[error("every sampled atom was unbound")]
    AllTrajectoriesEscaped,
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
