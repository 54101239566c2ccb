//! Finite-dimensional state algebra for atom qutrits and photon polarization qubits.

pub mod basis;
mod ops;
mod state;

pub use ops::{
    atom_bell_state, atom_photon_state, bell_project, chsh_s, joint_readout_probabilities, measure_atom,
    photon_bell_state, project_photons, readout_projectors, setting_vectors, AtomBasisSetting, AtomMeasurement, BellOutcome,
    ChshCorrelators, JointProbabilities, Plane,
};
pub use state::{
    embed_local, unitary_superop, CMatrix, CVector, DensityMatrix, HilbertSpace, StateVector, C64, HERMITIAN_TOL,
    NORM_TOL, PSD_TOL, TRACE_TOL,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QuantumError {
    #[error("invalid Hilbert space: {0}")]
    InvalidSpace(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("state not normalized (norm {0})")]
    NotNormalized(f64),
    #[error("matrix not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),
    #[error("trace {0} differs from 1")]
    BadTrace(f64),
    #[error("matrix not positive semidefinite (min eigenvalue {0:e})")]
    NotPositive(f64),
    #[error("subsystem {index} out of range for {count} subsystems")]
    InvalidSubsystem { index: usize, count: usize },
    #[error("subsystem {0} is not a qutrit")]
    NotQutrit(usize),
    #[error("outcome impossible (probability {0:e})")]
    ImpossibleOutcome(f64),
    #[error("correlator {0} outside [-1, 1]")]
    CorrelatorOutOfRange(f64),
}
