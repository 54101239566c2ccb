//! Estimators applied to recorded or simulated data.

mod dataset;
mod estimators;
mod fit;
mod histogram;

pub use dataset::{CorrelationDataset, CorrelationEntry, OutcomeCounts, SettingPair};
pub use estimators::{
    acceptance_filter, basis_contrast, binomial_stderr, chsh_from_dataset, combine_sbr, contrast_with_error,
    correlation_probability, fidelity_bound, fidelity_bound_error, interference_contrast, pair_clicks, pool_outcomes,
    three_basis_analysis, three_basis_settings, BasisContrast, ChshEstimate, Coincidence, FilterResult,
    ThreeBasisResult,
};
pub use fit::{fringe_fit, FringeFit};
pub use histogram::{sbr, DetectionHistogram, SbrEstimate, TimeWindow};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalysisError {
    #[error("no counts available: {0}")]
    EmptyDenominator(&'static str),
    #[error("value {value} of {name} outside [0, 1]")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("fit needs at least {needed} distinct angles, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("fit design matrix is singular")]
    SingularFit,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("missing setting pair {0}")]
    MissingSetting(String),
}
