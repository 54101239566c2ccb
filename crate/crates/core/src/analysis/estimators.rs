use serde::{Deserialize, Serialize};

use super::dataset::{CorrelationDataset, OutcomeCounts, SettingPair};
use super::AnalysisError;
use crate::channel::ClickRecord;
use crate::quantum::{atom_bell_state, chsh_s, joint_readout_probabilities, AtomBasisSetting, BellOutcome, ChshCorrelators};

/// Two clicks recorded by one hardware coincidence trigger.
pub type Coincidence = [ClickRecord; 2];

/// Groups a click stream written two rows per coincidence.
pub fn pair_clicks(clicks: &[ClickRecord]) -> Result<Vec<Coincidence>, AnalysisError> {
    if clicks.len() % 2 != 0 {
        return Err(AnalysisError::InvalidInput(format!("click stream has an odd number of rows ({})", clicks.len())));
    }
    Ok(clicks.chunks_exact(2).map(|c| [c[0], c[1]]).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterResult {
    pub accepted: Vec<Coincidence>,
    /// Accepted over recorded; 0 for an empty input.
    pub fraction: f64,
}

/// Keeps coincidences whose two clicks both lie in [start, start + window].
///
/// An infinite window accepts everything regardless of `start`.
pub fn acceptance_filter(coincidences: &[Coincidence], window: f64, start: f64) -> Result<FilterResult, AnalysisError> {
    if !(window >= 0.0) {
        return Err(AnalysisError::InvalidInput(format!("acceptance window must be non-negative, got {window}")));
    }
    let inside = |t: f64| window == f64::INFINITY || (t >= start && t <= start + window);
    let accepted: Vec<Coincidence> =
        coincidences.iter().filter(|c| inside(c[0].timestamp) && inside(c[1].timestamp)).copied().collect();
    let fraction = if coincidences.is_empty() { 0.0 } else { accepted.len() as f64 / coincidences.len() as f64 };
    Ok(FilterResult { accepted, fraction })
}

/// C = 1 − 2·N_null/(N_plus + N_minus).
pub fn interference_contrast(n_null: f64, n_plus: f64, n_minus: f64) -> Result<f64, AnalysisError> {
    let heralded = n_plus + n_minus;
    if !(heralded > 0.0) {
        return Err(AnalysisError::EmptyDenominator("interference contrast needs D+ or D- events"));
    }
    Ok(1.0 - 2.0 * n_null / heralded)
}

/// Contrast and its Poisson standard error.
pub fn contrast_with_error(n_null: f64, n_plus: f64, n_minus: f64) -> Result<(f64, f64), AnalysisError> {
    let c = interference_contrast(n_null, n_plus, n_minus)?;
    let d = n_plus + n_minus;
    let var = 4.0 * (n_null / (d * d) + n_null * n_null / (d * d * d));
    Ok((c, var.sqrt()))
}

/// (P_corr, P_acorr) of one setting pair.
pub fn correlation_probability(counts: &OutcomeCounts) -> Result<(f64, f64), AnalysisError> {
    let n = counts.total();
    if !(n > 0.0) {
        return Err(AnalysisError::EmptyDenominator("correlation probability of an empty setting"));
    }
    let p = counts.correlated() / n;
    Ok((p, 1.0 - p))
}

pub fn binomial_stderr(p: f64, n: f64) -> f64 {
    if n > 0.0 {
        (p * (1.0 - p) / n).max(0.0).sqrt()
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisContrast {
    pub e_x: f64,
    pub e_y: f64,
    pub e_z: f64,
    pub mean: f64,
}

/// E_k = |P_{k,k} − P_{−k,k}| for k = X, Y, Z, plus their mean.
pub fn basis_contrast(pairs: [(f64, f64); 3]) -> Result<BasisContrast, AnalysisError> {
    for (a, b) in pairs {
        for v in [a, b] {
            if !(0.0..=1.0).contains(&v) {
                return Err(AnalysisError::OutOfRange { name: "correlation probability", value: v });
            }
        }
    }
    let e = pairs.map(|(a, b)| (a - b).abs());
    Ok(BasisContrast { e_x: e[0], e_y: e[1], e_z: e[2], mean: (e[0] + e[1] + e[2]) / 3.0 })
}

/// F ≥ 1/9 + 8/9·V̄ for a qutrit pair carrying the correlations in its qubit subspace.
pub fn fidelity_bound(visibility: f64) -> Result<f64, AnalysisError> {
    if !(0.0..=1.0).contains(&visibility) {
        return Err(AnalysisError::OutOfRange { name: "visibility", value: visibility });
    }
    Ok(1.0 / 9.0 + 8.0 / 9.0 * visibility)
}

pub fn fidelity_bound_error(visibility_error: f64) -> f64 {
    8.0 / 9.0 * visibility_error
}

/// (k,k) and (−k,k) setting pairs for X, Y and Z, in that order.
pub fn three_basis_settings() -> [(SettingPair, SettingPair); 3] {
    [AtomBasisSetting::x(), AtomBasisSetting::y(), AtomBasisSetting::z()]
        .map(|k| (SettingPair::new(k, k), SettingPair::new(k.opposite(), k)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThreeBasisResult {
    pub contrast: BasisContrast,
    pub contrast_errors: [f64; 3],
    pub mean_error: f64,
    pub fidelity: f64,
    pub fidelity_error: f64,
    pub events: f64,
}

pub fn three_basis_analysis(data: &CorrelationDataset) -> Result<ThreeBasisResult, AnalysisError> {
    let mut pairs = [(0.0, 0.0); 3];
    let mut errors = [0.0; 3];
    let mut events = 0.0;
    for (i, (same, opposite)) in three_basis_settings().iter().enumerate() {
        let a = data.get(same).ok_or_else(|| AnalysisError::MissingSetting(same.to_string()))?;
        let b = data.get(opposite).ok_or_else(|| AnalysisError::MissingSetting(opposite.to_string()))?;
        let (pa, _) = correlation_probability(a)?;
        let (pb, _) = correlation_probability(b)?;
        pairs[i] = (pa, pb);
        errors[i] = binomial_stderr(pa, a.total()).hypot(binomial_stderr(pb, b.total()));
        events += a.total() + b.total();
    }
    let contrast = basis_contrast(pairs)?;
    let mean_error = (errors[0].powi(2) + errors[1].powi(2) + errors[2].powi(2)).sqrt() / 3.0;
    let fidelity = fidelity_bound(contrast.mean.clamp(0.0, 1.0))?;
    Ok(ThreeBasisResult {
        contrast,
        contrast_errors: errors,
        mean_error,
        fidelity,
        fidelity_error: fidelity_bound_error(mean_error),
        events,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChshEstimate {
    pub correlators: ChshCorrelators,
    pub correlator_errors: [f64; 4],
    pub s: f64,
    pub s_error: f64,
}

/// S from the four CHSH setting pairs, each correlator E = P_corr − P_acorr.
pub fn chsh_from_dataset(data: &CorrelationDataset) -> Result<ChshEstimate, AnalysisError> {
    let mut e = [0.0; 4];
    let mut err = [0.0; 4];
    for (i, (a, b)) in ChshCorrelators::settings().iter().enumerate() {
        let pair = SettingPair::new(*a, *b);
        let counts = data.get(&pair).ok_or_else(|| AnalysisError::MissingSetting(pair.to_string()))?;
        let (p, _) = correlation_probability(counts)?;
        e[i] = 2.0 * p - 1.0;
        err[i] = 2.0 * binomial_stderr(p, counts.total());
    }
    let correlators = ChshCorrelators { alpha_beta: e[0], alpha1_beta: e[1], alpha1_beta1: e[2], alpha2_beta1: e[3] };
    let s = chsh_s(&correlators).map_err(|err| AnalysisError::InvalidInput(err.to_string()))?;
    let s_error = err.iter().map(|x| x * x).sum::<f64>().sqrt();
    Ok(ChshEstimate { correlators, correlator_errors: err, s, s_error })
}

/// Pools Ψ− and Ψ+ data. Where the two ideal states predict opposite correlations for a setting,
/// the Ψ+ counts are relabeled (node-1 outcome flipped) before adding.
pub fn pool_outcomes(psi_minus: &CorrelationDataset, psi_plus: &CorrelationDataset) -> CorrelationDataset {
    let minus = atom_bell_state(BellOutcome::PsiMinus).to_density();
    let plus = atom_bell_state(BellOutcome::PsiPlus).to_density();
    let mut pooled = psi_minus.clone();
    for entry in psi_plus.entries() {
        let s = entry.setting;
        let em = joint_readout_probabilities(&minus, s.node1, s.node2).map(|p| p.correlator()).unwrap_or(0.0);
        let ep = joint_readout_probabilities(&plus, s.node1, s.node2).map(|p| p.correlator()).unwrap_or(0.0);
        let counts = if em * ep < -1e-9 { entry.counts.flip_node1() } else { entry.counts };
        pooled.add_counts(&s, &counts);
    }
    pooled
}

/// Coincidence SBR from two node SBRs measured against the same total background.
///
/// Accidental pairs are signal-background from either node plus background-background.
pub fn combine_sbr(node1: f64, node2: f64) -> f64 {
    node1 * node2 / (node1 + node2 + 0.5)
}
