use std::f64::consts::{FRAC_1_SQRT_2, TAU};

use serde::{Deserialize, Serialize};

use super::basis::{self, H, M_ZERO, V};
use super::state::{c, CMatrix, CVector, DensityMatrix, HilbertSpace, StateVector, C64};
use super::QuantumError;

/// Bell-projection outcomes below this probability cannot be normalized.
const MIN_OUTCOME_PROBABILITY: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BellOutcome {
    PsiPlus,
    PsiMinus,
}

impl BellOutcome {
    pub const ALL: [BellOutcome; 2] = [BellOutcome::PsiPlus, BellOutcome::PsiMinus];

    fn sign(self) -> f64 {
        match self {
            BellOutcome::PsiPlus => 1.0,
            BellOutcome::PsiMinus => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Plane {
    /// Linear-readout equator through X (α = 0) and Y (α = 45°).
    Equator,
    /// Meridian through Z (α = 0) and X (α = 45°).
    Z,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomBasisSetting {
    /// Analysis angle in radians, kept in [0, 2π).
    pub angle: f64,
    pub plane: Plane,
}

impl AtomBasisSetting {
    pub fn new(angle: f64, plane: Plane) -> Self {
        Self { angle: angle.rem_euclid(TAU), plane }
    }

    pub fn equator_deg(deg: f64) -> Self {
        Self::new(deg.to_radians(), Plane::Equator)
    }

    pub fn x() -> Self {
        Self::equator_deg(0.0)
    }

    pub fn y() -> Self {
        Self::equator_deg(45.0)
    }

    pub fn z() -> Self {
        Self::new(0.0, Plane::Z)
    }

    /// Setting whose "up" projector is this setting's "down".
    pub fn opposite(self) -> Self {
        Self::new(self.angle + std::f64::consts::FRAC_PI_2, self.plane)
    }

    pub fn angle_deg(&self) -> f64 {
        self.angle.to_degrees()
    }
}

/// Normalized "up" and "down" vectors of a setting, both inside the m_F = ±1 subspace.
pub fn setting_vectors(setting: AtomBasisSetting) -> (CVector, CVector) {
    let (s, co) = setting.angle.sin_cos();
    let (a, b) = match setting.plane {
        Plane::Equator => (basis::up_x(), basis::down_x()),
        Plane::Z => (basis::up_z(), basis::down_z()),
    };
    let up = a.scale(co) + b.scale(s);
    let down = b.scale(co) - a.scale(s);
    (up, down)
}

fn projector(v: &CVector) -> CMatrix {
    v * v.adjoint()
}

/// 1/√2(|↓⟩z|L⟩ + |↑⟩z|R⟩) on dims [3, 2].
pub fn atom_photon_state() -> StateVector {
    let amps = (basis::down_z().kronecker(&basis::pol_l()) + basis::up_z().kronecker(&basis::pol_r()))
        .scale(FRAC_1_SQRT_2);
    StateVector::new(HilbertSpace::new(vec![3, 2]).expect("static dims"), amps).expect("normalized by construction")
}

/// |Ψ±⟩ = 1/√2(|↑⟩x|↓⟩x ± |↓⟩x|↑⟩x) on dims [3, 3].
pub fn atom_bell_state(outcome: BellOutcome) -> StateVector {
    let ux = basis::up_x();
    let dx = basis::down_x();
    let amps = (ux.kronecker(&dx) + dx.kronecker(&ux).scale(outcome.sign())).scale(FRAC_1_SQRT_2);
    StateVector::new(HilbertSpace::new(vec![3, 3]).expect("static dims"), amps).expect("normalized by construction")
}

/// Photonic |Ψ±⟩ = 1/√2(|HV⟩ ± |VH⟩) on dims [2, 2].
pub fn photon_bell_state(outcome: BellOutcome) -> StateVector {
    let amps = (basis::pol_h().kronecker(&basis::pol_v()) + basis::pol_v().kronecker(&basis::pol_h()).scale(outcome.sign()))
        .scale(FRAC_1_SQRT_2);
    StateVector::new(HilbertSpace::new(vec![2, 2]).expect("static dims"), amps).expect("normalized by construction")
}

/// Projects both photons of an atom1⊗photon1⊗atom2⊗photon2 state onto the photonic |Ψ±⟩.
///
/// Returns the outcome probability and the normalized atom-atom state on dims [3, 3].
pub fn bell_project(rho: &DensityMatrix, outcome: BellOutcome) -> Result<(f64, DensityMatrix), QuantumError> {
    project_photons(rho, &[photon_bell_state(outcome)])
}

/// Applies the photon-pair POVM element Σ|φk⟩⟨φk| and keeps the atoms.
///
/// Useful for which-path-resolved detection, where the pair states add incoherently.
pub fn project_photons(rho: &DensityMatrix, pair_states: &[StateVector]) -> Result<(f64, DensityMatrix), QuantumError> {
    if rho.space().dims() != [3, 2, 3, 2] {
        return Err(QuantumError::InvalidSpace(format!(
            "photon projection expects dims [3, 2, 3, 2], got {:?}",
            rho.space().dims()
        )));
    }
    let mut atoms = CMatrix::zeros(9, 9);
    for phi in pair_states {
        if phi.space().dims() != [2, 2] {
            return Err(QuantumError::InvalidSpace(format!("photon pair state must have dims [2, 2], got {:?}", phi.space().dims())));
        }
        contract_photons(rho, phi, &mut atoms);
    }
    DensityMatrix::from_unnormalized(HilbertSpace::new(vec![3, 3])?, atoms, MIN_OUTCOME_PROBABILITY)
}

/// Adds ⟨φ|ρ|φ⟩ (photons contracted, atoms kept) to `atoms`.
fn contract_photons(rho: &DensityMatrix, phi: &StateVector, atoms: &mut CMatrix) {
    let space = rho.space();
    let m = rho.matrix();
    let zero = C64::new(0.0, 0.0);
    for a1 in 0..3 {
        for a2 in 0..3 {
            for b1 in 0..3 {
                for b2 in 0..3 {
                    let mut acc = zero;
                    for p1 in [H, V] {
                        for p2 in [H, V] {
                            let bra = phi.amplitude(&[p1, p2]).conj();
                            if bra == zero {
                                continue;
                            }
                            let row = space.ravel(&[a1, p1, a2, p2]);
                            for q1 in [H, V] {
                                for q2 in [H, V] {
                                    let ket = phi.amplitude(&[q1, q2]);
                                    if ket == zero {
                                        continue;
                                    }
                                    acc += bra * m[(row, space.ravel(&[b1, q1, b2, q2]))] * ket;
                                }
                            }
                        }
                    }
                    atoms[(a1 * 3 + a2, b1 * 3 + b2)] += acc;
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct AtomMeasurement {
    pub p_up: f64,
    pub p_down: f64,
    pub p_zero: f64,
    pub post_up: Option<DensityMatrix>,
    pub post_down: Option<DensityMatrix>,
    pub post_zero: Option<DensityMatrix>,
}

/// Projective measurement of one qutrit into up(α), down(α) and m_F = 0.
pub fn measure_atom(rho: &DensityMatrix, setting: AtomBasisSetting, subsystem: usize) -> Result<AtomMeasurement, QuantumError> {
    rho.space().check_subsystem(subsystem)?;
    if rho.space().dims()[subsystem] != 3 {
        return Err(QuantumError::NotQutrit(subsystem));
    }
    let (up, down) = setting_vectors(setting);
    let mut zero = CMatrix::zeros(3, 3);
    zero[(M_ZERO, M_ZERO)] = c(1.0, 0.0);
    let outcome = |proj: &CMatrix| -> Result<(f64, Option<DensityMatrix>), QuantumError> {
        let full = rho.embed_local(subsystem, proj)?;
        let unnorm = &full * rho.matrix() * &full;
        let p = unnorm.trace().re.max(0.0);
        if p < MIN_OUTCOME_PROBABILITY {
            return Ok((p, None));
        }
        let (_, post) = DensityMatrix::from_unnormalized(rho.space().clone(), unnorm, MIN_OUTCOME_PROBABILITY)?;
        Ok((p, Some(post)))
    };
    let (p_up, post_up) = outcome(&projector(&up))?;
    let (p_down, post_down) = outcome(&projector(&down))?;
    let (p_zero, post_zero) = outcome(&zero)?;
    Ok(AtomMeasurement { p_up, p_down, p_zero, post_up, post_down, post_zero })
}

/// Readout projectors (bright, dark) of one setting; m_F = 0 is dark.
pub fn readout_projectors(setting: AtomBasisSetting) -> (CMatrix, CMatrix) {
    let (up, _) = setting_vectors(setting);
    let bright = projector(&up);
    let dark = CMatrix::identity(3, 3) - &bright;
    (bright, dark)
}

/// Joint readout probabilities of an atom-atom state; "down" includes m_F = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointProbabilities {
    pub up_up: f64,
    pub up_down: f64,
    pub down_up: f64,
    pub down_down: f64,
}

impl JointProbabilities {
    pub fn correlated(&self) -> f64 {
        self.up_up + self.down_down
    }

    pub fn anticorrelated(&self) -> f64 {
        self.up_down + self.down_up
    }

    pub fn correlator(&self) -> f64 {
        self.correlated() - self.anticorrelated()
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.up_up, self.up_down, self.down_up, self.down_down]
    }
}

pub fn joint_readout_probabilities(
    rho: &DensityMatrix,
    node1: AtomBasisSetting,
    node2: AtomBasisSetting,
) -> Result<JointProbabilities, QuantumError> {
    if rho.space().dims() != [3, 3] {
        return Err(QuantumError::InvalidSpace(format!(
            "expected atom-atom dims [3, 3], got {:?}",
            rho.space().dims()
        )));
    }
    let (b1, d1) = readout_projectors(node1);
    let (b2, d2) = readout_projectors(node2);
    let p = |a: &CMatrix, b: &CMatrix| rho.expectation(&a.kronecker(b)).re.max(0.0);
    Ok(JointProbabilities {
        up_up: p(&b1, &b2),
        up_down: p(&b1, &d2),
        down_up: p(&d1, &b2),
        down_down: p(&d1, &d2),
    })
}

/// Correlators of the four CHSH setting pairs: α = 22.5°, α′ = 67.5°, α″ = 112.5°, β = 0°, β′ = 45°.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChshCorrelators {
    /// E(α, β)
    pub alpha_beta: f64,
    /// E(α′, β)
    pub alpha1_beta: f64,
    /// E(α′, β′)
    pub alpha1_beta1: f64,
    /// E(α″, β′), where α″ = α + 90° stands in for α.
    pub alpha2_beta1: f64,
}

impl ChshCorrelators {
    pub fn settings() -> [(AtomBasisSetting, AtomBasisSetting); 4] {
        let e = AtomBasisSetting::equator_deg;
        [(e(22.5), e(0.0)), (e(67.5), e(0.0)), (e(67.5), e(45.0)), (e(112.5), e(45.0))]
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.alpha_beta, self.alpha1_beta, self.alpha1_beta1, self.alpha2_beta1]
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            alpha_beta: self.alpha_beta * factor,
            alpha1_beta: self.alpha1_beta * factor,
            alpha1_beta1: self.alpha1_beta1 * factor,
            alpha2_beta1: self.alpha2_beta1 * factor,
        }
    }
}

/// S = |E(α,β) − E(α′,β) + E(α′,β′) − E(α″,β′)|.
pub fn chsh_s(e: &ChshCorrelators) -> Result<f64, QuantumError> {
    if let Some(bad) = e.as_array().into_iter().find(|v| !(v.abs() <= 1.0)) {
        return Err(QuantumError::CorrelatorOutOfRange(bad));
    }
    Ok((e.alpha_beta - e.alpha1_beta + e.alpha1_beta1 - e.alpha2_beta1).abs())
}
