use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::config::Scenario;
use super::rates::{background_weight, effective_readout_time};
use super::ProtocolError;
use crate::channel::{apply_polarization_error, temporal_overlap, FibreUnitary, PhotonWavepacket};
use crate::dephasing::{dephasing_channel, MemoryChannel};
use crate::quantum::{
    atom_photon_state, basis, project_photons, photon_bell_state, BellOutcome, CMatrix, DensityMatrix, HilbertSpace,
    StateVector,
};

/// Physical origin of a heralding coincidence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeraldKind {
    /// Both photons from the atoms and their modes overlapped at the beamsplitter.
    Interfered,
    /// Both photons from the atoms but distinguishable.
    Distinguishable,
    /// At least one click from background or dark counts.
    Background,
}

fn qubit_projector() -> CMatrix {
    let up = basis::up_z();
    let down = basis::down_z();
    &up * up.adjoint() + &down * down.adjoint()
}

/// Atom-photon state with visibility `v`: the ideal state mixed with white noise on the qubit subspace.
pub fn atom_photon_density(v: f64) -> DensityMatrix {
    let ideal = atom_photon_state().to_density();
    let noise = qubit_projector().kronecker(&CMatrix::identity(2, 2)).scale(0.25);
    let m = ideal.matrix().scale(v) + noise.scale(1.0 - v);
    DensityMatrix::new(ideal.space().clone(), m).expect("convex combination of states")
}

fn pair_state(first_h: bool) -> StateVector {
    let (a, b) = if first_h { (basis::pol_h(), basis::pol_v()) } else { (basis::pol_v(), basis::pol_h()) };
    StateVector::new(HilbertSpace::new(vec![2, 2]).expect("static dims"), a.kronecker(&b)).expect("product of unit vectors")
}

/// Everything needed to turn one heralding coincidence into an atom-atom state at readout.
#[derive(Debug, Clone)]
pub struct HeraldModel {
    pub memory_visibility: [f64; 2],
    pub channels: [MemoryChannel; 2],
    pub readout_times: [f64; 2],
    pub background_weight: f64,
    pub xi_max: f64,
    pub delta_tau: f64,
    pub sync_jitter: [f64; 2],
    pub wavepacket: PhotonWavepacket,
    pub drift_rate: f64,
    pub control_cadence: f64,
}

impl HeraldModel {
    /// Runs the storage Monte Carlo for both nodes at their readout times.
    pub fn new(s: &Scenario) -> Result<Self, ProtocolError> {
        let mut channels = Vec::with_capacity(2);
        for i in 0..2 {
            let node = s.nodes.get(i);
            channels.push(dephasing_channel(
                &node.trap,
                &node.field,
                node.temperature,
                effective_readout_time(s, i),
                s.readout.dephasing_trajectories,
                s.readout.dephasing_seed.wrapping_add(i as u64),
            )?);
        }
        let node2 = channels.pop().expect("two channels");
        let node1 = channels.pop().expect("two channels");
        Ok(Self::with_channels(s, [node1, node2]))
    }

    pub fn with_channels(s: &Scenario, channels: [MemoryChannel; 2]) -> Self {
        Self {
            memory_visibility: [s.nodes.node1.atom_photon_visibility, s.nodes.node2.atom_photon_visibility],
            channels,
            readout_times: [effective_readout_time(s, 0), effective_readout_time(s, 1)],
            background_weight: background_weight(s),
            xi_max: s.bsm.xi_max,
            delta_tau: s.bsm.delta_tau,
            sync_jitter: [s.nodes.node1.sync_jitter_sigma, s.nodes.node2.sync_jitter_sigma],
            wavepacket: s.bsm.wavepacket,
            drift_rate: s.links.drift_rate,
            control_cadence: s.links.control_cadence,
        }
    }

    /// Excitation timing offsets of the two nodes for one try.
    pub fn sample_jitter<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 2] {
        self.sync_jitter.map(|sigma| {
            if sigma > 0.0 {
                Normal::new(0.0, sigma).expect("sigma > 0").sample(rng)
            } else {
                0.0
            }
        })
    }

    /// Indistinguishability of one photon pair given its timing offsets.
    pub fn indistinguishability(&self, jitter: [f64; 2]) -> f64 {
        let shift = self.delta_tau + jitter[1] - jitter[0];
        self.xi_max * temporal_overlap(&self.wavepacket, &self.wavepacket, shift)
    }

    /// Residual fibre rotations at `wall_time`, having drifted since the last control cycle.
    pub fn sample_residuals<R: Rng + ?Sized>(&self, wall_time: f64, rng: &mut R) -> [FibreUnitary; 2] {
        let elapsed = wall_time.rem_euclid(self.control_cadence);
        let sd = self.drift_rate * elapsed.sqrt();
        [(); 2].map(|_| {
            if sd == 0.0 {
                return FibreUnitary::identity();
            }
            let mut w = [0.0; 3];
            for x in &mut w {
                let g: f64 = rng.sample(StandardNormal);
                *x = g * sd;
            }
            FibreUnitary::from_rotation_vector(&w)
        })
    }

    fn two_node_state(&self, residuals: &[FibreUnitary; 2]) -> Result<DensityMatrix, ProtocolError> {
        let mut parts = Vec::with_capacity(2);
        for i in 0..2 {
            let ap = atom_photon_density(self.memory_visibility[i]);
            parts.push(apply_polarization_error(&ap, &residuals[i], 1)?);
        }
        Ok(parts[0].tensor(&parts[1]))
    }

    /// Atom-atom state right after the herald, before storage, for one origin.
    pub fn heralded_state(
        &self,
        kind: HeraldKind,
        outcome: BellOutcome,
        residuals: &[FibreUnitary; 2],
    ) -> Result<DensityMatrix, ProtocolError> {
        Ok(match kind {
            HeraldKind::Interfered => project_photons(&self.two_node_state(residuals)?, &[photon_bell_state(outcome)])?.1,
            HeraldKind::Distinguishable => {
                project_photons(&self.two_node_state(residuals)?, &[pair_state(true), pair_state(false)])?.1
            }
            HeraldKind::Background => {
                let p = qubit_projector();
                let m = p.kronecker(&p).scale(0.25);
                DensityMatrix::new(HilbertSpace::new(vec![3, 3]).expect("static dims"), m)?
            }
        })
    }

    /// Ensemble state of one herald with indistinguishability `xi`, background admixed.
    pub fn mixed_state(&self, outcome: BellOutcome, xi: f64, residuals: &[FibreUnitary; 2]) -> Result<DensityMatrix, ProtocolError> {
        let coherent = self.heralded_state(HeraldKind::Interfered, outcome, residuals)?;
        let incoherent = self.heralded_state(HeraldKind::Distinguishable, outcome, residuals)?;
        let noise = self.heralded_state(HeraldKind::Background, outcome, residuals)?;
        let w = self.background_weight;
        Ok(DensityMatrix::mixture(&[
            ((1.0 - w) * xi, &coherent),
            ((1.0 - w) * (1.0 - xi), &incoherent),
            (w, &noise),
        ])?)
    }

    /// Applies both storage channels.
    pub fn stored(&self, rho: &DensityMatrix) -> Result<DensityMatrix, ProtocolError> {
        let r = self.channels[0].apply(rho, 0)?;
        Ok(self.channels[1].apply(&r, 1)?)
    }
}
