use serde::{Deserialize, Serialize};

use super::config::{LinkScenario, Scenario};
use super::presets::{delay_only, equivalent_length_km};
use super::rates::{effective_readout_time, expected_contrast};
use super::ProtocolError;
use crate::dephasing::{default_time_step, simulate_channel_family, DephasingConfig};

/// Model prediction for one fibre configuration and its delay-only counterpart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityRow {
    pub name: String,
    pub length_km: f64,
    pub readout_times: [f64; 2],
    /// Surviving memory coherence of each node at its readout.
    pub memory_coherence: [f64; 2],
    pub contrast: f64,
    pub visibility: f64,
    pub fidelity: f64,
    /// Two-way signalling length matching the mean readout delay.
    pub delay_only_length_km: f64,
    pub delay_only_contrast: f64,
    pub delay_only_visibility: f64,
    pub delay_only_fidelity: f64,
}

/// Inverse of F = 1/9 + 8/9·V for an atom-photon state.
pub fn atom_photon_visibility_from_fidelity(fidelity: f64) -> f64 {
    (9.0 * fidelity - 1.0) / 8.0
}

fn fidelity_of(visibility: f64) -> f64 {
    1.0 / 9.0 + 8.0 / 9.0 * visibility
}

/// Coherence factor of both nodes at each requested readout time.
fn coherence_at(
    base: &Scenario,
    times: [&[f64]; 2],
    trajectories: usize,
    seed: u64,
) -> Result<[Vec<f64>; 2], ProtocolError> {
    let mut out = [Vec::new(), Vec::new()];
    for (i, slot) in out.iter_mut().enumerate() {
        let node = base.nodes.get(i);
        let mut grid: Vec<f64> = times[i].to_vec();
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        let cfg = DephasingConfig {
            trap: node.trap,
            field: node.field,
            temperature: node.temperature,
            n_trajectories: trajectories,
            time_step: default_time_step(&node.trap),
            seed: seed.wrapping_add(i as u64),
        };
        let family = simulate_channel_family(&cfg, &grid)?;
        *slot = times[i]
            .iter()
            .map(|t| {
                let k = grid.iter().position(|g| g == t).expect("time on grid");
                family.rotating[k].coherence_factor()
            })
            .collect();
    }
    Ok(out)
}

/// V_AA = V1·D1(t1) · V2·D2(t2) · C(L) and F = 1/9 + 8/9·V_AA for each row.
pub fn fidelity_vs_length(
    base: &Scenario,
    rows: &[LinkScenario],
    trajectories: usize,
    seed: u64,
) -> Result<Vec<FidelityRow>, ProtocolError> {
    let scenarios: Vec<Scenario> = rows.iter().map(|r| base.with_links(r)).collect();
    let times: [Vec<f64>; 2] = [0, 1].map(|i| scenarios.iter().map(|s| effective_readout_time(s, i)).collect());
    let coherence = coherence_at(base, [&times[0], &times[1]], trajectories, seed)?;
    let v0 = [base.nodes.node1.atom_photon_visibility, base.nodes.node2.atom_photon_visibility];
    let mut out = Vec::with_capacity(rows.len());
    for (k, (row, s)) in rows.iter().zip(&scenarios).enumerate() {
        let memory = v0[0] * coherence[0][k] * v0[1] * coherence[1][k];
        let contrast = expected_contrast(s, s.bsm.delta_tau);
        let delay = base.with_links(&delay_only(row));
        let delay_contrast = expected_contrast(&delay, delay.bsm.delta_tau);
        out.push(FidelityRow {
            name: row.name.clone(),
            length_km: row.total_length_km,
            readout_times: [times[0][k], times[1][k]],
            memory_coherence: [coherence[0][k], coherence[1][k]],
            contrast,
            visibility: memory * contrast,
            fidelity: fidelity_of(memory * contrast),
            delay_only_length_km: equivalent_length_km(row),
            delay_only_contrast: delay_contrast,
            delay_only_visibility: memory * delay_contrast,
            delay_only_fidelity: fidelity_of(memory * delay_contrast),
        });
    }
    Ok(out)
}

/// Storage-free atom-photon visibility of each node such that the visibility after the
/// `reference` readout delays equals the one implied by the measured atom-photon fidelities.
pub fn calibrate_memory_visibility(
    base: &Scenario,
    reference: &LinkScenario,
    atom_photon_fidelity: [f64; 2],
    trajectories: usize,
    seed: u64,
) -> Result<[f64; 2], ProtocolError> {
    let s = base.with_links(reference);
    let t = [[effective_readout_time(&s, 0)], [effective_readout_time(&s, 1)]];
    let coherence = coherence_at(base, [&t[0], &t[1]], trajectories, seed)?;
    let mut out = [0.0; 2];
    for i in 0..2 {
        let v = atom_photon_visibility_from_fidelity(atom_photon_fidelity[i]) / coherence[i][0];
        if !(0.0..=1.0).contains(&v) {
            return Err(ProtocolError::InvalidConfig(format!(
                "node {} visibility {v:.4} outside [0, 1]; the measured fidelity exceeds what storage allows",
                i + 1
            )));
        }
        out[i] = v;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn visibility_fidelity_inverse() {
        assert!((atom_photon_visibility_from_fidelity(1.0) - 1.0).abs() < 1e-15);
        assert!((atom_photon_visibility_from_fidelity(1.0 / 9.0)).abs() < 1e-15);
        for f in [0.941, 0.911, 0.5] {
            assert!((fidelity_of(atom_photon_visibility_from_fidelity(f)) - f).abs() < 1e-14);
        }
    }
}
