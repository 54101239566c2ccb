use nalgebra::SymmetricEigen;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::field::{local_effective_field, FieldEnvironment};
use super::spin::{zeeman_step, SpinOperator, ZEEMAN_RATE};
use super::trap::{max_time_step, sample_initial_conditions, MotionState, TrapParams, Vec3};
use super::DephasingError;
use crate::quantum::{basis, CMatrix, CVector, DensityMatrix, QuantumError, C64};

/// Trajectories handed to one worker; chunk sums are added in index order.
const CHUNK: usize = 64;
const SUPEROP_LEN: usize = 81;

/// Everything needed to run the memory Monte Carlo for one node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DephasingConfig {
    pub trap: TrapParams,
    pub field: FieldEnvironment,
    /// Atom temperature in K.
    pub temperature: f64,
    pub n_trajectories: usize,
    /// Integrator step in s.
    pub time_step: f64,
    pub seed: u64,
}

impl DephasingConfig {
    pub fn validate(&self) -> Result<(), DephasingError> {
        self.trap.validate()?;
        self.field.validate()?;
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(DephasingError::InvalidParameter(format!("temperature must be positive, got {}", self.temperature)));
        }
        if self.n_trajectories < 100 {
            return Err(DephasingError::TooFewTrajectories(self.n_trajectories));
        }
        let dt_max = max_time_step(&self.trap);
        if !(self.time_step > 0.0 && self.time_step <= dt_max) {
            return Err(DephasingError::InvalidParameter(format!(
                "time step {} s outside (0, {dt_max}] s",
                self.time_step
            )));
        }
        Ok(())
    }
}

/// Single-qutrit process as a 9×9 superoperator on row-major vec(ρ).
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryChannel {
    superop: CMatrix,
}

impl MemoryChannel {
    pub fn identity() -> Self {
        Self { superop: CMatrix::identity(9, 9) }
    }

    pub fn from_superop(superop: CMatrix) -> Result<Self, DephasingError> {
        if superop.nrows() != 9 || superop.ncols() != 9 {
            return Err(DephasingError::InvalidParameter("qutrit superoperator must be 9×9".into()));
        }
        Ok(Self { superop })
    }

    pub fn from_unitary(u: &SpinOperator) -> Self {
        let mut acc = [C64::new(0.0, 0.0); SUPEROP_LEN];
        accumulate_superop(&mut acc, u);
        Self { superop: CMatrix::from_row_slice(9, 9, &acc) }
    }

    pub fn superop(&self) -> &CMatrix {
        &self.superop
    }

    pub fn compose(&self, after: &MemoryChannel) -> MemoryChannel {
        MemoryChannel { superop: &after.superop * &self.superop }
    }

    /// Λ(X) for a 3×3 operator X.
    pub fn map(&self, x: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(3, 3);
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = C64::new(0.0, 0.0);
                for k in 0..3 {
                    for l in 0..3 {
                        acc += self.superop[(i * 3 + j, k * 3 + l)] * x[(k, l)];
                    }
                }
                out[(i, j)] = acc;
            }
        }
        out
    }

    /// ⟨c| Λ(|a⟩⟨b|) |d⟩.
    pub fn transfer(&self, a: &CVector, b: &CVector, c: &CVector, d: &CVector) -> C64 {
        let out = self.map(&(a * b.adjoint()));
        (c.adjoint() * out * d)[(0, 0)]
    }

    pub fn apply(&self, rho: &DensityMatrix, subsystem: usize) -> Result<DensityMatrix, QuantumError> {
        rho.apply_local_superop(subsystem, &self.superop)
    }

    /// Fraction of the |↑⟩x⟨↓⟩x coherence that survives; this is the memory visibility factor.
    pub fn coherence_factor(&self) -> f64 {
        self.transfer(&basis::up_x(), &basis::down_x(), &basis::up_x(), &basis::down_x()).re
    }

    /// Probability that `prepared` is found again after the channel.
    pub fn survival(&self, prepared: &CVector) -> f64 {
        self.transfer(prepared, prepared, prepared, prepared).re
    }

    /// max |tr Λ(|k⟩⟨l|) − δ_kl|.
    pub fn trace_preservation_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for k in 0..3 {
            for l in 0..3 {
                let tr: C64 = (0..3).map(|i| self.superop[(i * 3 + i, k * 3 + l)]).sum();
                let target = if k == l { 1.0 } else { 0.0 };
                worst = worst.max((tr - C64::new(target, 0.0)).norm());
            }
        }
        worst
    }

    /// Choi matrix Σ |k⟩⟨l| ⊗ Λ(|k⟩⟨l|).
    pub fn choi(&self) -> CMatrix {
        let mut c = CMatrix::zeros(9, 9);
        for k in 0..3 {
            for l in 0..3 {
                for i in 0..3 {
                    for j in 0..3 {
                        c[(k * 3 + i, l * 3 + j)] = self.superop[(i * 3 + j, k * 3 + l)];
                    }
                }
            }
        }
        c
    }

    pub fn choi_min_eigenvalue(&self) -> f64 {
        let c = self.choi();
        let h = (&c + c.adjoint()).scale(0.5);
        SymmetricEigen::new(h).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// acc += U ⊗ conj(U), row-major.
#[inline]
fn accumulate_superop(acc: &mut [C64; SUPEROP_LEN], u: &SpinOperator) {
    for i in 0..3 {
        for j in 0..3 {
            let row = (i * 3 + j) * 9;
            for k in 0..3 {
                let uik = u[(i, k)];
                for l in 0..3 {
                    acc[row + k * 3 + l] += uik * u[(j, l)].conj();
                }
            }
        }
    }
}

/// Channels at a sorted list of storage times, in the lab frame and in the frame co-rotating
/// with the bias-field precession.
#[derive(Debug, Clone)]
pub struct ChannelFamily {
    pub times: Vec<f64>,
    pub lab: Vec<MemoryChannel>,
    pub rotating: Vec<MemoryChannel>,
    pub trajectories_used: usize,
    pub trajectories_escaped: usize,
}

impl ChannelFamily {
    pub fn rotating_at(&self, time: f64) -> Option<&MemoryChannel> {
        self.index_of(time).map(|i| &self.rotating[i])
    }

    pub fn lab_at(&self, time: f64) -> Option<&MemoryChannel> {
        self.index_of(time).map(|i| &self.lab[i])
    }

    fn index_of(&self, time: f64) -> Option<usize> {
        self.times.iter().position(|t| (t - time).abs() < 1e-12)
    }
}

/// Bias-only precession used to move lab-frame channels into the rotating frame.
pub fn reference_rotation(bias: &Vec3, time: f64) -> SpinOperator {
    let b = (bias[0] * bias[0] + bias[1] * bias[1] + bias[2] * bias[2]).sqrt();
    if b == 0.0 {
        return SpinOperator::identity();
    }
    let axis = [bias[0] / b, bias[1] / b, bias[2] / b];
    super::spin::spin1_rotation(&axis, ZEEMAN_RATE * b * time)
}

struct ChunkSum {
    acc: Vec<[C64; SUPEROP_LEN]>,
    used: usize,
    escaped: usize,
}

fn run_chunk(cfg: &DephasingConfig, sample_steps: &[usize], start: usize, end: usize) -> ChunkSum {
    let mut out = ChunkSum {
        acc: vec![[C64::new(0.0, 0.0); SUPEROP_LEN]; sample_steps.len()],
        used: 0,
        escaped: 0,
    };
    let last_step = sample_steps.last().copied().unwrap_or(0);
    let dt = cfg.time_step;
    for index in start..end {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(index as u64);
        let ic = sample_initial_conditions(&cfg.trap, cfg.temperature, &mut rng).expect("temperature validated");
        let noise = cfg.field.sample_noise(&mut rng);
        if cfg.trap.total_energy(&ic.position, &ic.velocity) >= 0.0 {
            out.escaped += 1;
            continue;
        }
        out.used += 1;
        let mut motion = MotionState::new(&ic);
        let mut u = SpinOperator::identity();
        let mut field_prev = local_effective_field(&cfg.trap, &cfg.field, &noise, &motion.position);
        let mut next = 0;
        while next < sample_steps.len() && sample_steps[next] == 0 {
            accumulate_superop(&mut out.acc[next], &u);
            next += 1;
        }
        for step in 1..=last_step {
            motion.step(&cfg.trap, dt);
            let field = local_effective_field(&cfg.trap, &cfg.field, &noise, &motion.position);
            let mid = [
                0.5 * (field[0] + field_prev[0]),
                0.5 * (field[1] + field_prev[1]),
                0.5 * (field[2] + field_prev[2]),
            ];
            u = zeeman_step(&mid, dt) * u;
            field_prev = field;
            while next < sample_steps.len() && sample_steps[next] == step {
                accumulate_superop(&mut out.acc[next], &u);
                next += 1;
            }
        }
    }
    out
}

/// Monte-Carlo average of the spin propagator over thermal trajectories and field-noise shots.
///
/// Results are bit-identical for a given seed regardless of the rayon thread count.
pub fn simulate_channel_family(cfg: &DephasingConfig, times: &[f64]) -> Result<ChannelFamily, DephasingError> {
    cfg.validate()?;
    if times.windows(2).any(|w| w[1] < w[0]) || times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(DephasingError::InvalidParameter("time grid must be sorted and non-negative".into()));
    }
    let sample_steps: Vec<usize> = times.iter().map(|t| (t / cfg.time_step).round() as usize).collect();
    let n = cfg.n_trajectories;
    let n_chunks = n.div_ceil(CHUNK);
    let batch = (rayon::current_num_threads() * 2).max(1);

    let mut total = ChunkSum {
        acc: vec![[C64::new(0.0, 0.0); SUPEROP_LEN]; times.len()],
        used: 0,
        escaped: 0,
    };
    let mut first = 0;
    while first < n_chunks {
        let last = (first + batch).min(n_chunks);
        let sums: Vec<ChunkSum> = (first..last)
            .into_par_iter()
            .map(|c| run_chunk(cfg, &sample_steps, c * CHUNK, ((c + 1) * CHUNK).min(n)))
            .collect();
        for s in sums {
            for (t, a) in total.acc.iter_mut().zip(&s.acc) {
                for (x, y) in t.iter_mut().zip(a) {
                    *x += y;
                }
            }
            total.used += s.used;
            total.escaped += s.escaped;
        }
        first = last;
    }
    if total.used == 0 {
        return Err(DephasingError::AllTrajectoriesEscaped);
    }

    let norm = 1.0 / total.used as f64;
    let mut lab = Vec::with_capacity(times.len());
    let mut rotating = Vec::with_capacity(times.len());
    for (acc, &step) in total.acc.iter().zip(&sample_steps) {
        let s = CMatrix::from_row_slice(9, 9, acc).scale(norm);
        let reference = reference_rotation(&cfg.field.bias_field, step as f64 * cfg.time_step);
        let undo = MemoryChannel::from_unitary(&reference.adjoint());
        rotating.push(MemoryChannel { superop: undo.superop() * &s });
        lab.push(MemoryChannel { superop: s });
    }
    Ok(ChannelFamily {
        times: times.to_vec(),
        lab,
        rotating,
        trajectories_used: total.used,
        trajectories_escaped: total.escaped,
    })
}

/// Effective storage channel (rotating frame) after `readout_time`.
pub fn dephasing_channel(
    trap: &TrapParams,
    env: &FieldEnvironment,
    temperature: f64,
    readout_time: f64,
    n_trajectories: usize,
    seed: u64,
) -> Result<MemoryChannel, DephasingError> {
    let cfg = DephasingConfig {
        trap: *trap,
        field: *env,
        temperature,
        n_trajectories,
        time_step: default_time_step(trap),
        seed,
    };
    let fam = simulate_channel_family(&cfg, &[readout_time])?;
    Ok(fam.rotating.into_iter().next().expect("one time requested"))
}

/// 50 ns, or finer if the trap is stiffer than the reference node.
pub fn default_time_step(trap: &TrapParams) -> f64 {
    max_time_step(trap).min(50e-9)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn config(n: usize) -> DephasingConfig {
        DephasingConfig {
            trap: TrapParams::new(850e-9, 2.32e-3, 2.05e-6).unwrap(),
            field: FieldEnvironment {
                bias_field: [0.0, 75.5e-3, 0.0],
                shot_noise_sigma: [0.0, 0.5e-3, 0.0],
                fictitious_field_scale: 0.055,
            },
            temperature: 50e-6,
            n_trajectories: n,
            time_step: 50e-9,
            seed: 11,
        }
    }

    #[test]
    fn zero_time_is_identity() {
        let fam = simulate_channel_family(&config(200), &[0.0]).unwrap();
        assert!((fam.rotating[0].superop() - CMatrix::identity(9, 9)).camax() < 1e-12);
    }

    #[test]
    fn quiet_field_keeps_full_visibility() {
        let mut cfg = config(200);
        cfg.field = FieldEnvironment::quiet([0.0, 75.5e-3, 0.0]);
        let times: Vec<f64> = (0..=10).map(|i| i as f64 * 30e-6).collect();
        let fam = simulate_channel_family(&cfg, &times).unwrap();
        for ch in &fam.rotating {
            assert!(ch.coherence_factor() > 0.999);
        }
    }

    #[test]
    fn channel_is_trace_preserving_and_positive() {
        let n = 400;
        let fam = simulate_channel_family(&config(n), &[50e-6, 150e-6]).unwrap();
        for ch in fam.rotating.iter().chain(&fam.lab) {
            assert!(ch.trace_preservation_error() < 1e-9);
            assert!(ch.choi_min_eigenvalue() > -3.0 / (n as f64).sqrt());
        }
    }

    #[test]
    fn unitary_channel_matches_direct_conjugation() {
        let u = reference_rotation(&[0.01, 0.05, -0.02], 3e-6);
        let ch = MemoryChannel::from_unitary(&u);
        let ux = basis::up_x();
        let rho = &ux * ux.adjoint();
        let um = CMatrix::from_fn(3, 3, |i, j| u[(i, j)]);
        let direct = &um * &rho * um.adjoint();
        assert!((ch.map(&rho) - direct).camax() < 1e-14);
    }

    #[test]
    fn deterministic_for_seed() {
        let a = simulate_channel_family(&config(150), &[20e-6, 40e-6]).unwrap();
        let b = simulate_channel_family(&config(150), &[20e-6, 40e-6]).unwrap();
        assert_eq!(a.lab, b.lab);
        let mut other = config(150);
        other.seed = 12;
        let c = simulate_channel_family(&other, &[20e-6, 40e-6]).unwrap();
        assert_ne!(a.lab, c.lab);
    }

    #[test]
    fn noise_only_matches_gaussian_dephasing() {
        let mut cfg = config(4000);
        cfg.field.fictitious_field_scale = 0.0;
        let t = 200e-6;
        let fam = simulate_channel_family(&cfg, &[t]).unwrap();
        let phase_sigma = ZEEMAN_RATE.abs() * 0.5e-3 * t;
        let expected = (-phase_sigma * phase_sigma / 2.0).exp();
        assert_relative_eq!(fam.rotating[0].coherence_factor(), expected, epsilon = 3.0 / 4000f64.sqrt());
    }

    #[test]
    fn rejects_small_ensembles() {
        assert!(matches!(
            simulate_channel_family(&config(50), &[0.0]),
            Err(DephasingError::TooFewTrajectories(50))
        ));
    }
}
