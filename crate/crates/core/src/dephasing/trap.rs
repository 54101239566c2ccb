use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::DephasingError;
use crate::constants::{BOLTZMANN, RB87_MASS};

pub type Vec3 = [f64; 3];

/// Gaussian-beam optical dipole trap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrapParams {
    /// Trap laser wavelength in m.
    pub wavelength: f64,
    /// Trap depth expressed as a temperature, in K.
    pub trap_depth: f64,
    /// 1/e² intensity radius at focus, in m.
    pub beam_waist: f64,
    /// Atom mass in kg.
    #[serde(default = "default_mass")]
    pub atom_mass: f64,
}

fn default_mass() -> f64 {
    RB87_MASS
}

impl TrapParams {
    pub fn new(wavelength: f64, trap_depth: f64, beam_waist: f64) -> Result<Self, DephasingError> {
        let p = Self { wavelength, trap_depth, beam_waist, atom_mass: RB87_MASS };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), DephasingError> {
        let fields = [
            ("wavelength", self.wavelength),
            ("trap_depth", self.trap_depth),
            ("beam_waist", self.beam_waist),
            ("atom_mass", self.atom_mass),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(DephasingError::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if self.beam_waist <= self.wavelength / 10.0 {
            return Err(DephasingError::InvalidParameter(format!(
                "beam waist {} m too small for wavelength {} m",
                self.beam_waist, self.wavelength
            )));
        }
        Ok(())
    }

    /// Trap depth in J.
    pub fn depth_energy(&self) -> f64 {
        BOLTZMANN * self.trap_depth
    }

    pub fn rayleigh_range(&self) -> f64 {
        PI * self.beam_waist * self.beam_waist / self.wavelength
    }

    pub fn radial_angular_frequency(&self) -> f64 {
        (4.0 * self.depth_energy() / (self.atom_mass * self.beam_waist * self.beam_waist)).sqrt()
    }

    pub fn axial_angular_frequency(&self) -> f64 {
        let zr = self.rayleigh_range();
        (2.0 * self.depth_energy() / (self.atom_mass * zr * zr)).sqrt()
    }

    /// Harmonic angular frequencies (x, y, z); the beam propagates along z.
    pub fn harmonic_frequencies(&self) -> Vec3 {
        let wr = self.radial_angular_frequency();
        [wr, wr, self.axial_angular_frequency()]
    }

    pub fn radial_frequency_hz(&self) -> f64 {
        self.radial_angular_frequency() / (2.0 * PI)
    }

    /// Local intensity relative to the focus peak, in [0, 1].
    pub fn relative_intensity(&self, r: &Vec3) -> f64 {
        let zr = self.rayleigh_range();
        let s = 1.0 + (r[2] / zr).powi(2);
        let w2 = self.beam_waist * self.beam_waist * s;
        (-2.0 * (r[0] * r[0] + r[1] * r[1]) / w2).exp() / s
    }

    /// Potential energy in J (zero far from the beam, −U0 at the focus).
    pub fn potential(&self, r: &Vec3) -> f64 {
        -self.depth_energy() * self.relative_intensity(r)
    }

    /// Acceleration −∇U/m.
    pub fn acceleration(&self, r: &Vec3) -> Vec3 {
        let w0 = self.beam_waist;
        let zr = self.rayleigh_range();
        let s = 1.0 + (r[2] / zr).powi(2);
        let w2 = w0 * w0 * s;
        let rho2 = r[0] * r[0] + r[1] * r[1];
        let u = (-2.0 * rho2 / w2).exp() / s;
        let k = self.depth_energy() * u / self.atom_mass;
        let radial = -4.0 / w2;
        let axial = (2.0 * rho2 / (w0 * w0 * s * s) - 1.0 / s) * 2.0 * r[2] / (zr * zr);
        [k * radial * r[0], k * radial * r[1], k * axial]
    }

    pub fn kinetic_energy(&self, v: &Vec3) -> f64 {
        0.5 * self.atom_mass * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
    }

    pub fn total_energy(&self, r: &Vec3, v: &Vec3) -> f64 {
        self.potential(r) + self.kinetic_energy(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomInitialCondition {
    pub position: Vec3,
    pub velocity: Vec3,
}

/// Draws a thermal state of the harmonic approximation of the trap.
pub fn sample_initial_conditions<R: Rng + ?Sized>(
    trap: &TrapParams,
    temperature: f64,
    rng: &mut R,
) -> Result<AtomInitialCondition, DephasingError> {
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(DephasingError::InvalidParameter(format!("temperature must be positive, got {temperature}")));
    }
    let kt_over_m = BOLTZMANN * temperature / trap.atom_mass;
    let om = trap.harmonic_frequencies();
    let mut position = [0.0; 3];
    let mut velocity = [0.0; 3];
    for i in 0..3 {
        let g: f64 = rng.sample(StandardNormal);
        position[i] = g * kt_over_m.sqrt() / om[i];
    }
    for v in velocity.iter_mut() {
        let g: f64 = rng.sample(StandardNormal);
        *v = g * kt_over_m.sqrt();
    }
    Ok(AtomInitialCondition { position, velocity })
}

// Fourth-order symplectic composition coefficients.
const CBRT2: f64 = 1.259_921_049_894_873_2;
const YOSHIDA_W1: f64 = 1.0 / (2.0 - CBRT2);
const YOSHIDA_W0: f64 = -CBRT2 / (2.0 - CBRT2);
const DRIFT: [f64; 4] = [
    YOSHIDA_W1 / 2.0,
    (YOSHIDA_W0 + YOSHIDA_W1) / 2.0,
    (YOSHIDA_W0 + YOSHIDA_W1) / 2.0,
    YOSHIDA_W1 / 2.0,
];
const KICK: [f64; 3] = [YOSHIDA_W1, YOSHIDA_W0, YOSHIDA_W1];

/// Phase-space point advanced by a fixed-step fourth-order symplectic integrator.
#[derive(Debug, Clone, Copy)]
pub struct MotionState {
    pub position: Vec3,
    pub velocity: Vec3,
}

impl MotionState {
    pub fn new(ic: &AtomInitialCondition) -> Self {
        Self { position: ic.position, velocity: ic.velocity }
    }

    #[inline]
    pub fn step(&mut self, trap: &TrapParams, dt: f64) {
        for i in 0..3 {
            for k in 0..3 {
                self.position[k] += DRIFT[i] * dt * self.velocity[k];
            }
            let a = trap.acceleration(&self.position);
            for k in 0..3 {
                self.velocity[k] += KICK[i] * dt * a[k];
            }
        }
        for k in 0..3 {
            self.position[k] += DRIFT[3] * dt * self.velocity[k];
        }
    }
}

/// Largest step accepted by the propagators: one fiftieth of the fastest harmonic period.
pub fn max_time_step(trap: &TrapParams) -> f64 {
    let fastest = trap.harmonic_frequencies().into_iter().fold(0.0, f64::max);
    2.0 * PI / fastest / 50.0
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub positions: Vec<Vec3>,
    pub velocities: Vec<Vec3>,
    /// Set when the atom is unbound (E ≥ 0); the trajectory stops there.
    pub escaped: bool,
    /// max |E(t) − E(0)| / |E(0)|.
    pub max_relative_energy_drift: f64,
}

pub fn propagate_trajectory(
    trap: &TrapParams,
    ic: &AtomInitialCondition,
    dt: f64,
    t_max: f64,
) -> Result<Trajectory, DephasingError> {
    let dt_max = max_time_step(trap);
    if !(dt > 0.0 && dt <= dt_max * (1.0 + 1e-12)) {
        return Err(DephasingError::InvalidParameter(format!("time step {dt} s outside (0, {dt_max}] s")));
    }
    let n = (t_max / dt).round() as usize;
    let mut state = MotionState::new(ic);
    let e0 = trap.total_energy(&state.position, &state.velocity);
    let mut traj = Trajectory {
        times: Vec::with_capacity(n + 1),
        positions: Vec::with_capacity(n + 1),
        velocities: Vec::with_capacity(n + 1),
        escaped: e0 >= 0.0,
        max_relative_energy_drift: 0.0,
    };
    traj.times.push(0.0);
    traj.positions.push(state.position);
    traj.velocities.push(state.velocity);
    if traj.escaped {
        return Ok(traj);
    }
    for i in 1..=n {
        state.step(trap, dt);
        let e = trap.total_energy(&state.position, &state.velocity);
        traj.max_relative_energy_drift = traj.max_relative_energy_drift.max(((e - e0) / e0).abs());
        traj.times.push(i as f64 * dt);
        traj.positions.push(state.position);
        traj.velocities.push(state.velocity);
        if e >= 0.0 {
            traj.escaped = true;
            break;
        }
    }
    Ok(traj)
}

/// Oscillation frequency (Hz) of one coordinate estimated from its upward zero crossings.
pub fn oscillation_frequency(times: &[f64], values: &[f64]) -> Option<f64> {
    let mut crossings = Vec::new();
    for i in 1..values.len() {
        let (a, b) = (values[i - 1], values[i]);
        if a < 0.0 && b >= 0.0 {
            let frac = -a / (b - a);
            crossings.push(times[i - 1] + frac * (times[i] - times[i - 1]));
        }
    }
    if crossings.len() < 2 {
        return None;
    }
    let span = crossings[crossings.len() - 1] - crossings[0];
    Some((crossings.len() - 1) as f64 / span)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn node1() -> TrapParams {
        TrapParams::new(850e-9, 2.32e-3, 2.05e-6).unwrap()
    }

    #[test]
    fn radial_frequency_near_seventy_khz() {
        let f = node1().radial_frequency_hz();
        assert!((f - 70e3).abs() / 70e3 < 0.06, "{f}");
    }

    #[test]
    fn acceleration_matches_numeric_gradient() {
        let trap = node1();
        let r = [0.3e-6, -0.2e-6, 1.5e-6];
        let a = trap.acceleration(&r);
        for k in 0..3 {
            let h = 1e-11;
            let mut p = r;
            let mut m = r;
            p[k] += h;
            m[k] -= h;
            let grad = (trap.potential(&p) - trap.potential(&m)) / (2.0 * h);
            assert_relative_eq!(a[k], -grad / trap.atom_mass, max_relative = 1e-5);
        }
    }

    #[test]
    fn atom_at_rest_in_centre_stays() {
        let trap = node1();
        let ic = AtomInitialCondition { position: [0.0; 3], velocity: [0.0; 3] };
        let traj = propagate_trajectory(&trap, &ic, 50e-9, 20e-6).unwrap();
        assert!(traj.positions.iter().all(|p| p.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn small_oscillation_at_harmonic_frequency() {
        let trap = node1();
        let ic = AtomInitialCondition { position: [5e-9, 0.0, 0.0], velocity: [0.0; 3] };
        let traj = propagate_trajectory(&trap, &ic, 20e-9, 200e-6).unwrap();
        let xs: Vec<f64> = traj.positions.iter().map(|p| p[0]).collect();
        let f = oscillation_frequency(&traj.times, &xs).unwrap();
        assert_relative_eq!(f, trap.radial_frequency_hz(), max_relative = 0.02);
    }

    #[test]
    fn larger_amplitude_oscillates_slower() {
        let trap = node1();
        let freq = |amp: f64| {
            let ic = AtomInitialCondition { position: [amp, 0.0, 0.0], velocity: [0.0; 3] };
            let traj = propagate_trajectory(&trap, &ic, 20e-9, 150e-6).unwrap();
            let xs: Vec<f64> = traj.positions.iter().map(|p| p[0]).collect();
            oscillation_frequency(&traj.times, &xs).unwrap()
        };
        assert!(freq(0.6e-6) < freq(0.05e-6));
    }

    #[test]
    fn rejects_coarse_step() {
        let trap = node1();
        let ic = AtomInitialCondition { position: [0.0; 3], velocity: [0.0; 3] };
        assert!(propagate_trajectory(&trap, &ic, 1e-6, 1e-5).is_err());
    }

    #[test]
    fn zero_temperature_rejected_and_cold_limit_centres() {
        let trap = node1();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(sample_initial_conditions(&trap, 0.0, &mut rng).is_err());
        let ic = sample_initial_conditions(&trap, 1e-15, &mut rng).unwrap();
        assert!(ic.position.iter().all(|x| x.abs() < 1e-11));
        assert!(ic.velocity.iter().all(|v| v.abs() < 1e-5));
    }

    #[test]
    fn unbound_atom_is_flagged() {
        let trap = node1();
        let ic = AtomInitialCondition { position: [0.0; 3], velocity: [5.0, 0.0, 0.0] };
        let traj = propagate_trajectory(&trap, &ic, 20e-9, 10e-6).unwrap();
        assert!(traj.escaped);
        assert_eq!(traj.times.len(), 1);
    }
}
