use nalgebra::Matrix2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::ChannelError;
use crate::quantum::{CMatrix, DensityMatrix, QuantumError, C64};

pub type Stokes = [f64; 3];

pub const STOKES_H: Stokes = [1.0, 0.0, 0.0];
pub const STOKES_V: Stokes = [-1.0, 0.0, 0.0];
pub const STOKES_D: Stokes = [0.0, 1.0, 0.0];
pub const STOKES_R: Stokes = [0.0, 0.0, 1.0];

/// Reduced Stokes vector (S1, S2, S3) of a Jones vector (H, V); R has S3 = +1.
pub fn stokes_of(h: C64, v: C64) -> Stokes {
    let n = h.norm_sqr() + v.norm_sqr();
    let hv = h.conj() * v;
    [(h.norm_sqr() - v.norm_sqr()) / n, 2.0 * hv.re / n, -2.0 * hv.im / n]
}

/// Jones vector on the Poincaré sphere point `s` (|s| = 1).
pub fn jones_of(s: &Stokes) -> [C64; 2] {
    let theta = s[0].clamp(-1.0, 1.0).acos();
    let phi = s[2].atan2(s[1]);
    [C64::new((theta / 2.0).cos(), 0.0), C64::from_polar((theta / 2.0).sin(), -phi)]
}

fn dot(a: &Stokes, b: &Stokes) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Polarization transformation of a fibre section, an element of SU(2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FibreUnitary(pub Matrix2<C64>);

impl FibreUnitary {
    pub fn identity() -> Self {
        FibreUnitary(Matrix2::identity())
    }

    /// Rotation of the Poincaré sphere by `angle` about the unit Stokes axis `axis`.
    pub fn rotation(axis: &Stokes, angle: f64) -> Self {
        let n = dot(axis, axis).sqrt();
        if n == 0.0 || angle == 0.0 {
            return Self::identity();
        }
        let (n1, n2, n3) = (axis[0] / n, axis[1] / n, axis[2] / n);
        let (s, c) = (angle / 2.0).sin_cos();
        // exp(iθ/2 (n1 σz + n2 σx − n3 σy)); the Stokes frame is left-handed in Pauli terms.
        let i = C64::new(0.0, 1.0);
        let g = Matrix2::new(
            C64::new(n1, 0.0),
            C64::new(n2, n3),
            C64::new(n2, -n3),
            C64::new(-n1, 0.0),
        );
        FibreUnitary(Matrix2::identity() * C64::new(c, 0.0) + g * (i * s))
    }

    /// Rotation by |ω| about ω.
    pub fn from_rotation_vector(omega: &Stokes) -> Self {
        let angle = dot(omega, omega).sqrt();
        if angle == 0.0 {
            return Self::identity();
        }
        Self::rotation(omega, angle)
    }

    /// `self` followed by `next`.
    pub fn then(&self, next: &FibreUnitary) -> FibreUnitary {
        FibreUnitary(next.0 * self.0)
    }

    pub fn inverse(&self) -> FibreUnitary {
        FibreUnitary(self.0.adjoint())
    }

    pub fn apply_stokes(&self, s: &Stokes) -> Stokes {
        let j = jones_of(s);
        let h = self.0[(0, 0)] * j[0] + self.0[(0, 1)] * j[1];
        let v = self.0[(1, 0)] * j[0] + self.0[(1, 1)] * j[1];
        stokes_of(h, v)
    }

    /// Poincaré-sphere rotation angle in [0, π].
    pub fn rotation_angle(&self) -> f64 {
        let half = (self.0.trace().norm() / 2.0).clamp(0.0, 1.0);
        2.0 * half.acos()
    }

    pub fn unitarity_error(&self) -> f64 {
        (self.0 * self.0.adjoint() - Matrix2::identity()).camax()
    }

    pub fn to_cmatrix(&self) -> CMatrix {
        CMatrix::from_fn(2, 2, |i, j| self.0[(i, j)])
    }
}

/// Random-walk drift: a rotation vector with per-axis standard deviation drift_rate·√dt.
pub fn drift_step<R: Rng + ?Sized>(u: &FibreUnitary, dt: f64, drift_rate: f64, rng: &mut R) -> Result<FibreUnitary, ChannelError> {
    if !(drift_rate >= 0.0 && dt >= 0.0) {
        return Err(ChannelError::InvalidParameter(format!("drift rate {drift_rate} and dt {dt} must be non-negative")));
    }
    if drift_rate == 0.0 || dt == 0.0 {
        return Ok(*u);
    }
    let sd = drift_rate * dt.sqrt();
    let mut omega = [0.0; 3];
    for w in omega.iter_mut() {
        let g: f64 = rng.sample(StandardNormal);
        *w = g * sd;
    }
    Ok(u.then(&FibreUnitary::from_rotation_vector(&omega)))
}

/// Compensator of three rotations about fixed Poincaré axes (S3, S1, S3), which covers SU(2).
pub fn compensator(settings: &[f64; 3]) -> FibreUnitary {
    FibreUnitary::rotation(&STOKES_R, settings[0])
        .then(&FibreUnitary::rotation(&STOKES_H, settings[1]))
        .then(&FibreUnitary::rotation(&STOKES_R, settings[2]))
}

/// Probes used for the optimization: vertical and diagonal linear polarization.
pub const PROBES: [Stokes; 2] = [STOKES_V, STOKES_D];

/// 1 − mean projection fidelity of the probes through `total`.
pub fn residual_error(total: &FibreUnitary) -> f64 {
    let f: f64 = PROBES.iter().map(|p| (1.0 + dot(p, &total.apply_stokes(p))) / 2.0).sum::<f64>() / PROBES.len() as f64;
    (1.0 - f).max(0.0)
}

fn probe_cost(fibre: &FibreUnitary, settings: &[f64; 3]) -> f64 {
    let total = fibre.then(&compensator(settings));
    PROBES
        .iter()
        .map(|p| {
            let out = total.apply_stokes(p);
            (out[0] - p[0]).powi(2) + (out[1] - p[1]).powi(2) + (out[2] - p[2]).powi(2)
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerState {
    /// Compensator rotation angles in rad.
    pub settings: [f64; 3],
    pub max_iterations: usize,
    /// Residual error at which a cycle stops early.
    pub target_residual: f64,
}

impl Default for ControllerState {
    fn default() -> Self {
        Self { settings: [0.0; 3], max_iterations: 2000, target_residual: 1e-6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ControlOutcome {
    pub settings: [f64; 3],
    pub initial_residual: f64,
    pub residual_error: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Residual below which a cycle counts as converged.
pub const CONVERGED_RESIDUAL: f64 = 0.01;

fn descend(fibre: &FibreUnitary, start: [f64; 3], budget: usize, target_cost: f64) -> ([f64; 3], f64, usize) {
    let h = 1e-6;
    let mut x = start;
    let mut fx = probe_cost(fibre, &x);
    let mut step = 0.5;
    let mut used = 0;
    while used < budget && fx > target_cost {
        used += 1;
        let mut g = [0.0; 3];
        for k in 0..3 {
            let mut p = x;
            let mut m = x;
            p[k] += h;
            m[k] -= h;
            g[k] = (probe_cost(fibre, &p) - probe_cost(fibre, &m)) / (2.0 * h);
        }
        let g2: f64 = g.iter().map(|v| v * v).sum();
        if g2 < 1e-24 {
            break;
        }
        // Armijo backtracking from a step that grows after each success.
        let mut t = step * 2.0;
        let mut accepted = false;
        while t > 1e-12 {
            let trial = [x[0] - t * g[0], x[1] - t * g[1], x[2] - t * g[2]];
            let ft = probe_cost(fibre, &trial);
            if ft <= fx - 0.5 * t * g2 {
                x = trial;
                fx = ft;
                step = t;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    (x, fx, used)
}

/// One optimization cycle of the compensator against the current fibre transformation.
///
/// Starts from the present settings and restarts from a fixed set of points when it stalls.
/// The result is never worse than the starting settings.
pub fn polarization_control_cycle(fibre: &FibreUnitary, state: &mut ControllerState) -> ControlOutcome {
    let initial_cost = probe_cost(fibre, &state.settings);
    let initial_residual = initial_cost / (4.0 * PROBES.len() as f64);
    let target_cost = state.target_residual * 4.0 * PROBES.len() as f64;
    let q = std::f64::consts::FRAC_PI_2;
    let restarts = [
        state.settings,
        [0.0, 0.0, 0.0],
        [q, q, q],
        [-q, q, -q],
        [q, -q, 0.0],
        [0.0, 2.0 * q, 0.0],
        [2.0 * q, q, -q],
    ];
    let per_start = (state.max_iterations / restarts.len()).max(1);
    let (mut best_x, mut best_f) = (state.settings, initial_cost);
    let mut iterations = 0;
    for start in restarts {
        let (x, f, used) = descend(fibre, start, per_start, target_cost);
        iterations += used;
        if f < best_f {
            best_f = f;
            best_x = x;
        }
        if best_f <= target_cost {
            break;
        }
    }
    state.settings = best_x.map(|a| a.rem_euclid(2.0 * std::f64::consts::PI));
    let residual = residual_error(&fibre.then(&compensator(&state.settings)));
    ControlOutcome {
        settings: state.settings,
        initial_residual,
        residual_error: residual,
        iterations,
        converged: residual < CONVERGED_RESIDUAL,
    }
}

/// Conjugates one photon qubit by a residual polarization transformation.
pub fn apply_polarization_error(rho: &DensityMatrix, residual: &FibreUnitary, photon: usize) -> Result<DensityMatrix, QuantumError> {
    if rho.space().dims().get(photon) != Some(&2) {
        return Err(QuantumError::InvalidSubsystem { index: photon, count: rho.space().num_subsystems() });
    }
    rho.apply_local_unitary(photon, &residual.to_cmatrix())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftControlConfig {
    /// rad/√s per Poincaré axis.
    pub drift_rate: f64,
    /// Time between control cycles, in s.
    pub cadence: f64,
    /// Time a control cycle takes, in s; no data is taken meanwhile.
    pub control_duration: f64,
    pub sample_interval: f64,
    pub total_time: f64,
    pub seed: u64,
}

impl DriftControlConfig {
    pub fn with_rate(drift_rate: f64) -> Self {
        Self { drift_rate, cadence: 420.0, control_duration: 20.0, sample_interval: 1.0, total_time: 48.0 * 3600.0, seed: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriftControlReport {
    pub time_averaged_error: f64,
    pub max_error: f64,
    pub cycles: usize,
    pub non_converged_cycles: usize,
}

/// Long-run drift with periodic re-optimization; errors are sampled while data would be taken.
pub fn simulate_drift_control(cfg: &DriftControlConfig) -> Result<DriftControlReport, ChannelError> {
    if !(cfg.cadence > 0.0 && cfg.sample_interval > 0.0 && cfg.total_time >= 0.0 && cfg.control_duration >= 0.0) {
        return Err(ChannelError::InvalidParameter("drift-control timings must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    // Arbitrary starting fibre state, compensated once before data taking.
    let mut fibre = drift_step(&FibreUnitary::identity(), 1.0, 2.0, &mut rng)?;
    let mut state = ControllerState::default();
    let mut report = DriftControlReport { time_averaged_error: 0.0, max_error: 0.0, cycles: 0, non_converged_cycles: 0 };
    let outcome = polarization_control_cycle(&fibre, &mut state);
    report.cycles += 1;
    if !outcome.converged {
        report.non_converged_cycles += 1;
    }
    let mut t = 0.0;
    let mut since_control = 0.0;
    let mut sum = 0.0;
    let mut samples = 0usize;
    while t < cfg.total_time {
        if since_control >= cfg.cadence {
            fibre = drift_step(&fibre, cfg.control_duration, cfg.drift_rate, &mut rng)?;
            t += cfg.control_duration;
            let outcome = polarization_control_cycle(&fibre, &mut state);
            report.cycles += 1;
            if !outcome.converged {
                report.non_converged_cycles += 1;
            }
            since_control = 0.0;
            continue;
        }
        fibre = drift_step(&fibre, cfg.sample_interval, cfg.drift_rate, &mut rng)?;
        t += cfg.sample_interval;
        since_control += cfg.sample_interval;
        let e = residual_error(&fibre.then(&compensator(&state.settings)));
        sum += e;
        samples += 1;
        report.max_error = report.max_error.max(e);
    }
    report.time_averaged_error = if samples > 0 { sum / samples as f64 } else { 0.0 };
    Ok(report)
}

/// Expected time-averaged error of an isotropic walk reset every `cadence` seconds: D·T/4.
pub fn predicted_average_error(drift_rate: f64, cadence: f64) -> f64 {
    drift_rate * drift_rate * cadence / 4.0
}

/// Largest drift rate whose predicted average error stays within `budget` at the given cadence.
pub fn max_supported_drift_rate(budget: f64, cadence: f64) -> f64 {
    (4.0 * budget / cadence).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn rodrigues(axis: &Stokes, angle: f64, s: &Stokes) -> Stokes {
        let (sn, cs) = angle.sin_cos();
        let kxs = [axis[1] * s[2] - axis[2] * s[1], axis[2] * s[0] - axis[0] * s[2], axis[0] * s[1] - axis[1] * s[0]];
        let kd = dot(axis, s);
        [0, 1, 2].map(|i| s[i] * cs + kxs[i] * sn + axis[i] * kd * (1.0 - cs))
    }

    #[test]
    fn stokes_conventions() {
        let r = 1.0 / 2f64.sqrt();
        assert_eq!(stokes_of(C64::new(1.0, 0.0), C64::new(0.0, 0.0)), STOKES_H);
        let d = stokes_of(C64::new(r, 0.0), C64::new(r, 0.0));
        assert_relative_eq!(d[1], 1.0, epsilon = 1e-12);
        let right = stokes_of(C64::new(r, 0.0), C64::new(0.0, -r));
        assert_relative_eq!(right[2], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn rotation_acts_as_rodrigues_on_sphere() {
        let axis = [0.48, -0.6, 0.64];
        let u = FibreUnitary::rotation(&axis, 1.1);
        assert!(u.unitarity_error() < 1e-14);
        for s in [STOKES_H, STOKES_D, STOKES_R, [0.0, -0.6, 0.8]] {
            let got = u.apply_stokes(&s);
            let want = rodrigues(&axis, 1.1, &s);
            for k in 0..3 {
                assert_relative_eq!(got[k], want[k], epsilon = 1e-12);
            }
        }
        assert_relative_eq!(u.rotation_angle(), 1.1, epsilon = 1e-12);
    }

    #[test]
    fn identity_needs_no_correction() {
        let mut state = ControllerState::default();
        let out = polarization_control_cycle(&FibreUnitary::identity(), &mut state);
        assert_eq!(out.settings, [0.0; 3]);
        assert!(out.residual_error < 1e-12);
    }

    #[test]
    fn quarter_turn_is_compensated() {
        for axis in [STOKES_H, STOKES_D, STOKES_R, [0.6, 0.0, 0.8]] {
            let fibre = FibreUnitary::rotation(&axis, std::f64::consts::FRAC_PI_2);
            let mut state = ControllerState::default();
            let out = polarization_control_cycle(&fibre, &mut state);
            assert!(out.converged && out.residual_error < 1e-3, "{axis:?}: {}", out.residual_error);
            // Same quality as the exact inverse.
            let exact = residual_error(&fibre.then(&fibre.inverse()));
            assert!(out.residual_error - exact < 0.01);
        }
    }

    #[test]
    fn drift_zero_rate_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = FibreUnitary::rotation(&STOKES_D, 0.3);
        assert_eq!(drift_step(&u, 10.0, 0.0, &mut rng).unwrap(), u);
    }

    #[test]
    fn polarization_error_on_photon_only() {
        use crate::quantum::atom_photon_state;
        let rho = atom_photon_state().to_density();
        assert!(apply_polarization_error(&rho, &FibreUnitary::identity(), 0).is_err());
        let same = apply_polarization_error(&rho, &FibreUnitary::identity(), 1).unwrap();
        assert!((same.matrix() - rho.matrix()).camax() < 1e-15);
    }
}
