use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::trap::{TrapParams, Vec3};
use super::DephasingError;
use crate::constants::{BOHR_MAGNETON, BOLTZMANN, GAUSS, G_F};

/// Magnetic environment of the memory atom. All fields in gauss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldEnvironment {
    pub bias_field: Vec3,
    /// Per-axis standard deviation of the quasi-static shot-to-shot field offset.
    pub shot_noise_sigma: Vec3,
    /// Dimensionless strength of the trap-light fictitious field.
    pub fictitious_field_scale: f64,
}

impl FieldEnvironment {
    pub fn validate(&self) -> Result<(), DephasingError> {
        if self.shot_noise_sigma.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(DephasingError::InvalidParameter("shot noise sigma must be non-negative".into()));
        }
        if self.bias_field.iter().any(|b| !b.is_finite()) || !self.fictitious_field_scale.is_finite() {
            return Err(DephasingError::InvalidParameter("field values must be finite".into()));
        }
        Ok(())
    }

    /// Pure bias field with no noise and no fictitious field.
    pub fn quiet(bias_field: Vec3) -> Self {
        Self { bias_field, shot_noise_sigma: [0.0; 3], fictitious_field_scale: 0.0 }
    }

    /// One quasi-static noise offset, held for a whole storage interval.
    pub fn sample_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec3 {
        let mut out = [0.0; 3];
        for (o, s) in out.iter_mut().zip(self.shot_noise_sigma) {
            let g: f64 = rng.sample(StandardNormal);
            *o = g * s;
        }
        out
    }
}

/// Trap depth converted to the Zeeman-equivalent field |g_F| µ_B B = k_B U0, in gauss.
pub fn depth_field_equivalent(trap: &TrapParams) -> f64 {
    BOLTZMANN * trap.trap_depth / (G_F.abs() * BOHR_MAGNETON) / GAUSS
}

/// Fictitious field (gauss) experienced at `position`; it points along y.
///
/// The field scales with the local intensity and with x/w0 (odd across the polarization axis,
/// zero on the beam axis), times the focusing factor 2/(k w0).
pub fn fictitious_field(trap: &TrapParams, scale: f64, position: &Vec3) -> Vec3 {
    if scale == 0.0 {
        return [0.0; 3];
    }
    let k = 2.0 * PI / trap.wavelength;
    let w0 = trap.beam_waist;
    let amplitude = scale * depth_field_equivalent(trap) * trap.relative_intensity(position) * (position[0] / w0) * (2.0 / (k * w0));
    [0.0, amplitude, 0.0]
}

/// Total field: bias + quasi-static noise sample + position-dependent fictitious field.
pub fn local_effective_field(trap: &TrapParams, env: &FieldEnvironment, noise: &Vec3, position: &Vec3) -> Vec3 {
    let f = fictitious_field(trap, env.fictitious_field_scale, position);
    [
        env.bias_field[0] + noise[0] + f[0],
        env.bias_field[1] + noise[1] + f[1],
        env.bias_field[2] + noise[2] + f[2],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (TrapParams, FieldEnvironment) {
        let trap = TrapParams::new(850e-9, 2.32e-3, 2.05e-6).unwrap();
        let env = FieldEnvironment {
            bias_field: [0.0, 75.5e-3, 0.0],
            shot_noise_sigma: [0.0, 0.5e-3, 0.0],
            fictitious_field_scale: 0.05,
        };
        (trap, env)
    }

    #[test]
    fn centre_sees_bias_plus_noise() {
        let (trap, env) = setup();
        let noise = [0.0, 1.2e-4, -3e-5];
        let b = local_effective_field(&trap, &env, &noise, &[0.0, 0.0, 0.0]);
        assert_eq!(b, [0.0, 75.5e-3 + 1.2e-4, -3e-5]);
    }

    #[test]
    fn fictitious_field_is_odd_in_x() {
        let (trap, env) = setup();
        for x in [0.1e-6, 0.4e-6, 1.3e-6] {
            let p = fictitious_field(&trap, env.fictitious_field_scale, &[x, 0.2e-6, 0.5e-6]);
            let m = fictitious_field(&trap, env.fictitious_field_scale, &[-x, 0.2e-6, 0.5e-6]);
            assert!(p[1] != 0.0);
            assert_eq!(p[1], -m[1]);
        }
    }

    #[test]
    fn depth_equivalent_field() {
        let (trap, _) = setup();
        let b = depth_field_equivalent(&trap);
        assert!((b - 69.07).abs() < 0.1, "{b}");
    }

    #[test]
    fn negative_sigma_rejected() {
        let (_, mut env) = setup();
        env.shot_noise_sigma[0] = -1.0;
        assert!(env.validate().is_err());
    }
}
