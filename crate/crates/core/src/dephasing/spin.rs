use std::f64::consts::SQRT_2;

use nalgebra::{Matrix3, Vector3};

use super::trap::Vec3;
use super::DephasingError;
use crate::constants::{BOHR_MAGNETON, GAUSS, G_F, HBAR};
use crate::quantum::C64;

pub type Spinor = Vector3<C64>;
pub type SpinOperator = Matrix3<C64>;

/// (g_F µ_B / ħ) in rad s⁻¹ G⁻¹; negative for the F = 1 ground state.
pub const ZEEMAN_RATE: f64 = G_F * BOHR_MAGNETON * GAUSS / HBAR;

const Z: C64 = C64::new(0.0, 0.0);

/// Spin-1 operators (F_x, F_y, F_z) in the (m = −1, 0, +1) basis.
pub fn spin1_operators() -> [SpinOperator; 3] {
    let r = C64::new(SQRT_2 / 2.0, 0.0);
    let i = C64::new(0.0, SQRT_2 / 2.0);
    let one = C64::new(1.0, 0.0);
    let fx = SpinOperator::new(Z, r, Z, r, Z, r, Z, r, Z);
    let fy = SpinOperator::new(Z, i, Z, -i, Z, i, Z, -i, Z);
    let fz = SpinOperator::new(-one, Z, Z, Z, Z, Z, Z, Z, one);
    [fx, fy, fz]
}

/// exp(−i θ n·F) for a unit axis n, via the spin-1 identity (n·F)³ = n·F.
#[inline]
pub fn spin1_rotation(axis: &Vec3, angle: f64) -> SpinOperator {
    let (nx, ny, nz) = (axis[0], axis[1], axis[2]);
    let r = SQRT_2 / 2.0;
    // n·F written out; only the off-diagonal band is non-zero apart from F_z.
    let a = C64::new(nx * r, ny * r);
    let k = SpinOperator::new(
        C64::new(-nz, 0.0), a, Z,
        a.conj(), Z, a,
        Z, a.conj(), C64::new(nz, 0.0),
    );
    let k2 = k * k;
    let (s, c) = angle.sin_cos();
    SpinOperator::identity() - k * C64::new(0.0, s) + k2 * C64::new(c - 1.0, 0.0)
}

/// Propagator of one step dt in a constant field (gauss).
#[inline]
pub fn zeeman_step(field: &Vec3, dt: f64) -> SpinOperator {
    let b = (field[0] * field[0] + field[1] * field[1] + field[2] * field[2]).sqrt();
    if b == 0.0 {
        return SpinOperator::identity();
    }
    let axis = [field[0] / b, field[1] / b, field[2] / b];
    spin1_rotation(&axis, ZEEMAN_RATE * b * dt)
}

#[derive(Debug, Clone)]
pub struct SpinTrajectoryResult {
    pub times: Vec<f64>,
    pub spin_states: Vec<[C64; 3]>,
    /// ⟨F_x⟩, ⟨F_y⟩, ⟨F_z⟩ per time.
    pub expectations: Vec<Vec3>,
}

fn expectations(psi: &Spinor, ops: &[SpinOperator; 3]) -> Vec3 {
    let mut out = [0.0; 3];
    for (o, op) in out.iter_mut().zip(ops) {
        *o = psi.dotc(&(op * psi)).re;
    }
    out
}

/// Time-ordered evolution through fields sampled at step boundaries (gauss).
///
/// Each step uses the mean of the fields at its two ends.
pub fn evolve_spin1(initial: [C64; 3], fields: &[Vec3], dt: f64) -> Result<SpinTrajectoryResult, DephasingError> {
    let mut psi = Spinor::new(initial[0], initial[1], initial[2]);
    let norm = psi.norm();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(DephasingError::InvalidParameter(format!("initial spinor norm {norm}")));
    }
    if fields.is_empty() {
        return Err(DephasingError::InvalidParameter("empty field sequence".into()));
    }
    let ops = spin1_operators();
    let mut res = SpinTrajectoryResult {
        times: vec![0.0],
        spin_states: vec![initial],
        expectations: vec![expectations(&psi, &ops)],
    };
    for (i, pair) in fields.windows(2).enumerate() {
        let mid = [
            0.5 * (pair[0][0] + pair[1][0]),
            0.5 * (pair[0][1] + pair[1][1]),
            0.5 * (pair[0][2] + pair[1][2]),
        ];
        psi = zeeman_step(&mid, dt) * psi;
        res.times.push((i + 1) as f64 * dt);
        res.spin_states.push([psi[0], psi[1], psi[2]]);
        res.expectations.push(expectations(&psi, &ops));
    }
    Ok(res)
}
