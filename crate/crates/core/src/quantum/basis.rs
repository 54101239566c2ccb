//! Fixed basis and phase conventions.
//!
//! Qutrit ordering is (m_F = −1, 0, +1); |↓⟩z is m_F = −1 and |↑⟩z is m_F = +1.
//! Photon ordering is (H, V).
//!
//! | state  | definition                      |
//! |--------|---------------------------------|
//! | \|↑⟩x  | (\|↑⟩z + \|↓⟩z)/√2              |
//! | \|↓⟩x  | i(\|↓⟩z − \|↑⟩z)/√2             |
//! | \|R⟩   | (\|H⟩ − i\|V⟩)/√2               |
//! | \|L⟩   | (\|H⟩ + i\|V⟩)/√2               |
//!
//! With these phases, cos α|↑⟩x + sin α|↓⟩x = (e^{−iα}|↑⟩z + e^{iα}|↓⟩z)/√2, so an
//! analysis angle α is a point at azimuth 2α on the equator: α = 0 is X, α = 45° is Y.

use std::f64::consts::FRAC_1_SQRT_2;

use super::state::{c, CVector, C64};

pub const M_MINUS: usize = 0;
pub const M_ZERO: usize = 1;
pub const M_PLUS: usize = 2;
pub const H: usize = 0;
pub const V: usize = 1;

pub fn qutrit(amps: [C64; 3]) -> CVector {
    CVector::from_vec(amps.to_vec())
}

pub fn qubit(amps: [C64; 2]) -> CVector {
    CVector::from_vec(amps.to_vec())
}

pub fn up_z() -> CVector {
    qutrit([c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)])
}

pub fn down_z() -> CVector {
    qutrit([c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)])
}

pub fn m_zero() -> CVector {
    qutrit([c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)])
}

pub fn up_x() -> CVector {
    qutrit([c(FRAC_1_SQRT_2, 0.0), c(0.0, 0.0), c(FRAC_1_SQRT_2, 0.0)])
}

pub fn down_x() -> CVector {
    qutrit([c(0.0, FRAC_1_SQRT_2), c(0.0, 0.0), c(0.0, -FRAC_1_SQRT_2)])
}

pub fn pol_h() -> CVector {
    qubit([c(1.0, 0.0), c(0.0, 0.0)])
}

pub fn pol_v() -> CVector {
    qubit([c(0.0, 0.0), c(1.0, 0.0)])
}

pub fn pol_r() -> CVector {
    qubit([c(FRAC_1_SQRT_2, 0.0), c(0.0, -FRAC_1_SQRT_2)])
}

pub fn pol_l() -> CVector {
    qubit([c(FRAC_1_SQRT_2, 0.0), c(0.0, FRAC_1_SQRT_2)])
}

pub fn pol_d() -> CVector {
    qubit([c(FRAC_1_SQRT_2, 0.0), c(FRAC_1_SQRT_2, 0.0)])
}

pub fn pol_a() -> CVector {
    qubit([c(FRAC_1_SQRT_2, 0.0), c(-FRAC_1_SQRT_2, 0.0)])
}
