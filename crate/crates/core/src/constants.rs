//! Physical constants (SI unless stated otherwise).

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Group velocity approximation used for all fibre delays.
pub const FIBRE_SPEED: f64 = 2.0 / 3.0 * SPEED_OF_LIGHT;
pub const BOLTZMANN: f64 = 1.380_649e-23;
pub const HBAR: f64 = 1.054_571_817e-34;
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Bohr magneton in J/T.
pub const BOHR_MAGNETON: f64 = 9.274_010_078_3e-24;
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;
pub const RB87_MASS: f64 = 86.909_180_527 * ATOMIC_MASS_UNIT;
/// Landé factor of the 5S1/2 F=1 ground state.
pub const G_F: f64 = -0.5;
pub const GAUSS: f64 = 1e-4;
