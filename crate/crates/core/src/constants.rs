//! CODATA 2018 exact and recommended values, SI units.

/// Elementary charge, C.
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
/// Reduced Planck constant, J s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Boltzmann constant, J/K.
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// Atomic mass constant, kg.
pub const ATOMIC_MASS: f64 = 1.660_539_066_60e-27;
/// Electron mass in atomic mass units.
pub const ELECTRON_MASS_U: f64 = 5.485_799_090_65e-4;
/// Neutral ⁸⁸Sr atomic mass in atomic mass units (AME2016).
pub const SR88_ATOMIC_MASS_U: f64 = 87.905_612_5;
