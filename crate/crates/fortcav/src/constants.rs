//! Physical constants (CODATA 2018) and cesium-133 parameters.
//!
//! Energies are handled in Hz internally (E/h); conversions to J or K happen
//! at call sites through the helpers below.

/// Planck constant, J s.
pub const H_PLANCK: f64 = 6.626_070_15e-34;
/// Reduced Planck constant, J s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Speed of light, m/s.
pub const C_LIGHT: f64 = 299_792_458.0;
/// Vacuum permittivity, F/m.
pub const EPSILON_0: f64 = 8.854_187_812_8e-12;
/// Boltzmann constant, J/K.
pub const K_BOLTZMANN: f64 = 1.380_649e-23;
/// Standard gravity, m/s^2.
pub const G_STANDARD: f64 = 9.806_65;
/// Atomic mass unit, kg.
pub const AMU: f64 = 1.660_539_066_60e-27;
/// Elementary charge, C.
pub const E_CHARGE: f64 = 1.602_176_634e-19;
/// Bohr radius, m.
pub const A_BOHR: f64 = 5.291_772_109_03e-11;
/// Atomic unit of electric dipole moment (e a0), C m.
pub const EA0: f64 = E_CHARGE * A_BOHR;

/// Mass of cesium-133, kg.
pub const CS133_MASS: f64 = 132.905_451_961 * AMU;
/// Nuclear spin of cesium-133, doubled (I = 7/2).
pub const CS133_TWO_I: i32 = 7;

/// Convert a level energy in cm^-1 to Hz.
pub fn wavenumber_cm_to_hz(e_cm: f64) -> f64 {
    e_cm * 100.0 * C_LIGHT
}

/// Vacuum wavelength (nm) of a transition with energy splitting in Hz.
pub fn transition_wavelength_nm(delta_e_hz: f64) -> f64 {
    C_LIGHT / delta_e_hz * 1.0e9
}

/// Angular frequency (rad/s) of light with vacuum wavelength in nm.
pub fn omega_of_wavelength_nm(lambda_nm: f64) -> f64 {
    2.0 * std::f64::consts::PI * C_LIGHT / (lambda_nm * 1.0e-9)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cesium_mass_matches_tabulated_value() {
        assert!((CS133_MASS - 2.206_947e-25).abs() / CS133_MASS < 1e-6);
    }

    #[test]
    fn wavelength_energy_roundtrip() {
        let e = wavenumber_cm_to_hz(11_732.307_104_1);
        let lambda = transition_wavelength_nm(e);
        assert!((lambda - 852.347).abs() < 0.01);
    }
}
