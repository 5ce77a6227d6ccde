//! Physical constants in the quantum-dot unit system: energies in meV,
//! lengths in nm, times in fs, temperatures in K.
//!
//! Mass is therefore measured in meV·fs²/nm².

/// Reduced Planck constant, meV·fs.
pub const HBAR: f64 = 658.211_956_9;

/// Boltzmann constant, meV/K.
pub const K_B: f64 = 0.086_173_33;

/// Speed of light, nm/fs.
pub const SPEED_OF_LIGHT: f64 = 299.792_458;

/// Electron rest energy m_e c², meV.
pub const ELECTRON_REST_ENERGY: f64 = 510_998_950.0;

/// Electron mass, meV·fs²/nm².
pub const ELECTRON_MASS: f64 = ELECTRON_REST_ENERGY / (SPEED_OF_LIGHT * SPEED_OF_LIGHT);

/// e²/(4π ε₀), meV·nm.
pub const COULOMB_CONSTANT: f64 = 1_439.964_548;

/// Inverse temperature 1/(k_B T) in 1/meV.
pub fn beta_from_kelvin(temperature: f64) -> f64 {
    1.0 / (K_B * temperature)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thermal_energy_at_11_6_kelvin() {
        let kt = 1.0 / beta_from_kelvin(11.6);
        assert!((kt - 0.999_61).abs() < 1e-5);
    }

    #[test]
    fn electron_mass_in_dot_units() {
        assert!((ELECTRON_MASS - 5_685.630).abs() < 1e-2);
    }
}
