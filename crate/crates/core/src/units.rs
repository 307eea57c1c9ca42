//! SI constants (CODATA 2018) and helpers for the natural unit system used in
//! the numerical core: lengths in `1/k0`, frequencies and rates in `Γ0` (or
//! `ω0` inside frequency integrals), forces in `ħ Γ0 k0`.

use std::f64::consts::PI;

pub const HBAR: f64 = 1.054_571_817e-34;
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const EPSILON_0: f64 = 8.854_187_812_8e-12;
pub const MU_0: f64 = 1.256_637_062_12e-6;

/// Angular frequency of a transition with vacuum wavelength `lambda` (m).
pub fn angular_frequency_from_wavelength(lambda: f64) -> f64 {
    2.0 * PI * SPEED_OF_LIGHT / lambda
}

pub fn wavelength_from_angular_frequency(omega: f64) -> f64 {
    2.0 * PI * SPEED_OF_LIGHT / omega
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vacuum_constants_are_consistent() {
        let c = 1.0 / (EPSILON_0 * MU_0).sqrt();
        assert!((c - SPEED_OF_LIGHT).abs() / SPEED_OF_LIGHT < 1e-9);
    }

    #[test]
    fn wavelength_round_trip() {
        let w = angular_frequency_from_wavelength(700e-9);
        assert!((w - 2.690_93e15).abs() / w < 1e-6);
        assert!((wavelength_from_angular_frequency(w) - 700e-9).abs() < 1e-20);
    }
}
