//! Physical constants and unit conversions.
//!
//! Everything inside the crate is SI. The config file and the CLI take
//! convenience units (μm, G, kHz, ms) and convert at the boundary with the
//! helpers below.

use std::f64::consts::PI;

/// Vacuum permeability (T·m/A).
pub const MU_0: f64 = 4.0 * PI * 1e-7;
/// Planck constant (J·s).
pub const PLANCK: f64 = 6.62607e-34;
/// Reduced Planck constant (J·s).
pub const HBAR: f64 = PLANCK / (2.0 * PI);
/// Boltzmann constant (J/K).
pub const BOLTZMANN: f64 = 1.38065e-23;
/// Bohr magneton (J/T).
pub const BOHR_MAGNETON: f64 = 9.27401e-24;
/// Mass of ⁸⁷Rb (kg).
pub const RB87_MASS: f64 = 1.44316e-25;
/// s-wave scattering length of ⁸⁷Rb in |F=2, m_F=2⟩ (m), 98.98 a₀.
pub const RB87_SCATTERING_LENGTH: f64 = 98.98 * 5.29177e-11;
/// Standard gravity (m/s²).
pub const STANDARD_GRAVITY: f64 = 9.80665;

pub const MICRON: f64 = 1e-6;
pub const GAUSS: f64 = 1e-4;
pub const KHZ: f64 = 1e3;
pub const MS: f64 = 1e-3;

/// Converts a value given in `scale` units to SI.
#[inline]
pub fn from_unit(value: f64, scale: f64) -> f64 {
    value * scale
}

/// Converts an SI value to `scale` units.
///
/// Among the floats adjacent to `si / scale` that map back to `si` exactly
/// under [`from_unit`], returns the one with the shortest decimal form, so
/// values read from a config file serialize back to the same text and bits.
pub fn to_unit(si: f64, scale: f64) -> f64 {
    let guess = si / scale;
    if !guess.is_finite() {
        return guess;
    }
    let mut best: Option<(usize, f64)> = None;
    let mut consider = |u: f64| {
        if from_unit(u, scale) == si {
            let len = format!("{u}").len();
            if best.is_none_or(|(l, _)| len < l) {
                best = Some((len, u));
            }
        }
    };
    consider(guess);
    let (mut lo, mut hi) = (guess, guess);
    for _ in 0..8 {
        lo = next_down(lo);
        hi = next_up(hi);
        consider(lo);
        consider(hi);
    }
    best.map_or(guess, |(_, u)| u)
}

fn next_up(x: f64) -> f64 {
    if x == 0.0 {
        return f64::from_bits(1);
    }
    let bits = x.to_bits();
    if x > 0.0 {
        f64::from_bits(bits + 1)
    } else {
        f64::from_bits(bits - 1)
    }
}

fn next_down(x: f64) -> f64 {
    -next_up(-x)
}

/// Larmor frequency per gauss of a |F=2⟩ ⁸⁷Rb atom (Hz/G), μ_B/(2h).
pub fn rb87_f2_larmor_per_gauss() -> f64 {
    0.5 * BOHR_MAGNETON * GAUSS / PLANCK
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bohr_magneton_in_mhz_per_gauss() {
        let mhz_per_g = BOHR_MAGNETON * GAUSS / PLANCK / 1e6;
        assert!((mhz_per_g - 1.3996).abs() < 1e-4, "{mhz_per_g}");
    }

    #[test]
    fn to_unit_round_trips_config_values() {
        for v in [42.5, 0.05, 24.8, 7000.0, 1e-3, 3.0, 123.456789, -150.0] {
            for scale in [MICRON, GAUSS, KHZ] {
                let si = from_unit(v, scale);
                assert_eq!(from_unit(to_unit(si, scale), scale), si);
            }
        }
    }
}
