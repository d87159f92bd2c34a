//! Physical constants (CODATA 2018) and a small isotope mass table.

use std::f64::consts::PI;

pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
pub const VACUUM_PERMITTIVITY: f64 = 8.854_187_812_8e-12;
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;

pub const TWO_PI: f64 = 2.0 * PI;

/// `e^2 / (4 pi eps0)` in J m.
pub fn coulomb_constant_e2() -> f64 {
    ELEMENTARY_CHARGE * ELEMENTARY_CHARGE / (4.0 * PI * VACUUM_PERMITTIVITY)
}

/// Converts an ordinary frequency in kHz to angular frequency in rad/s.
pub fn khz(f: f64) -> f64 {
    TWO_PI * f * 1e3
}

pub fn mhz(f: f64) -> f64 {
    TWO_PI * f * 1e6
}

pub fn ghz(f: f64) -> f64 {
    TWO_PI * f * 1e9
}

/// Angular frequency (rad/s) back to kHz.
pub fn to_khz(omega: f64) -> f64 {
    omega / TWO_PI / 1e3
}

// Neutral atomic masses in u (AME2016).
const ISOTOPES: &[(&str, u32, f64)] = &[
    ("Ca", 40, 39.962_590_863),
    ("Ca", 42, 41.958_618_01),
    ("Ca", 44, 43.955_481_56),
    ("Ca", 48, 47.952_522_90),
    ("Yb", 168, 167.933_891),
    ("Yb", 170, 169.934_767),
    ("Yb", 171, 170.936_331),
    ("Yb", 172, 171.936_386),
    ("Yb", 173, 172.938_216),
    ("Yb", 174, 173.938_867),
    ("Yb", 176, 175.942_576),
];

/// Looks up an isotope mass in u. Accepts `"40Ca"`, `"Ca40"` and `"Ca-40"`
/// (case-insensitive element symbol).
pub fn isotope_mass_u(name: &str) -> Option<f64> {
    let letters: String = name.chars().filter(|c| c.is_ascii_alphabetic()).collect();
    let digits: String = name.chars().filter(|c| c.is_ascii_digit()).collect();
    let mass_number: u32 = digits.parse().ok()?;
    if letters.len() + digits.len() + name.matches('-').count() != name.len() {
        return None;
    }
    ISOTOPES
        .iter()
        .find(|(sym, a, _)| sym.eq_ignore_ascii_case(&letters) && *a == mass_number)
        .map(|&(_, _, m)| m)
}

pub fn isotope_mass_kg(name: &str) -> Option<f64> {
    isotope_mass_u(name).map(|m| m * ATOMIC_MASS_UNIT)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn isotope_names() {
        assert_eq!(isotope_mass_u("40Ca"), isotope_mass_u("Ca40"));
        assert_eq!(isotope_mass_u("ca-40"), Some(39.962_590_863));
        assert!(isotope_mass_u("Yb175").is_none());
        assert!(isotope_mass_u("Yb 172").is_none());
        assert!(isotope_mass_u("Ca").is_none());
    }

    #[test]
    fn unit_conversions() {
        assert!((to_khz(khz(439.5)) - 439.5).abs() < 1e-12);
        assert!((mhz(1.0) / khz(1.0) - 1e3).abs() < 1e-9);
    }
}
