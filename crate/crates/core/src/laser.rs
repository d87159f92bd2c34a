//! Raman-scheme design: per-phonon frequency shift, Stark-cancellation
//! detuning and the perturbative validity conditions.
//!
//! All quantities are angular frequencies (rad/s).

use std::fmt;

use crate::constants::TWO_PI;
use crate::error::{Error, Result};

/// Closest approach to a resonance denominator before it is treated as a pole.
pub const POLE_TOLERANCE: f64 = 1e3;

/// Upper-level decay rate assumed when none is given (a typical dipole line).
pub const DEFAULT_GAMMA: f64 = TWO_PI * 20e6;

pub const DEFAULT_MARGIN: f64 = 10.0;

/// Ratios within this relative distance of the margin count as meeting it.
const MARGIN_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaserParams {
    /// Single-photon detuning `Delta`.
    pub delta: f64,
    pub omega1: f64,
    pub omega2: f64,
    /// Raman detuning after absorbing the level-2 light shift.
    pub delta_l_prime: f64,
    /// Bare Raman detuning; `None` means `delta_l_prime + |omega2|^2 / (4 delta)`.
    pub delta_l: Option<f64>,
    pub eta_x: f64,
    pub omega_x: f64,
    pub gamma: f64,
}

impl LaserParams {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("delta", self.delta),
            ("omega1", self.omega1),
            ("omega2", self.omega2),
            ("delta_l_prime", self.delta_l_prime),
            ("eta_x", self.eta_x),
            ("omega_x", self.omega_x),
            ("gamma", self.gamma),
        ];
        for (name, v) in named {
            if !v.is_finite() {
                return Err(Error::Domain(format!("{name} must be finite, got {v}")));
            }
        }
        if !(self.eta_x > 0.0 && self.eta_x < 1.0) {
            return Err(Error::Domain(format!("eta_x must lie in (0, 1), got {}", self.eta_x)));
        }
        if self.omega_x < 0.0 || self.gamma < 0.0 {
            return Err(Error::Domain("omega_x and gamma must be >= 0".into()));
        }
        if self.delta == 0.0 {
            return Err(Error::Domain("delta must be nonzero".into()));
        }
        Ok(())
    }

    pub fn bare_raman_detuning(&self) -> f64 {
        self.delta_l.unwrap_or(self.delta_l_prime + self.omega2 * self.omega2 / (4.0 * self.delta))
    }

    /// Two-photon Raman coupling `|omega1 omega2| / (4 |delta|)`.
    pub fn raman_coupling(&self) -> f64 {
        (self.omega1 * self.omega2).abs() / (4.0 * self.delta.abs())
    }

    /// The same parameters with `delta` replaced by the cancellation detuning.
    pub fn at_cancellation(&self) -> Result<Self> {
        let delta = cancellation_detuning(self.omega2, self.delta_l_prime, self.eta_x, self.omega_x)?;
        Ok(LaserParams { delta, ..*self })
    }
}

fn check_pole(value: f64, what: &str) -> Result<()> {
    if value.abs() < POLE_TOLERANCE {
        return Err(Error::Domain(format!("{what} = {value:e} rad/s is within {POLE_TOLERANCE:e} of a pole")));
    }
    Ok(())
}

/// Per-phonon shift of the transverse frequency at axial intensity `fz_sq`:
/// `-|omega1 omega2 / (4 delta)|^2 fz_sq eta^2 (1/(dl' + wx) + 1/(dl' - wx))`.
pub fn raman_shift_amplitude(p: &LaserParams, fz_sq: f64) -> Result<f64> {
    p.validate()?;
    if !(0.0..=1.0).contains(&fz_sq) {
        return Err(Error::Domain(format!("fz_sq must lie in [0, 1], got {fz_sq}")));
    }
    check_pole(p.delta_l_prime + p.omega_x, "delta_l_prime + omega_x")?;
    check_pole(p.delta_l_prime - p.omega_x, "delta_l_prime - omega_x")?;
    let g = p.raman_coupling();
    let sidebands = 1.0 / (p.delta_l_prime + p.omega_x) + 1.0 / (p.delta_l_prime - p.omega_x);
    Ok(-g * g * fz_sq * p.eta_x * p.eta_x * sidebands)
}

/// Detuning at which the phonon-independent light shift vanishes:
/// `delta = |omega2|^2 (1/dl' + eta^2/(dl' + wx)) / 4`.
pub fn cancellation_detuning(omega2: f64, delta_l_prime: f64, eta_x: f64, omega_x: f64) -> Result<f64> {
    check_pole(delta_l_prime, "delta_l_prime")?;
    check_pole(delta_l_prime + omega_x, "delta_l_prime + omega_x")?;
    Ok(omega2 * omega2 * (1.0 / delta_l_prime + eta_x * eta_x / (delta_l_prime + omega_x)) / 4.0)
}

/// `1 - |omega2|^2/(4 delta) (1/dl' + eta^2/(dl' + wx))`: the factor
/// multiplying the residual optical potential.
pub fn static_term_factor(p: &LaserParams) -> Result<f64> {
    check_pole(p.delta_l_prime, "delta_l_prime")?;
    check_pole(p.delta_l_prime + p.omega_x, "delta_l_prime + omega_x")?;
    let bracket = 1.0 / p.delta_l_prime + p.eta_x * p.eta_x / (p.delta_l_prime + p.omega_x);
    Ok(1.0 - p.omega2 * p.omega2 / (4.0 * p.delta) * bracket)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Condition {
    /// Adiabatic elimination of the upper level.
    Elimination,
    /// Weak probe relative to the level-2 beam.
    RabiHierarchy,
    /// Off-resonant Raman coupling.
    Perturbative,
}

impl Condition {
    pub fn label(self) -> &'static str {
        match self {
            Condition::Elimination => "elimination",
            Condition::RabiHierarchy => "rabi_hierarchy",
            Condition::Perturbative => "perturbative",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidityEntry {
    pub condition: Condition,
    /// e.g. `|Delta| / Gamma`
    pub description: String,
    pub ratio: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidityReport {
    pub entries: Vec<ValidityEntry>,
    pub margin: f64,
    pub pass: bool,
}

impl ValidityReport {
    pub fn failures(&self) -> impl Iterator<Item = &ValidityEntry> {
        self.entries.iter().filter(|e| !e.pass)
    }

    pub fn min_ratio(&self, condition: Condition) -> Option<f64> {
        self.entries.iter().filter(|e| e.condition == condition).map(|e| e.ratio).reduce(f64::min)
    }
}

impl fmt::Display for ValidityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<16} {:<34} {:>12}  status", "condition", "ratio", "value")?;
        for e in &self.entries {
            let status = if e.pass { "ok" } else { "FAIL" };
            writeln!(f, "{:<16} {:<34} {:>12.4}  {status}", e.condition.label(), e.description, e.ratio)?;
        }
        write!(f, "required margin {}: {}", self.margin, if self.pass { "PASS" } else { "FAIL" })
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        f64::INFINITY
    } else {
        num.abs() / den.abs()
    }
}

/// Evaluates every ratio of the validity conditions; `omega_n` runs over
/// `mode_frequencies`.
pub fn validity_report(p: &LaserParams, mode_frequencies: &[f64], margin: f64) -> Result<ValidityReport> {
    p.validate()?;
    if mode_frequencies.is_empty() {
        return Err(Error::Contract("validity report needs at least one mode frequency".into()));
    }
    if !(margin > 0.0) {
        return Err(Error::Domain(format!("margin must be positive, got {margin}")));
    }
    let mut raw = Vec::new();
    let delta_l = p.bare_raman_detuning();
    let elim = Condition::Elimination;
    raw.push((elim, "|Delta| / |Omega1|".to_string(), ratio(p.delta, p.omega1)));
    raw.push((elim, "|Delta| / |Omega2|".to_string(), ratio(p.delta, p.omega2)));
    raw.push((elim, "|Delta| / Gamma".to_string(), ratio(p.delta, p.gamma)));
    raw.push((elim, "|Delta| / |delta_L|".to_string(), ratio(p.delta, delta_l)));
    let khz = |w: f64| w / TWO_PI / 1e3;
    for &w in mode_frequencies {
        raw.push((elim, format!("|Delta| / |delta_L + w({:.1} kHz)|", khz(w)), ratio(p.delta, delta_l + w)));
        raw.push((elim, format!("|Delta| / |delta_L - w({:.1} kHz)|", khz(w)), ratio(p.delta, delta_l - w)));
    }
    raw.push((Condition::RabiHierarchy, "|Omega2| / |Omega1|".to_string(), ratio(p.omega2, p.omega1)));
    let g = p.raman_coupling();
    let pert = Condition::Perturbative;
    raw.push((pert, "|delta_L'| / g".to_string(), ratio(p.delta_l_prime, g)));
    for &w in mode_frequencies {
        raw.push((pert, format!("|delta_L' + w({:.1} kHz)| / g", khz(w)), ratio(p.delta_l_prime + w, g)));
        raw.push((pert, format!("|delta_L' - w({:.1} kHz)| / g", khz(w)), ratio(p.delta_l_prime - w, g)));
    }
    let threshold = margin * (1.0 - MARGIN_SLACK);
    let entries: Vec<ValidityEntry> = raw
        .into_iter()
        .map(|(condition, description, ratio)| ValidityEntry { condition, description, ratio, pass: ratio >= threshold })
        .collect();
    let pass = entries.iter().all(|e| e.pass);
    Ok(ValidityReport { entries, margin, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::{ghz, khz, mhz};

    fn quoted() -> LaserParams {
        LaserParams {
            delta: ghz(100.0),
            omega1: mhz(200.0),
            omega2: ghz(2.0),
            delta_l_prime: mhz(10.0),
            delta_l: None,
            eta_x: 0.3,
            omega_x: khz(400.0),
            gamma: DEFAULT_GAMMA,
        }
    }

    #[test]
    fn shift_amplitude_at_quoted_parameters() {
        // g = 2pi x 1 MHz; 0.09 x (1/10.4 + 1/9.6) MHz^-1 x 1 MHz^2.
        let expected = -khz(1e3 * 0.09 * (1.0 / 10.4 + 1.0 / 9.6));
        let got = raman_shift_amplitude(&quoted(), 1.0).unwrap();
        assert!((got / expected - 1.0).abs() < 1e-12);
        assert!((got.abs() / khz(1.0) - 18.03).abs() < 0.01);
        let p0 = LaserParams { omega1: 0.0, ..quoted() };
        assert_eq!(raman_shift_amplitude(&p0, 1.0).unwrap(), 0.0);
        let p2 = LaserParams { omega1: 2.0 * quoted().omega1, ..quoted() };
        assert!((raman_shift_amplitude(&p2, 1.0).unwrap() / got - 4.0).abs() < 1e-12);
        assert!((raman_shift_amplitude(&quoted(), 0.25).unwrap() / got - 0.25).abs() < 1e-15);
    }

    #[test]
    fn pole_is_rejected() {
        let p = LaserParams { delta_l_prime: khz(400.0) + 10.0, ..quoted() };
        assert!(matches!(raman_shift_amplitude(&p, 1.0), Err(Error::Domain(_))));
        assert!(cancellation_detuning(ghz(2.0), 0.0, 0.3, khz(400.0)).is_err());
    }

    #[test]
    fn cancellation_detuning_values() {
        let p = quoted();
        let d = cancellation_detuning(p.omega2, p.delta_l_prime, p.eta_x, p.omega_x).unwrap();
        let leading = p.omega2 * p.omega2 / (4.0 * p.delta_l_prime);
        assert!((leading / ghz(100.0) - 1.0).abs() < 1e-12);
        assert!((d / leading - (1.0 + 0.09 * 10.0 / 10.4)).abs() < 1e-12);
        assert_eq!(cancellation_detuning(p.omega2, p.delta_l_prime, 0.0, p.omega_x).unwrap(), leading);
        assert!(cancellation_detuning(p.omega2, -p.delta_l_prime, 0.3, p.omega_x).unwrap() < 0.0);
        let solved = p.at_cancellation().unwrap();
        assert!(static_term_factor(&solved).unwrap().abs() < 1e-12);
    }

    #[test]
    fn report_at_quoted_parameters() {
        let report = validity_report(&quoted(), &[khz(400.0)], 10.0).unwrap();
        assert_eq!(report.min_ratio(Condition::RabiHierarchy), Some(10.0));
        let pert: Vec<f64> = report.entries.iter().filter(|e| e.condition == Condition::Perturbative).map(|e| e.ratio).collect();
        assert!((pert[0] - 10.0).abs() < 1e-12);
        assert!((pert[1] - 10.4).abs() < 1e-12 && (pert[2] - 9.6).abs() < 1e-12);
        assert!(!report.pass);
        assert_eq!(report.failures().count(), 1);
        assert!(report.min_ratio(Condition::Elimination).unwrap() > 10.0);
    }

    #[test]
    fn report_flags_fast_decay() {
        let p = LaserParams { gamma: 2.0 * quoted().delta, ..quoted() };
        let report = validity_report(&p, &[khz(400.0)], 10.0).unwrap();
        assert!(report.failures().any(|e| e.description == "|Delta| / Gamma"));
        assert!(validity_report(&p, &[], 10.0).is_err());
    }
}
