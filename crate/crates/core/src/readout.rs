//! Displacement-based measurement of first moments and the thermally
//! filtered transport signal.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::propagators::{pairwise_mean, GaussianState};

/// Probe phases `0, 2pi/3, -2pi/3`.
pub const PROBE_PHASES: [f64; 3] = [0.0, 2.0 * PI / 3.0, -2.0 * PI / 3.0];

pub const DEFAULT_PROBE_AMPLITUDE: f64 = 1.0;

fn check_site(state: &GaussianState, site: usize) -> Result<()> {
    if site >= state.n_sites() {
        return Err(Error::Contract(format!("site {} out of range for {} sites", site + 1, state.n_sites())));
    }
    Ok(())
}

/// Applies `D(alpha)` on one site: `mu_j -> mu_j + alpha`, `V` unchanged.
pub fn displace(state: &GaussianState, site: usize, alpha: Complex64) -> Result<GaussianState> {
    check_site(state, site)?;
    let mut out = state.clone();
    out.mu[site] += alpha;
    Ok(out)
}

/// `<a_j^dag a_j> + |alpha|^2 + 2 Re(alpha^* <a_j>)`
pub fn occupation_after_displacement(state: &GaussianState, site: usize, alpha: Complex64) -> Result<f64> {
    check_site(state, site)?;
    Ok(displaced_occupation(state.occupation(site), state.mu[site], alpha))
}

/// The same identity for any state given its moments.
pub fn displaced_occupation(occupation: f64, moment: Complex64, alpha: Complex64) -> f64 {
    occupation + alpha.norm_sqr() + 2.0 * (alpha.conj() * moment).re
}

/// `<a_j>` from readings at `|alpha| e^{i theta}` for the three probe phases.
pub fn reconstruct_first_moment(n0: f64, nplus: f64, nminus: f64, alpha_mag: f64) -> Result<Complex64> {
    if !(alpha_mag > 0.0) || !alpha_mag.is_finite() {
        return Err(Error::Domain(format!("probe amplitude must be positive, got {alpha_mag}")));
    }
    let sum: Complex64 = [n0, nplus, nminus]
        .iter()
        .zip(PROBE_PHASES)
        .map(|(n, theta)| Complex64::from_polar(*n, theta))
        .sum();
    Ok(sum / (3.0 * alpha_mag))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementRecord {
    pub site: usize,
    pub alpha_mag: f64,
    /// Occupations at the probe phases, in [`PROBE_PHASES`] order. With read
    /// noise they may dip below zero.
    pub readings: [f64; 3],
    pub moment: Complex64,
}

/// Additive Gaussian noise on each occupation reading.
#[derive(Debug, Clone, Copy)]
pub struct ReadNoise {
    pub sigma: f64,
}

impl ReadNoise {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::Domain(format!("read-noise sigma must be >= 0, got {sigma}")));
        }
        Ok(ReadNoise { sigma })
    }

    /// Standard deviation of each real component of the reconstructed moment.
    pub fn moment_std(&self, alpha_mag: f64) -> f64 {
        self.sigma / (6.0_f64.sqrt() * alpha_mag)
    }
}

/// Simulates the three displaced readings of one site and reconstructs `<a_j>`.
pub fn measure<R: Rng + ?Sized>(
    state: &GaussianState,
    site: usize,
    alpha_mag: f64,
    noise: Option<(ReadNoise, &mut R)>,
) -> Result<MeasurementRecord> {
    if !(alpha_mag > 0.0) {
        return Err(Error::Domain(format!("probe amplitude must be positive, got {alpha_mag}")));
    }
    let mut readings = [0.0; 3];
    for (r, theta) in readings.iter_mut().zip(PROBE_PHASES) {
        *r = occupation_after_displacement(state, site, Complex64::from_polar(alpha_mag, theta))?;
    }
    if let Some((rn, rng)) = noise {
        if rn.sigma > 0.0 {
            let normal = Normal::new(0.0, rn.sigma).map_err(|e| Error::Domain(e.to_string()))?;
            for r in readings.iter_mut() {
                *r += normal.sample(rng);
            }
        }
    }
    let moment = reconstruct_first_moment(readings[0], readings[1], readings[2], alpha_mag)?;
    Ok(MeasurementRecord { site, alpha_mag, readings, moment })
}

/// Realisation average of `|<a_j>(t)|^2`; `moments[traj][t][j]`.
pub fn filtered_transport_signal(moments: &[Vec<Vec<Complex64>>]) -> Result<Vec<Vec<f64>>> {
    if moments.is_empty() {
        return Err(Error::Contract("filtered signal needs at least one trajectory".into()));
    }
    let shape: Vec<usize> = moments[0].iter().map(Vec::len).collect();
    if moments.iter().any(|m| m.iter().map(Vec::len).ne(shape.iter().copied())) {
        return Err(Error::Contract("trajectory records have different shapes".into()));
    }
    let sq: Vec<Vec<Vec<f64>>> =
        moments.iter().map(|m| m.iter().map(|row| row.iter().map(|z| z.norm_sqr()).collect()).collect()).collect();
    Ok(pairwise_mean(&sq.iter().collect::<Vec<_>>()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn displacement_examples() {
        let vac = GaussianState::vacuum(2);
        let alpha = c(0.3, -0.7);
        let d = displace(&vac, 1, alpha).unwrap();
        assert_eq!(d.mu[1], alpha);
        assert!((d.occupation(1) - alpha.norm_sqr()).abs() < 1e-15);
        let back = displace(&d, 1, -alpha).unwrap();
        assert_eq!(back, vac);
        let th = displace(&GaussianState::thermal(2, 0.4), 0, alpha).unwrap();
        assert!((th.occupation(0) - 0.4 - alpha.norm_sqr()).abs() < 1e-15);
        assert!(displace(&vac, 2, alpha).is_err());
    }

    #[test]
    fn occupation_formula_examples() {
        let mut s = GaussianState::vacuum(1);
        s.mu[0] = c(1.0, 0.0);
        assert_eq!(occupation_after_displacement(&s, 0, c(1.0, 0.0)).unwrap(), 4.0);
        s.mu[0] = c(0.0, 1.0);
        s.v = DMatrix::from_element(1, 1, c(0.2, 0.0));
        assert!((occupation_after_displacement(&s, 0, c(1.0, 0.0)).unwrap() - 2.2).abs() < 1e-15);
        let th = GaussianState::thermal(1, 0.7);
        let a = c(0.2, 0.9);
        assert!((occupation_after_displacement(&th, 0, a).unwrap() - 0.7 - a.norm_sqr()).abs() < 1e-15);
    }

    #[test]
    fn thermal_state_reconstructs_to_zero() {
        let th = GaussianState::thermal(3, 12.5);
        let rec = measure::<rand_chacha::ChaCha8Rng>(&th, 2, 1.0, None).unwrap();
        assert!(rec.moment.norm() < 1e-12);
        assert!(reconstruct_first_moment(1.0, 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn filtered_signal_single_trajectory() {
        let m = vec![vec![vec![c(0.6, 0.8), c(0.0, 0.0)], vec![c(0.0, 0.5), c(1.0, 0.0)]]];
        assert_eq!(filtered_transport_signal(&m).unwrap(), vec![vec![1.0, 0.0], vec![0.25, 1.0]]);
        assert!(filtered_transport_signal(&[]).is_err());
    }
}
