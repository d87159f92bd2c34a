//! Cross-checks of the Gaussian engine against the Fock-space oracle on
//! one recorded noise realisation.

use num_complex::Complex64;

use crate::chain::{build_model, ChainModel, ChainSpec};
use crate::constants::{isotope_mass_kg, khz, TWO_PI};
use crate::error::{Error, Result};
use crate::fock::{evolve_master, FockDensityMatrix, FockSpace};
use crate::noise::{make_process, NoiseKind, NoiseSpec};
use crate::propagators::{run_gaussian_trajectory, BathSpec, GaussianState, TimeGrid};

/// Agreement required between the engine and the oracle.
pub const ORACLE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct OracleCase {
    pub name: String,
    pub model: ChainModel,
    pub noise: NoiseSpec,
    /// Must have `init_occupation = 0`; the oracle starts from a pure state.
    pub bath: BathSpec,
    /// 0-based.
    pub site: usize,
    pub alpha: Complex64,
    pub cutoff: usize,
    pub grid: TimeGrid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleComparison {
    pub name: String,
    pub sites: usize,
    pub cutoff: usize,
    pub max_occupation_error: f64,
    pub max_moment_error: f64,
    pub max_trace_error: f64,
    pub max_hermiticity_error: f64,
    pub max_leak: f64,
    pub steps: usize,
    pub tolerance: f64,
}

impl OracleComparison {
    pub fn pass(&self) -> bool {
        self.max_occupation_error <= self.tolerance && self.max_moment_error <= self.tolerance
    }

    pub fn summary(&self) -> String {
        format!(
            "{}: sites {} cutoff {} | occupation err {:.3e} | moment err {:.3e} | leak {:.3e} | trace err {:.3e} | {}",
            self.name,
            self.sites,
            self.cutoff,
            self.max_occupation_error,
            self.max_moment_error,
            self.max_leak,
            self.max_trace_error,
            if self.pass() { "PASS" } else { "FAIL" }
        )
    }
}

/// Runs both integrators on the same recorded noise and reports the largest
/// deviations in occupations and first moments.
pub fn compare_with_oracle(case: &OracleCase) -> Result<OracleComparison> {
    if case.bath.init_occupation != 0.0 {
        return Err(Error::Contract("oracle comparison starts from a pure coherent state".into()));
    }
    let n = case.model.n_ions();
    let samples = make_process(&case.noise, &case.model.positions, case.grid.end())?.record();

    let g0 = GaussianState::vacuum(n).with_coherent(case.site, case.alpha)?;
    let (series, moments) = run_gaussian_trajectory(&case.model, samples.clone(), &case.bath, &g0, &case.grid)?;

    let mut alphas = vec![Complex64::new(0.0, 0.0); n];
    alphas[case.site] = case.alpha;
    let rho0 = FockDensityMatrix::coherent(FockSpace::new(n, case.cutoff)?, &alphas)?;
    let oracle = evolve_master(&case.model, &samples, &case.bath, &rho0, &case.grid)?;

    let mut occ_err = 0.0_f64;
    let mut mom_err = 0.0_f64;
    for t in 0..case.grid.len() {
        for j in 0..n {
            occ_err = occ_err.max((series.populations[t][j] - oracle.occupations[t][j]).abs());
            mom_err = mom_err.max((moments[t][j] - oracle.moments[t][j]).norm());
        }
    }
    Ok(OracleComparison {
        name: case.name.clone(),
        sites: n,
        cutoff: case.cutoff,
        max_occupation_error: occ_err,
        max_moment_error: mom_err,
        max_trace_error: oracle.max_trace_error,
        max_hermiticity_error: oracle.max_hermiticity_error,
        max_leak: oracle.max_leak,
        steps: oracle.steps,
        tolerance: ORACLE_TOLERANCE,
    })
}

/// Reference chain: calcium ions at 40 kHz axial confinement with the given
/// local frequencies (kHz), taken as already renormalized.
pub fn reference_chain(local_khz: &[f64]) -> Result<ChainModel> {
    let mass = isotope_mass_kg("40Ca").ok_or_else(|| Error::Model("unknown isotope 40Ca".into()))?;
    build_model(&ChainSpec::explicit(khz(40.0), mass, local_khz.iter().map(|f| khz(*f)).collect(), true))
}

/// Bath with the reproduction heating rate `2 kappa nbar = 0.15 / ms` at an
/// occupation small enough for a truncated Fock space.
pub fn rescaled_bath() -> BathSpec {
    BathSpec { kappa: 250.0, nbar: 0.3, init_occupation: 0.0 }
}

/// The default two- and three-site comparisons.
pub fn standard_cases(seed: u64) -> Result<Vec<OracleCase>> {
    let noise = NoiseSpec {
        kind: NoiseKind::StandingWave,
        amplitude: TWO_PI * 3e3,
        lambda_ratio_n: 4,
        dwell: 20e-6,
        seed,
    };
    let grid = TimeGrid::uniform(0.4e-3, 10e-6)?;
    let alpha = Complex64::new(0.5, 0.0);
    Ok(vec![
        OracleCase {
            name: "two_site".into(),
            model: reference_chain(&[435.0, 439.5])?,
            noise: noise.clone(),
            bath: rescaled_bath(),
            site: 0,
            alpha,
            cutoff: 10,
            grid: grid.clone(),
        },
        OracleCase {
            name: "three_site".into(),
            model: reference_chain(&[435.0, 439.5, 445.0])?,
            noise,
            bath: rescaled_bath(),
            site: 0,
            alpha,
            cutoff: 7,
            grid,
        },
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rescaled_bath_matches_heating_rate() {
        assert!((rescaled_bath().heating_rate() * 1e-3 - 0.15).abs() < 1e-15);
    }

    #[test]
    fn two_site_agreement() {
        let case = standard_cases(7).unwrap().remove(0);
        let report = compare_with_oracle(&case).unwrap();
        assert!(report.pass(), "{}", report.summary());
        assert!(report.max_trace_error < 1e-8);
        assert!(report.max_hermiticity_error < 1e-10);
    }
}
