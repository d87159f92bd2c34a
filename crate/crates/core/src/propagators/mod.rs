//! Time evolution under the hopping Hamiltonian plus piecewise-constant
//! frequency shifts.
//!
//! Within a dwell interval the effective Hamiltonian is constant, so both
//! engines apply exact exponentials built from one eigendecomposition per
//! interval. The only discretisation is the dwell itself.

mod ensemble;
mod gaussian;
mod single;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::noise::{interval_count, ShiftSample};

pub use ensemble::{ensemble_run, pairwise_mean, Engine, EnsembleResult, EnsembleSetup, InitialCondition};
pub use gaussian::{run_gaussian_trajectory, BathSpec, GaussianState};
pub use single::{run_single_excitation_trajectory, step_unitary, SingleExcitationState};

/// Relative asymmetry tolerated in an effective Hamiltonian.
const SYMMETRY_TOLERANCE: f64 = 1e-12;

/// `exp(-i h dt)` for a real symmetric `h`, reusable for any `dt`.
#[derive(Debug, Clone)]
pub struct IntervalPropagator {
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
}

impl IntervalPropagator {
    pub fn new(h: &DMatrix<f64>) -> Result<Self> {
        if !h.is_square() {
            return Err(Error::Contract(format!("Hamiltonian is {}x{}, not square", h.nrows(), h.ncols())));
        }
        let scale = h.iter().fold(0.0_f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
        let n = h.nrows();
        for j in 0..n {
            for k in j + 1..n {
                if (h[(j, k)] - h[(k, j)]).abs() > SYMMETRY_TOLERANCE * scale {
                    return Err(Error::Contract(format!(
                        "effective Hamiltonian is not symmetric at ({}, {})",
                        j + 1,
                        k + 1
                    )));
                }
            }
        }
        let eig = SymmetricEigen::new(h.clone());
        Ok(IntervalPropagator { eigenvalues: eig.eigenvalues, eigenvectors: eig.eigenvectors })
    }

    /// `h + diag(shifts)`
    pub fn with_shifts(h: &DMatrix<f64>, shifts: &[f64]) -> Result<Self> {
        if shifts.len() != h.nrows() {
            return Err(Error::Contract(format!(
                "{} frequency shifts for a {}-site Hamiltonian",
                shifts.len(),
                h.nrows()
            )));
        }
        let mut h_eff = h.clone();
        for (j, s) in shifts.iter().enumerate() {
            h_eff[(j, j)] += s;
        }
        Self::new(&h_eff)
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    fn phases(&self, dt: f64) -> DVector<Complex64> {
        self.eigenvalues.map(|e| Complex64::from_polar(1.0, -e * dt))
    }

    /// `exp(-i h dt) psi`
    pub fn apply(&self, psi: &DVector<Complex64>, dt: f64) -> DVector<Complex64> {
        let q = self.eigenvectors.map(|x| Complex64::new(x, 0.0));
        let coeffs = q.tr_mul(psi).component_mul(&self.phases(dt));
        q * coeffs
    }

    /// The full matrix `exp(-i h dt)`; symmetric because `h` is.
    pub fn unitary(&self, dt: f64) -> DMatrix<Complex64> {
        let q = self.eigenvectors.map(|x| Complex64::new(x, 0.0));
        &q * DMatrix::from_diagonal(&self.phases(dt)) * q.transpose()
    }
}

/// Output times (s), strictly increasing and non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::Contract("empty time grid".into()));
        }
        if times[0] < 0.0 || !times.iter().all(|t| t.is_finite()) {
            return Err(Error::Contract("time grid must be finite and non-negative".into()));
        }
        if !times.windows(2).all(|w| w[1] > w[0]) {
            return Err(Error::Contract("time grid must be strictly increasing".into()));
        }
        Ok(TimeGrid { times })
    }

    /// `0, dt, 2dt, ...` ending exactly at `t_total`.
    pub fn uniform(t_total: f64, dt: f64) -> Result<Self> {
        if !(t_total > 0.0) || !(dt > 0.0) {
            return Err(Error::Domain(format!("need t_total > 0 and dt > 0, got {t_total}, {dt}")));
        }
        let n = interval_count(t_total, dt);
        let mut times: Vec<f64> = (0..n).map(|i| i as f64 * dt).collect();
        times.push(t_total);
        Self::new(times)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn end(&self) -> f64 {
        *self.times.last().unwrap()
    }
}

/// Site-resolved time series; `populations[t][j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub times: Vec<f64>,
    pub populations: Vec<Vec<f64>>,
    /// Realisation average of `|<a_j>|^2`, when first moments are tracked.
    pub filtered: Option<Vec<Vec<f64>>>,
}

impl TimeSeries {
    pub fn n_sites(&self) -> usize {
        self.populations.first().map_or(0, Vec::len)
    }

    /// Population of one site (0-based) over time.
    pub fn site(&self, j: usize) -> Vec<f64> {
        self.populations.iter().map(|row| row[j]).collect()
    }

    pub fn filtered_site(&self, j: usize) -> Option<Vec<f64>> {
        self.filtered.as_ref().map(|f| f.iter().map(|row| row[j]).collect())
    }

    /// Sum over sites at each time.
    pub fn totals(&self) -> Vec<f64> {
        self.populations.iter().map(|row| row.iter().sum()).collect()
    }
}

/// Per-trajectory record kept by the ensemble driver.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub populations: Vec<Vec<f64>>,
    /// `<a_j>(t)` in the rotating frame (Gaussian engine only).
    pub moments: Option<Vec<Vec<Complex64>>>,
}

/// Walks the noise intervals, advancing `state` exactly and calling
/// `record` at every grid time.
pub(crate) fn drive<S: Clone>(
    h: &DMatrix<f64>,
    noise: impl IntoIterator<Item = ShiftSample>,
    grid: &TimeGrid,
    state0: S,
    mut advance: impl FnMut(&S, &IntervalPropagator, f64) -> Result<S>,
    mut record: impl FnMut(&S) -> Result<()>,
) -> Result<S> {
    let times = grid.times();
    let t_end = grid.end();
    let mut next = 0;
    let mut state = state0;
    let mut covered = 0.0_f64;

    for sample in noise {
        if covered >= t_end {
            break;
        }
        let t0 = sample.start;
        let t1 = sample.end.min(t_end);
        let eps = 1e-9 * (sample.end - sample.start).abs().max(f64::MIN_POSITIVE);
        if (t0 - covered).abs() > eps {
            return Err(Error::Contract(format!("noise interval starts at {t0} but evolution reached {covered}")));
        }
        let prop = IntervalPropagator::with_shifts(h, &sample.shifts)?;
        while next < times.len() && times[next] < t1 - eps {
            let dt = times[next] - t0;
            let snapshot = if dt > 0.0 { advance(&state, &prop, dt)? } else { state.clone() };
            record(&snapshot)?;
            next += 1;
        }
        state = advance(&state, &prop, t1 - t0)?;
        covered = t1;
    }

    let eps = 1e-9 * t_end.max(f64::MIN_POSITIVE);
    if covered < t_end - eps {
        return Err(Error::Contract(format!("noise realisation ends at {covered}, before the last output time {t_end}")));
    }
    while next < times.len() {
        record(&state)?;
        next += 1;
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn asymmetric_hamiltonian_rejected() {
        let h = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.5, 0.0]);
        assert!(matches!(IntervalPropagator::new(&h), Err(Error::Contract(_))));
        let h = DMatrix::from_row_slice(2, 3, &[0.0; 6]);
        assert!(IntervalPropagator::new(&h).is_err());
    }

    #[test]
    fn unitary_matches_apply() {
        let h = DMatrix::from_row_slice(3, 3, &[1.0, 0.3, 0.1, 0.3, -0.5, 0.2, 0.1, 0.2, 0.7]);
        let p = IntervalPropagator::new(&h).unwrap();
        let psi = DVector::from_vec(vec![Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8), Complex64::new(0.0, 0.0)]);
        let a = p.apply(&psi, 0.37);
        let b = p.unitary(0.37) * &psi;
        assert!((a - b).norm() < 1e-14);
        let u = p.unitary(0.37);
        assert!((&u - u.transpose()).norm() < 1e-14);
        let id = u.adjoint() * &u;
        assert!((id - DMatrix::<Complex64>::identity(3, 3)).norm() < 1e-14);
    }

    #[test]
    fn uniform_grid_ends_exactly() {
        let g = TimeGrid::uniform(10e-3, 20e-6).unwrap();
        assert_eq!(g.len(), 501);
        assert_eq!(g.end(), 10e-3);
        let g = TimeGrid::uniform(50e-6, 20e-6).unwrap();
        assert_eq!(g.times(), &[0.0, 20e-6, 40e-6, 50e-6]);
        assert!(TimeGrid::new(vec![0.0, 0.0]).is_err());
    }
}
