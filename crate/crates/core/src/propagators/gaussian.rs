use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use super::{drive, IntervalPropagator, TimeGrid, TimeSeries, Trajectory};
use crate::chain::ChainModel;
use crate::error::{Error, Result};
use crate::noise::ShiftSample;

/// Thermal reservoir acting independently on every site: damping at rate
/// `2 kappa (nbar + 1)` and heating at `2 kappa nbar`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BathSpec {
    /// `kappa` (1/s)
    pub kappa: f64,
    pub nbar: f64,
    /// Thermal occupation of every site at `t = 0`.
    pub init_occupation: f64,
}

impl BathSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("kappa", self.kappa), ("nbar", self.nbar), ("init_occupation", self.init_occupation)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Domain(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Initial heating rate `2 kappa nbar` (phonons per second per site).
    pub fn heating_rate(&self) -> f64 {
        2.0 * self.kappa * self.nbar
    }
}

/// Number-conserving Gaussian state: first moments `mu_j = <a_j>` and
/// central second moments `V_jk = <a_j^dag a_k> - mu_j^* mu_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    pub mu: DVector<Complex64>,
    pub v: DMatrix<Complex64>,
}

impl GaussianState {
    pub fn vacuum(n: usize) -> Self {
        GaussianState { mu: DVector::zeros(n), v: DMatrix::zeros(n, n) }
    }

    pub fn thermal(n: usize, occupation: f64) -> Self {
        GaussianState {
            mu: DVector::zeros(n),
            v: DMatrix::from_diagonal_element(n, n, Complex64::new(occupation, 0.0)),
        }
    }

    /// Coherent amplitude `alpha` on `site` (0-based) on top of this state.
    pub fn with_coherent(mut self, site: usize, alpha: Complex64) -> Result<Self> {
        if site >= self.n_sites() {
            return Err(Error::Contract(format!("site {} out of range", site + 1)));
        }
        self.mu[site] += alpha;
        Ok(self)
    }

    pub fn n_sites(&self) -> usize {
        self.mu.len()
    }

    /// `n_j = V_jj + |mu_j|^2`
    pub fn occupation(&self, j: usize) -> f64 {
        self.v[(j, j)].re + self.mu[j].norm_sqr()
    }

    pub fn occupations(&self) -> Vec<f64> {
        (0..self.n_sites()).map(|j| self.occupation(j)).collect()
    }

    pub fn total_occupation(&self) -> f64 {
        self.occupations().iter().sum()
    }

    /// Smallest eigenvalue of `V`.
    pub fn min_eigenvalue(&self) -> f64 {
        let herm = (&self.v + self.v.adjoint()).scale(0.5);
        SymmetricEigen::new(herm).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Checks Hermiticity and positive semidefiniteness of `V`.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_sites();
        if self.v.nrows() != n || self.v.ncols() != n {
            return Err(Error::Contract("moment dimensions disagree".into()));
        }
        let scale = self.v.iter().fold(1.0_f64, |m, x| m.max(x.norm()));
        let asym = (&self.v - self.v.adjoint()).iter().fold(0.0_f64, |m, x| m.max(x.norm()));
        if asym > 1e-10 * scale {
            return Err(Error::Numerical(format!("second moments are not Hermitian (deviation {asym:e})")));
        }
        let lowest = self.min_eigenvalue();
        if lowest < -1e-10 * scale {
            return Err(Error::Numerical(format!("second moments are not positive semidefinite (eigenvalue {lowest:e})")));
        }
        Ok(())
    }

    /// Exact update over one interval with constant Hamiltonian:
    /// `mu -> e^{-kappa dt} U mu` and
    /// `V -> e^{-2 kappa dt} U^dag V U + nbar (1 - e^{-2 kappa dt}) I`.
    pub(crate) fn advance(&self, prop: &IntervalPropagator, bath: &BathSpec, dt: f64) -> Self {
        let u = prop.unitary(dt);
        let damp = (-bath.kappa * dt).exp();
        let heat = -(-2.0 * bath.kappa * dt).exp_m1();
        let mu = (&u * &self.mu).scale(damp);
        let mut v = (u.adjoint() * &self.v * &u).scale(damp * damp);
        if bath.nbar > 0.0 && heat > 0.0 {
            let add = Complex64::new(bath.nbar * heat, 0.0);
            for j in 0..v.nrows() {
                v[(j, j)] += add;
            }
        }
        GaussianState { mu, v }
    }
}

/// Gaussian-state evolution through one noise realisation. Populations are
/// the total occupations `n_j`; `<a_j>` is recorded for filtering.
pub fn run_gaussian_trajectory(
    model: &ChainModel,
    noise: impl IntoIterator<Item = ShiftSample>,
    bath: &BathSpec,
    state0: &GaussianState,
    grid: &TimeGrid,
) -> Result<(TimeSeries, Vec<Vec<Complex64>>)> {
    let traj = gaussian_trajectory(model, noise, bath, state0, grid)?;
    let moments = traj.moments.unwrap_or_default();
    let series = TimeSeries { times: grid.times().to_vec(), populations: traj.populations, filtered: None };
    Ok((series, moments))
}

pub(super) fn gaussian_trajectory(
    model: &ChainModel,
    noise: impl IntoIterator<Item = ShiftSample>,
    bath: &BathSpec,
    state0: &GaussianState,
    grid: &TimeGrid,
) -> Result<Trajectory> {
    bath.validate()?;
    state0.validate()?;
    if state0.n_sites() != model.n_ions() {
        return Err(Error::Contract(format!(
            "initial state has {} sites, chain has {}",
            state0.n_sites(),
            model.n_ions()
        )));
    }
    let h = model.rotating_hopping();
    let mut populations = Vec::with_capacity(grid.len());
    let mut moments = Vec::with_capacity(grid.len());
    let last = drive(
        &h,
        noise,
        grid,
        state0.clone(),
        |s, prop, dt| Ok(s.advance(prop, bath, dt)),
        |s| {
            populations.push(s.occupations());
            moments.push(s.mu.iter().cloned().collect());
            Ok(())
        },
    )?;
    last.validate()?;
    Ok(Trajectory { populations, moments: Some(moments) })
}
