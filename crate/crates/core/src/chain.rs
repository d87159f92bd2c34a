//! Chain geometry, local transverse frequencies and Coulomb hopping.
//!
//! Positions follow from the axial force balance in units of the length
//! scale `l = (e^2 / (4 pi eps0 m0 wz^2))^(1/3)`. Transverse motion is
//! described in the weak-coupling (hopping) regime where the Hamiltonian is
//! `sum_j w_j a_j^dag a_j + sum_{j<k} c_jk (a_j^dag a_k + h.c.)`.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::constants::coulomb_constant_e2;
use crate::error::{Error, Result};

/// Relative transverse frequency change per metre of axial displacement used
/// when an angle trap is configured without an explicit gradient: 10% over
/// 250 um.
pub const DEFAULT_ANGLE_TRAP_GRADIENT: f64 = 0.10 / 250e-6;

/// Coupling-to-frequency ratio above which the hopping approximation is
/// flagged as questionable.
pub const WEAK_COUPLING_LIMIT: f64 = 0.1;

const NEWTON_TOLERANCE: f64 = 1e-12;
const NEWTON_MAX_ITER: usize = 200;

/// How the transverse trap frequency of each ion is obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum FrequencyProfile {
    /// One frequency per ion (rad/s). Interpreted as the bare trap frequency
    /// `w_x,j` unless the chain is flagged as already renormalized.
    Explicit(Vec<f64>),
    /// `w_x(z) = w_center * (1 + gradient * z)` with `gradient` in 1/m.
    AngleTrap { omega_x_center: f64, gradient: f64 },
    /// `w_x,j = (m0 / m_j) * w_x,0` for a pseudopotential trap.
    MultiIsotope { omega_x_reference: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainSpec {
    pub n_ions: usize,
    /// Reference axial trap frequency (rad/s) for `reference_mass`.
    pub omega_z: f64,
    pub profile: FrequencyProfile,
    /// Ion masses in kg, one per ion.
    pub masses: Vec<f64>,
    pub reference_mass: f64,
    /// Use the profile frequencies directly as the local frequencies `w_j`,
    /// skipping the Coulomb renormalization.
    pub frequencies_are_renormalized: bool,
}

impl ChainSpec {
    /// Equal-mass chain with explicit local frequencies.
    pub fn explicit(omega_z: f64, mass: f64, frequencies: Vec<f64>, renormalized: bool) -> Self {
        let n = frequencies.len();
        ChainSpec {
            n_ions: n,
            omega_z,
            profile: FrequencyProfile::Explicit(frequencies),
            masses: vec![mass; n],
            reference_mass: mass,
            frequencies_are_renormalized: renormalized,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_ions == 0 {
            return Err(Error::Model("a chain needs at least one ion".into()));
        }
        if !(self.omega_z > 0.0) {
            return Err(Error::Domain(format!("omega_z must be positive, got {}", self.omega_z)));
        }
        if self.masses.len() != self.n_ions {
            return Err(Error::Model(format!(
                "expected {} masses, got {}",
                self.n_ions,
                self.masses.len()
            )));
        }
        if let Some(m) = self.masses.iter().find(|m| !(**m > 0.0)) {
            return Err(Error::Domain(format!("ion masses must be positive, got {m}")));
        }
        if !(self.reference_mass > 0.0) {
            return Err(Error::Domain("reference mass must be positive".into()));
        }
        match &self.profile {
            FrequencyProfile::Explicit(f) => {
                if f.len() != self.n_ions {
                    return Err(Error::Model(format!(
                        "expected {} local frequencies, got {}",
                        self.n_ions,
                        f.len()
                    )));
                }
                if let Some(w) = f.iter().find(|w| !(**w > 0.0)) {
                    return Err(Error::Domain(format!("local frequencies must be positive, got {w}")));
                }
            }
            FrequencyProfile::AngleTrap { omega_x_center, gradient } => {
                if !(*omega_x_center > 0.0) || !gradient.is_finite() {
                    return Err(Error::Domain("angle-trap frequency must be positive".into()));
                }
            }
            FrequencyProfile::MultiIsotope { omega_x_reference } => {
                if !(*omega_x_reference > 0.0) {
                    return Err(Error::Domain("reference transverse frequency must be positive".into()));
                }
            }
        }
        Ok(())
    }
}

/// Length scale `l = (e^2 / (4 pi eps0 m wz^2))^(1/3)` in metres.
pub fn length_scale(mass: f64, omega_z: f64) -> Result<f64> {
    if !(mass > 0.0) || !(omega_z > 0.0) {
        return Err(Error::Domain(format!(
            "length scale needs positive mass and axial frequency (got m = {mass}, wz = {omega_z})"
        )));
    }
    Ok((coulomb_constant_e2() / (mass * omega_z * omega_z)).cbrt())
}

/// Dimensionless equilibrium positions of `n` ions, sorted ascending.
///
/// Minimises `1/2 sum u_j^2 + sum_{j<k} 1/|u_j - u_k|`, which is strictly
/// convex on the ordered cone, with a damped Newton iteration.
pub fn equilibrium_positions(n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::Domain("need at least one ion".into()));
    }
    if n == 1 {
        return Ok(vec![0.0]);
    }
    // Uniform start with roughly the central spacing of a long chain.
    let spacing = 2.018 / (n as f64).powf(0.559);
    let mut u: Vec<f64> = (0..n).map(|j| (j as f64 - (n as f64 - 1.0) / 2.0) * spacing).collect();

    let mut residual = f64::INFINITY;
    for _ in 0..NEWTON_MAX_ITER {
        let grad = energy_gradient(&u);
        residual = grad.iter().fold(0.0_f64, |m, g| m.max(g.abs()));
        if residual < NEWTON_TOLERANCE {
            return Ok(u);
        }
        let hess = energy_hessian(&u);
        let step = hess
            .cholesky()
            .ok_or_else(|| Error::Numerical("axial Hessian lost positive definiteness".into()))?
            .solve(&nalgebra::DVector::from_vec(grad.clone()));

        let e0 = axial_energy(&u);
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = u.iter().zip(step.iter()).map(|(x, s)| x - t * s).collect();
            let ordered = trial.windows(2).all(|w| w[1] > w[0]);
            if ordered && axial_energy(&trial) <= e0 + 1e-15 * e0.abs() {
                u = trial;
                break;
            }
            t *= 0.5;
            if t < 1e-12 {
                // Energy is flat to rounding; accept the full step if it keeps order.
                let trial: Vec<f64> = u.iter().zip(step.iter()).map(|(x, s)| x - s).collect();
                if trial.windows(2).all(|w| w[1] > w[0]) {
                    u = trial;
                }
                break;
            }
        }
    }
    Err(Error::Numerical(format!(
        "equilibrium positions for {n} ions did not converge (residual {residual:e})"
    )))
}

fn axial_energy(u: &[f64]) -> f64 {
    let mut e = 0.5 * u.iter().map(|x| x * x).sum::<f64>();
    for j in 0..u.len() {
        for k in j + 1..u.len() {
            e += 1.0 / (u[k] - u[j]).abs();
        }
    }
    e
}

/// Gradient of the axial energy, i.e. minus the net force on each ion.
pub(crate) fn energy_gradient(u: &[f64]) -> Vec<f64> {
    (0..u.len())
        .map(|j| {
            let coulomb: f64 = (0..u.len())
                .filter(|&k| k != j)
                .map(|k| {
                    let d = u[j] - u[k];
                    d.signum() / (d * d)
                })
                .sum();
            u[j] - coulomb
        })
        .collect()
}

fn energy_hessian(u: &[f64]) -> DMatrix<f64> {
    let n = u.len();
    let mut h = DMatrix::zeros(n, n);
    for j in 0..n {
        h[(j, j)] = 1.0;
        for k in 0..n {
            if k != j {
                let g = 2.0 / (u[j] - u[k]).abs().powi(3);
                h[(j, j)] += g;
                h[(j, k)] = -g;
            }
        }
    }
    h
}

/// A built chain. Immutable once constructed.
#[derive(Debug, Clone)]
pub struct ChainModel {
    /// Axial equilibrium positions `z_j` (m), ascending.
    pub positions: Vec<f64>,
    pub length_scale: f64,
    /// `d_jk = |z_j - z_k|` (m).
    pub distances: DMatrix<f64>,
    /// Bare transverse trap frequencies `w_x,j` (rad/s).
    pub trap_frequencies: Vec<f64>,
    /// Renormalized local frequencies `w_j` (rad/s).
    pub local_frequencies: Vec<f64>,
    /// Hopping constants `c_jk` (rad/s), zero diagonal.
    pub couplings: DMatrix<f64>,
    /// `h_jj = w_j`, `h_jk = c_jk` (rad/s).
    pub hopping: DMatrix<f64>,
    pub masses: Vec<f64>,
    pub reference_mass: f64,
    pub omega_z: f64,
}

/// Builds positions, local frequencies, couplings and the hopping matrix.
pub fn build_model(spec: &ChainSpec) -> Result<ChainModel> {
    spec.validate()?;
    let n = spec.n_ions;
    let m0 = spec.reference_mass;
    let wz = spec.omega_z;
    let l = length_scale(m0, wz)?;
    let positions: Vec<f64> = equilibrium_positions(n)?.into_iter().map(|u| u * l).collect();

    let distances = DMatrix::from_fn(n, n, |j, k| (positions[j] - positions[k]).abs());
    // (l / d_jk)^3 with a zero diagonal.
    let inv_cube = DMatrix::from_fn(n, n, |j, k| if j == k { 0.0 } else { (l / distances[(j, k)]).powi(3) });

    let trap_frequencies: Vec<f64> = match &spec.profile {
        FrequencyProfile::Explicit(f) => f.clone(),
        FrequencyProfile::AngleTrap { omega_x_center, gradient } => {
            positions.iter().map(|z| omega_x_center * (1.0 + gradient * z)).collect()
        }
        FrequencyProfile::MultiIsotope { omega_x_reference } => {
            spec.masses.iter().map(|m| m0 / m * omega_x_reference).collect()
        }
    };

    let local_frequencies = if spec.frequencies_are_renormalized {
        trap_frequencies.clone()
    } else {
        let mut out = Vec::with_capacity(n);
        for j in 0..n {
            let shift: f64 = inv_cube.row(j).sum();
            let w2 = trap_frequencies[j].powi(2) - wz * wz * (m0 / spec.masses[j]) * shift;
            if !(w2 > 0.0) {
                return Err(Error::Model(format!(
                    "ion {}: renormalized transverse frequency squared is {w2:e} (rad/s)^2; \
                     the linear chain is unstable",
                    j + 1
                )));
            }
            out.push(w2.sqrt());
        }
        out
    };
    if let Some(j) = local_frequencies.iter().position(|w| !(*w > 0.0)) {
        return Err(Error::Model(format!("ion {}: local frequency must be positive", j + 1)));
    }

    let w = &local_frequencies;
    let masses = &spec.masses;
    let couplings = DMatrix::from_fn(n, n, |j, k| {
        if j == k {
            0.0
        } else {
            0.5 * wz * wz / (w[j] * w[k]).sqrt() * m0 / (masses[j] * masses[k]).sqrt() * inv_cube[(j, k)]
        }
    });
    let mut hopping = couplings.clone();
    for j in 0..n {
        hopping[(j, j)] = w[j];
    }

    let model = ChainModel {
        positions,
        length_scale: l,
        distances,
        trap_frequencies,
        local_frequencies,
        couplings,
        hopping,
        masses: spec.masses.clone(),
        reference_mass: m0,
        omega_z: wz,
    };
    let ratio = model.coupling_ratio();
    if ratio > WEAK_COUPLING_LIMIT {
        log::warn!(
            "max |c_jk| / min w_j = {ratio:.3} exceeds {WEAK_COUPLING_LIMIT}; \
             the hopping approximation may be inaccurate"
        );
    }
    Ok(model)
}

impl ChainModel {
    pub fn n_ions(&self) -> usize {
        self.positions.len()
    }

    /// `max |c_jk| / min w_j`.
    pub fn coupling_ratio(&self) -> f64 {
        let cmax = self.couplings.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
        let wmin = self.local_frequencies.iter().cloned().fold(f64::INFINITY, f64::min);
        cmax / wmin
    }

    pub fn is_weak_coupling(&self) -> bool {
        self.coupling_ratio() <= WEAK_COUPLING_LIMIT
    }

    /// Mean nearest-neighbour spacing (m); zero for a single ion.
    pub fn mean_spacing(&self) -> f64 {
        let n = self.n_ions();
        if n < 2 {
            return 0.0;
        }
        (self.positions[n - 1] - self.positions[0]) / (n - 1) as f64
    }

    /// Mean local frequency, used as the rotating-frame reference.
    pub fn reference_frequency(&self) -> f64 {
        self.local_frequencies.iter().sum::<f64>() / self.n_ions() as f64
    }

    /// Hopping matrix in the frame rotating at [`Self::reference_frequency`].
    ///
    /// Populations are frame independent; first moments acquire the phase
    /// `exp(i w_ref t)` relative to the laboratory frame.
    pub fn rotating_hopping(&self) -> DMatrix<f64> {
        let mut h = self.hopping.clone();
        let w_ref = self.reference_frequency();
        for j in 0..self.n_ions() {
            h[(j, j)] -= w_ref;
        }
        h
    }

    /// `max_{nn} |c_jk| / min_{nn} |w_j - w_k|` over nearest neighbours.
    /// Values well below one indicate localized modes.
    pub fn localization_ratio(&self) -> f64 {
        let n = self.n_ions();
        if n < 2 {
            return 0.0;
        }
        let cmax = (0..n - 1).map(|j| self.couplings[(j, j + 1)].abs()).fold(0.0, f64::max);
        let gap = (0..n - 1)
            .map(|j| (self.local_frequencies[j] - self.local_frequencies[j + 1]).abs())
            .fold(f64::INFINITY, f64::min);
        cmax / gap
    }

    /// Largest weight any hopping eigenvector places outside its dominant
    /// site.
    pub fn localization_diagnostic(&self) -> f64 {
        self.eigenvector_weights()
            .iter()
            .map(|w| 1.0 - w.iter().cloned().fold(0.0, f64::max))
            .fold(0.0, f64::max)
    }

    /// Largest weight any hopping eigenvector places on sites that are not
    /// nearest neighbours of its dominant site.
    pub fn long_range_participation(&self) -> f64 {
        self.eigenvector_weights()
            .iter()
            .map(|w| {
                let (dom, _) = w
                    .iter()
                    .enumerate()
                    .fold((0, f64::MIN), |best, (j, &x)| if x > best.1 { (j, x) } else { best });
                w.iter()
                    .enumerate()
                    .filter(|(j, _)| j.abs_diff(dom) > 1)
                    .map(|(_, x)| x)
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    /// Squared eigenvector components of the hopping matrix, one row per
    /// normal mode.
    pub fn eigenvector_weights(&self) -> Vec<Vec<f64>> {
        let eig = SymmetricEigen::new(self.rotating_hopping());
        (0..self.n_ions())
            .map(|m| eig.eigenvectors.column(m).iter().map(|v| v * v).collect())
            .collect()
    }

    /// Normal-mode frequencies (rad/s), ascending.
    pub fn mode_frequencies(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.hopping.clone()).eigenvalues.iter().cloned().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }
}
