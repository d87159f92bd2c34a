//! Truncated Fock-space master-equation integrator.
//!
//! Reference solution for the Gaussian engine on chains of up to three ions:
//!
//! `drho/dt = -i[H, rho] + sum_j 2 kappa (nbar+1) D[a_j] rho + 2 kappa nbar D[a_j^dag] rho`
//!
//! with `H = sum_pq h_pq a_p^dag a_q` in the same rotating frame as the
//! engines and `D[L] rho = L rho L^dag - {L^dag L, rho}/2`. The density matrix
//! is stored densely; the Hamiltonian and jump operators are applied through
//! their sparse action on the product basis. Time stepping is adaptive
//! Dormand-Prince 5(4).

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::chain::ChainModel;
use crate::error::{Error, Result};
use crate::noise::ShiftSample;
use crate::propagators::{BathSpec, TimeGrid};

/// Largest Hilbert-space dimension accepted by the oracle.
pub const MAX_DIMENSION: usize = 4096;

/// Population allowed in the top Fock level of any site before the
/// integration is aborted.
pub const LEAK_LIMIT: f64 = 1e-6;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Product basis `|n_1, ..., n_N>` with `0 <= n_j <= cutoff`; site 0 is the
/// most significant digit.
#[derive(Debug, Clone, PartialEq)]
pub struct FockSpace {
    sites: usize,
    cutoff: usize,
    dim: usize,
    levels: Vec<u16>,
}

impl FockSpace {
    pub fn new(sites: usize, cutoff: usize) -> Result<Self> {
        if sites == 0 || cutoff == 0 {
            return Err(Error::Contract("Fock space needs at least one site and cutoff >= 1".into()));
        }
        let dim = (cutoff + 1).checked_pow(sites as u32).filter(|d| *d <= MAX_DIMENSION).ok_or_else(|| {
            Error::Contract(format!("(cutoff + 1)^sites exceeds {MAX_DIMENSION} for cutoff {cutoff}, {sites} sites"))
        })?;
        let mut levels = vec![0u16; dim * sites];
        for idx in 0..dim {
            let mut rest = idx;
            for j in (0..sites).rev() {
                levels[idx * sites + j] = (rest % (cutoff + 1)) as u16;
                rest /= cutoff + 1;
            }
        }
        Ok(FockSpace { sites, cutoff, dim, levels })
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn level(&self, idx: usize, site: usize) -> usize {
        self.levels[idx * self.sites + site] as usize
    }

    fn stride(&self, site: usize) -> usize {
        (self.cutoff + 1).pow((self.sites - 1 - site) as u32)
    }

    /// `(target, amplitude)` pairs of `a_j` acting on each basis state.
    fn lowering(&self, site: usize) -> Vec<(usize, usize, f64)> {
        let s = self.stride(site);
        (0..self.dim)
            .filter_map(|c| {
                let n = self.level(c, site);
                (n > 0).then(|| (c, c - s, (n as f64).sqrt()))
            })
            .collect()
    }

    /// `(source, target, amplitude)` of the truncated `a_j^dag`.
    fn raising(&self, site: usize) -> Vec<(usize, usize, f64)> {
        let s = self.stride(site);
        (0..self.dim)
            .filter_map(|c| {
                let n = self.level(c, site);
                (n < self.cutoff).then(|| (c, c + s, (n as f64 + 1.0).sqrt()))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FockDensityMatrix {
    space: FockSpace,
    /// Row-major `dim x dim`.
    rho: Vec<Complex64>,
}

impl FockDensityMatrix {
    pub fn vacuum(space: FockSpace) -> Self {
        let mut rho = vec![ZERO; space.dim * space.dim];
        rho[0] = Complex64::new(1.0, 0.0);
        FockDensityMatrix { space, rho }
    }

    /// `|psi><psi|` for a normalized state vector.
    pub fn pure(space: FockSpace, psi: &[Complex64]) -> Result<Self> {
        if psi.len() != space.dim {
            return Err(Error::Contract("state vector has the wrong dimension".into()));
        }
        let d = space.dim;
        let mut rho = vec![ZERO; d * d];
        for a in 0..d {
            for b in 0..d {
                rho[a * d + b] = psi[a] * psi[b].conj();
            }
        }
        Ok(FockDensityMatrix { space, rho })
    }

    /// Product of truncated coherent states, renormalized.
    pub fn coherent(space: FockSpace, alphas: &[Complex64]) -> Result<Self> {
        if alphas.len() != space.sites {
            return Err(Error::Contract("one coherent amplitude per site required".into()));
        }
        let per_site: Vec<Vec<Complex64>> = alphas
            .iter()
            .map(|&alpha| {
                let mut amp = Vec::with_capacity(space.cutoff + 1);
                let mut term = Complex64::new((-alpha.norm_sqr() / 2.0).exp(), 0.0);
                for k in 0..=space.cutoff {
                    if k > 0 {
                        term = term * alpha / (k as f64).sqrt();
                    }
                    amp.push(term);
                }
                amp
            })
            .collect();
        let mut psi: Vec<Complex64> = (0..space.dim)
            .map(|idx| (0..space.sites).map(|j| per_site[j][space.level(idx, j)]).product())
            .collect();
        let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        psi.iter_mut().for_each(|z| *z /= norm);
        Self::pure(space, &psi)
    }

    /// One phonon on `site`, all others empty.
    pub fn single_excitation(space: FockSpace, site: usize) -> Result<Self> {
        if site >= space.sites {
            return Err(Error::Contract(format!("site {} out of range", site + 1)));
        }
        let idx = space.stride(site);
        let d = space.dim;
        let mut rho = vec![ZERO; d * d];
        rho[idx * d + idx] = Complex64::new(1.0, 0.0);
        Ok(FockDensityMatrix { space, rho })
    }

    pub fn space(&self) -> &FockSpace {
        &self.space
    }

    pub fn element(&self, a: usize, b: usize) -> Complex64 {
        self.rho[a * self.space.dim + b]
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.space.dim).map(|a| self.element(a, a)).sum()
    }

    /// `max |rho_ab - rho_ba^*|`
    pub fn hermiticity_error(&self) -> f64 {
        let d = self.space.dim;
        let mut worst = 0.0_f64;
        for a in 0..d {
            for b in a..d {
                worst = worst.max((self.element(a, b) - self.element(b, a).conj()).norm());
            }
        }
        worst
    }

    /// `<a_j^dag a_j>`
    pub fn occupation(&self, site: usize) -> f64 {
        (0..self.space.dim).map(|a| self.space.level(a, site) as f64 * self.element(a, a).re).sum()
    }

    /// `<a_j> = Tr(rho a_j)`
    pub fn first_moment(&self, site: usize) -> Complex64 {
        self.space.lowering(site).into_iter().map(|(c, down, amp)| self.element(c, down) * amp).sum()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let d = self.space.dim;
        let m = DMatrix::from_fn(d, d, |a, b| 0.5 * (self.element(a, b) + self.element(b, a).conj()));
        SymmetricEigen::new(m).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Total population of basis states in which at least one site sits in its
/// top Fock level.
pub fn truncation_leak(rho: &FockDensityMatrix) -> f64 {
    let space = &rho.space;
    (0..space.dim)
        .filter(|&a| (0..space.sites).any(|j| space.level(a, j) == space.cutoff))
        .map(|a| rho.element(a, a).re)
        .sum()
}

/// Sparse generator of the master equation for one dwell interval.
/// Sparse operator entries `(from, to, weight)`.
type Entries = Vec<(usize, usize, f64)>;

struct Liouvillian {
    dim: usize,
    hamiltonian: Entries,
    /// Lowering or raising entries and their rate, one per `L rho L^dag` term.
    jumps: Vec<(Entries, f64)>,
    /// `(gamma_down sum_j n_j + gamma_up sum_j <a_j a_j^dag>) / 2` per basis state.
    decay: Vec<f64>,
    scratch: Vec<Complex64>,
}

impl Liouvillian {
    fn new(space: &FockSpace, h: &DMatrix<f64>, bath: &BathSpec) -> Self {
        let n = space.sites;
        let mut hamiltonian = Vec::new();
        for a in 0..space.dim {
            let diag: f64 = (0..n).map(|p| h[(p, p)] * space.level(a, p) as f64).sum();
            if diag != 0.0 {
                hamiltonian.push((a, a, diag));
            }
        }
        for q in 0..n {
            let lower = space.lowering(q);
            for p in (0..n).filter(|&p| p != q && h[(p, q)] != 0.0) {
                let s = space.stride(p);
                for &(c, down, amp_q) in &lower {
                    let np = space.level(down, p);
                    if np < space.cutoff {
                        // <target| a_p^dag a_q |c>
                        let amp = amp_q * (np as f64 + 1.0).sqrt();
                        hamiltonian.push((down + s, c, h[(p, q)] * amp));
                    }
                }
            }
        }

        let gamma_down = 2.0 * bath.kappa * (bath.nbar + 1.0);
        let gamma_up = 2.0 * bath.kappa * bath.nbar;
        let mut jumps = Vec::new();
        let mut decay = vec![0.0; space.dim];
        for j in 0..n {
            if gamma_down > 0.0 {
                jumps.push((space.lowering(j), gamma_down));
            }
            if gamma_up > 0.0 {
                jumps.push((space.raising(j), gamma_up));
            }
            for (a, d) in decay.iter_mut().enumerate() {
                let level = space.level(a, j);
                let up = if level < space.cutoff { level as f64 + 1.0 } else { 0.0 };
                *d += 0.5 * (gamma_down * level as f64 + gamma_up * up);
            }
        }
        Liouvillian { dim: space.dim, hamiltonian, jumps, decay, scratch: vec![ZERO; space.dim * space.dim] }
    }

    fn apply(&mut self, rho: &[Complex64], out: &mut [Complex64]) {
        let d = self.dim;
        let x = &mut self.scratch;
        x.fill(ZERO);
        for &(r, c, v) in &self.hamiltonian {
            let src = &rho[c * d..(c + 1) * d];
            let dst = &mut x[r * d..(r + 1) * d];
            for (o, s) in dst.iter_mut().zip(src) {
                *o += s * v;
            }
        }
        // -i [H, rho] = -i (X - X^dag) with X = H rho.
        let minus_i = Complex64::new(0.0, -1.0);
        for a in 0..d {
            for b in 0..d {
                let comm = x[a * d + b] - x[b * d + a].conj();
                out[a * d + b] = minus_i * comm - rho[a * d + b] * (self.decay[a] + self.decay[b]);
            }
        }
        for (ops, rate) in &self.jumps {
            for &(c, tc, ac) in ops {
                let row = &rho[c * d..(c + 1) * d];
                let w = rate * ac;
                for &(dd, td, ad) in ops {
                    out[tc * d + td] += row[dd] * (w * ad);
                }
            }
        }
    }
}

/// Adaptive Dormand-Prince 5(4) stepper for an autonomous linear system.
struct DormandPrince {
    rtol: f64,
    atol: f64,
    step: f64,
    k: [Vec<Complex64>; 7],
    stage: Vec<Complex64>,
    y_new: Vec<Complex64>,
    fsal_valid: bool,
    steps: usize,
}

const C_A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const C_E: [f64; 7] =
    [71.0 / 57600.0, 0.0, -71.0 / 16695.0, 71.0 / 1920.0, -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0];

impl DormandPrince {
    fn new(len: usize, rtol: f64, atol: f64, initial_step: f64) -> Self {
        DormandPrince {
            rtol,
            atol,
            step: initial_step,
            k: std::array::from_fn(|_| vec![ZERO; len]),
            stage: vec![ZERO; len],
            y_new: vec![ZERO; len],
            fsal_valid: false,
            steps: 0,
        }
    }

    /// Integrates `y' = L y` over `span`; call [`Self::reset`] when `L` changes.
    fn integrate(&mut self, l: &mut Liouvillian, y: &mut [Complex64], span: f64) -> Result<()> {
        let mut done = 0.0;
        let mut rejects = 0usize;
        while done < span {
            let h = self.step.min(span - done);
            let last = h >= span - done;
            if !self.fsal_valid {
                l.apply(y, &mut self.k[0]);
                self.fsal_valid = true;
            }
            for s in 0..6 {
                for i in 0..y.len() {
                    let mut acc = ZERO;
                    for (m, a) in C_A[s].iter().enumerate().take(s + 1) {
                        if *a != 0.0 {
                            acc += self.k[m][i] * *a;
                        }
                    }
                    self.stage[i] = y[i] + acc * h;
                }
                let (head, tail) = self.k.split_at_mut(s + 1);
                let _ = head;
                l.apply(&self.stage, &mut tail[0]);
                if s == 5 {
                    self.y_new.copy_from_slice(&self.stage);
                }
            }
            let mut err_sq = 0.0;
            for i in 0..y.len() {
                let mut e = ZERO;
                for (m, c) in C_E.iter().enumerate() {
                    if *c != 0.0 {
                        e += self.k[m][i] * *c;
                    }
                }
                let scale = self.atol + self.rtol * y[i].norm().max(self.y_new[i].norm());
                err_sq += (e.norm() * h / scale).powi(2);
            }
            let err = (err_sq / y.len() as f64).sqrt();
            if !err.is_finite() {
                return Err(Error::Numerical("master-equation integration produced non-finite values".into()));
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if err <= 1.0 {
                y.copy_from_slice(&self.y_new);
                self.k.swap(0, 6);
                done = if last { span } else { done + h };
                self.steps += 1;
                rejects = 0;
                if !last || factor < 1.0 {
                    self.step = h * factor;
                }
            } else {
                self.step = h * factor.min(1.0);
                rejects += 1;
                if rejects > 50 || self.step < 1e-18 {
                    return Err(Error::Numerical("master-equation step size underflow".into()));
                }
            }
        }
        Ok(())
    }

    fn reset(&mut self) {
        self.fsal_valid = false;
    }
}

/// Tolerances for [`evolve_master`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions {
    pub rtol: f64,
    pub atol: f64,
    pub leak_limit: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions { rtol: 1e-9, atol: 1e-12, leak_limit: LEAK_LIMIT }
    }
}

/// Observables recorded by the oracle; indices `[t][j]`.
#[derive(Debug, Clone)]
pub struct OracleSeries {
    pub times: Vec<f64>,
    pub occupations: Vec<Vec<f64>>,
    pub moments: Vec<Vec<Complex64>>,
    pub max_trace_error: f64,
    pub max_hermiticity_error: f64,
    pub max_leak: f64,
    pub steps: usize,
    pub final_state: FockDensityMatrix,
}

/// Integrates the master equation along a recorded noise realisation.
pub fn evolve_master(
    model: &ChainModel,
    noise: &[ShiftSample],
    bath: &BathSpec,
    rho0: &FockDensityMatrix,
    grid: &TimeGrid,
) -> Result<OracleSeries> {
    evolve_master_with(model, noise, bath, rho0, grid, OracleOptions::default())
}

pub fn evolve_master_with(
    model: &ChainModel,
    noise: &[ShiftSample],
    bath: &BathSpec,
    rho0: &FockDensityMatrix,
    grid: &TimeGrid,
    options: OracleOptions,
) -> Result<OracleSeries> {
    bath.validate()?;
    let space = rho0.space.clone();
    if space.sites != model.n_ions() {
        return Err(Error::Contract(format!("density matrix has {} sites, chain has {}", space.sites, model.n_ions())));
    }
    let h0 = model.rotating_hopping();
    let times = grid.times();
    let t_end = grid.end();
    let mut rho = rho0.rho.clone();
    let mut series = OracleSeries {
        times: times.to_vec(),
        occupations: Vec::with_capacity(times.len()),
        moments: Vec::with_capacity(times.len()),
        max_trace_error: 0.0,
        max_hermiticity_error: 0.0,
        max_leak: 0.0,
        steps: 0,
        final_state: rho0.clone(),
    };
    let mut stepper = DormandPrince::new(rho.len(), options.rtol, options.atol, 1e-7);

    let record = |rho: &Vec<Complex64>, series: &mut OracleSeries| -> Result<()> {
        let state = FockDensityMatrix { space: space.clone(), rho: rho.clone() };
        let leak = truncation_leak(&state);
        if leak > options.leak_limit {
            return Err(Error::Numerical(format!(
                "truncation leak {leak:e} exceeds {:e}; raise the Fock cutoff",
                options.leak_limit
            )));
        }
        series.max_leak = series.max_leak.max(leak);
        series.max_trace_error = series.max_trace_error.max((state.trace() - 1.0).norm());
        series.max_hermiticity_error = series.max_hermiticity_error.max(state.hermiticity_error());
        series.occupations.push((0..space.sites).map(|j| state.occupation(j)).collect());
        series.moments.push((0..space.sites).map(|j| state.first_moment(j)).collect());
        Ok(())
    };

    let mut next = 0;
    let mut now = 0.0_f64;
    for sample in noise {
        if now >= t_end {
            break;
        }
        let eps = 1e-9 * sample.duration().abs().max(f64::MIN_POSITIVE);
        if (sample.start - now).abs() > eps {
            return Err(Error::Contract(format!("noise interval starts at {} but evolution reached {now}", sample.start)));
        }
        if sample.shifts.len() != space.sites {
            return Err(Error::Contract("shift pattern does not match the chain".into()));
        }
        let mut h = h0.clone();
        for (j, s) in sample.shifts.iter().enumerate() {
            h[(j, j)] += s;
        }
        let mut liouvillian = Liouvillian::new(&space, &h, bath);
        stepper.reset();
        let t1 = sample.end.min(t_end);
        while next < times.len() && times[next] < t1 - eps {
            if times[next] > now {
                stepper.integrate(&mut liouvillian, &mut rho, times[next] - now)?;
                now = times[next];
            }
            record(&rho, &mut series)?;
            next += 1;
        }
        if t1 > now {
            stepper.integrate(&mut liouvillian, &mut rho, t1 - now)?;
        }
        now = t1;
    }
    if now < t_end - 1e-9 * t_end {
        return Err(Error::Contract(format!("noise realisation ends at {now}, before {t_end}")));
    }
    while next < times.len() {
        record(&rho, &mut series)?;
        next += 1;
    }
    series.steps = stepper.steps;
    series.final_state = FockDensityMatrix { space, rho };
    Ok(series)
}
