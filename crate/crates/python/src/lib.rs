//! Python bindings: chain models, preset runs, the Raman-drive formulas,
//! moment reconstruction and relaxation fits.

use std::path::PathBuf;

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use iontransport_core::analysis::fit_relaxation as core_fit;
use iontransport_core::chain::{build_model, ChainModel, ChainSpec};
use iontransport_core::config::{preset, RunConfig, PRESETS};
use iontransport_core::constants::{isotope_mass_kg, khz};
use iontransport_core::error::Error;
use iontransport_core::laser::{self, LaserParams, DEFAULT_GAMMA, DEFAULT_MARGIN};
use iontransport_core::noise::NoiseKind;
use iontransport_core::propagators::ensemble_run;
use iontransport_core::readout;
use iontransport_core::runner::{run_experiment, Command, RunOptions};
use iontransport_core::validation::{compare_with_oracle, standard_cases};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Domain(_) | Error::Contract(_) | Error::Config(_) | Error::Model(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn matrix_rows(n: usize, entry: impl Fn(usize, usize) -> f64) -> Vec<Vec<f64>> {
    (0..n).map(|j| (0..n).map(|k| entry(j, k)).collect()).collect()
}

/// A built ion chain. Frequencies are in rad/s, lengths in metres.
#[pyclass(name = "Chain", frozen, module = "iontransport")]
struct PyChain {
    inner: ChainModel,
}

#[pymethods]
impl PyChain {
    /// Chain with explicit local transverse frequencies (kHz).
    #[new]
    #[pyo3(signature = (local_frequencies_khz, omega_z_khz = 40.0, isotope = "40Ca", renormalized = true))]
    fn new(local_frequencies_khz: Vec<f64>, omega_z_khz: f64, isotope: &str, renormalized: bool) -> PyResult<Self> {
        let mass = isotope_mass_kg(isotope).ok_or_else(|| PyValueError::new_err(format!("unknown isotope {isotope:?}")))?;
        let freqs = local_frequencies_khz.iter().map(|f| khz(*f)).collect();
        let inner = build_model(&ChainSpec::explicit(khz(omega_z_khz), mass, freqs, renormalized)).map_err(to_py)?;
        Ok(PyChain { inner })
    }

    /// Chain of a shipped preset.
    #[staticmethod]
    fn from_preset(name: &str) -> PyResult<Self> {
        let config = preset(name).map_err(to_py)?;
        let inner = build_model(config.require_chain().map_err(to_py)?).map_err(to_py)?;
        Ok(PyChain { inner })
    }

    #[getter]
    fn n_ions(&self) -> usize {
        self.inner.n_ions()
    }

    #[getter]
    fn positions(&self) -> Vec<f64> {
        self.inner.positions.clone()
    }

    #[getter]
    fn local_frequencies(&self) -> Vec<f64> {
        self.inner.local_frequencies.clone()
    }

    #[getter]
    fn couplings(&self) -> Vec<Vec<f64>> {
        matrix_rows(self.inner.n_ions(), |j, k| self.inner.couplings[(j, k)])
    }

    #[getter]
    fn hopping(&self) -> Vec<Vec<f64>> {
        matrix_rows(self.inner.n_ions(), |j, k| self.inner.hopping[(j, k)])
    }

    fn mean_spacing(&self) -> f64 {
        self.inner.mean_spacing()
    }

    fn mode_frequencies(&self) -> Vec<f64> {
        self.inner.mode_frequencies()
    }

    fn localization_diagnostic(&self) -> f64 {
        self.inner.localization_diagnostic()
    }

    fn long_range_participation(&self) -> f64 {
        self.inner.long_range_participation()
    }

    fn __repr__(&self) -> String {
        let f: Vec<String> = self.inner.local_frequencies.iter().map(|w| format!("{:.3}", w / khz(1.0))).collect();
        format!("Chain(local_frequencies_khz=[{}])", f.join(", "))
    }
}

/// Names of the shipped presets.
#[pyfunction]
fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

/// Runs a preset's ensemble in memory. Returns `times` (s), `populations`
/// (`[t][j]`) and, for the Gaussian engine, `filtered`.
#[pyfunction]
#[pyo3(signature = (name, seed = None, trajectories = None))]
fn evolve_preset<'py>(
    py: Python<'py>,
    name: &str,
    seed: Option<u64>,
    trajectories: Option<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    let mut config = preset(name).map_err(to_py)?;
    if let Some(s) = seed {
        config.set_seed(s);
    }
    let model = build_model(config.require_chain().map_err(to_py)?).map_err(to_py)?;
    let mut setup = config.ensemble_setup().map_err(to_py)?;
    if let Some(n) = trajectories {
        setup.trajectories = n;
    }
    let result = py.detach(|| ensemble_run(&model, &setup)).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("times", result.mean.times)?;
    d.set_item("populations", result.mean.populations)?;
    d.set_item("filtered", result.mean.filtered)?;
    Ok(d)
}

/// Runs a CLI subcommand (`chain`, `evolve`, `rates`, `laser`, `validate`)
/// on a preset or configuration file and writes its outputs to `out_dir`.
#[pyfunction]
#[pyo3(signature = (command, out_dir, preset_name = None, config = None, seed = None, threads = None))]
fn run<'py>(
    py: Python<'py>,
    command: &str,
    out_dir: PathBuf,
    preset_name: Option<&str>,
    config: Option<PathBuf>,
    seed: Option<u64>,
    threads: Option<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    let (mut cfg, source): (RunConfig, String) = match (preset_name, &config) {
        (Some(n), None) => (preset(n).map_err(to_py)?, n.to_string()),
        (None, Some(p)) => (iontransport_core::config::load_config(p).map_err(to_py)?, p.display().to_string()),
        _ => return Err(PyValueError::new_err("give exactly one of preset_name and config")),
    };
    if let Some(s) = seed {
        cfg.set_seed(s);
    }
    let cmd = match command {
        "chain" => Command::Chain,
        "evolve" => Command::Evolve,
        "rates" => Command::Rates { amplitudes_khz: None, kinds: None },
        "laser" => Command::Laser,
        "validate" => Command::Validate,
        other => return Err(PyValueError::new_err(format!("unknown command {other:?}"))),
    };
    let opts = RunOptions { out_dir, threads, source };
    let outcome = py.detach(|| run_experiment(&mut cfg, &cmd, &opts)).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("report", outcome.report)?;
    d.set_item("outputs", outcome.outputs)?;
    d.set_item("manifest", outcome.manifest)?;
    d.set_item("success", outcome.success)?;
    Ok(d)
}

#[allow(clippy::too_many_arguments)]
fn laser_params(
    delta: f64,
    omega1: f64,
    omega2: f64,
    delta_l_prime: f64,
    eta_x: f64,
    omega_x: f64,
    delta_l: Option<f64>,
    gamma: Option<f64>,
) -> LaserParams {
    LaserParams { delta, omega1, omega2, delta_l_prime, delta_l, eta_x, omega_x, gamma: gamma.unwrap_or(DEFAULT_GAMMA) }
}

/// Per-phonon transverse frequency shift (rad/s); all inputs in rad/s.
#[pyfunction]
#[pyo3(signature = (delta, omega1, omega2, delta_l_prime, eta_x, omega_x, fz_sq = 1.0))]
fn raman_shift_amplitude(
    delta: f64,
    omega1: f64,
    omega2: f64,
    delta_l_prime: f64,
    eta_x: f64,
    omega_x: f64,
    fz_sq: f64,
) -> PyResult<f64> {
    let p = laser_params(delta, omega1, omega2, delta_l_prime, eta_x, omega_x, None, None);
    laser::raman_shift_amplitude(&p, fz_sq).map_err(to_py)
}

/// Detuning `Delta` (rad/s) that cancels the phonon-independent light shift.
#[pyfunction]
fn cancellation_detuning(omega2: f64, delta_l_prime: f64, eta_x: f64, omega_x: f64) -> PyResult<f64> {
    laser::cancellation_detuning(omega2, delta_l_prime, eta_x, omega_x).map_err(to_py)
}

/// Validity ratios as `(condition, description, ratio, pass)` tuples.
#[pyfunction]
#[pyo3(signature = (delta, omega1, omega2, delta_l_prime, eta_x, omega_x, mode_frequencies, margin = DEFAULT_MARGIN, delta_l = None, gamma = None))]
#[allow(clippy::too_many_arguments)]
fn laser_validity(
    delta: f64,
    omega1: f64,
    omega2: f64,
    delta_l_prime: f64,
    eta_x: f64,
    omega_x: f64,
    mode_frequencies: Vec<f64>,
    margin: f64,
    delta_l: Option<f64>,
    gamma: Option<f64>,
) -> PyResult<Vec<(&'static str, String, f64, bool)>> {
    let p = laser_params(delta, omega1, omega2, delta_l_prime, eta_x, omega_x, delta_l, gamma);
    let report = laser::validity_report(&p, &mode_frequencies, margin).map_err(to_py)?;
    Ok(report.entries.into_iter().map(|e| (e.condition.label(), e.description, e.ratio, e.pass)).collect())
}

/// `<a>` from occupations read at displacements `|alpha| e^{i theta}`,
/// `theta = 0, 2pi/3, -2pi/3`.
#[pyfunction]
fn reconstruct_first_moment(n0: f64, nplus: f64, nminus: f64, alpha: f64) -> PyResult<Complex64> {
    readout::reconstruct_first_moment(n0, nplus, nminus, alpha).map_err(to_py)
}

/// `<n>` after displacing a state with occupation `occupation` and first
/// moment `moment` by `alpha`.
#[pyfunction]
fn displaced_occupation(occupation: f64, moment: Complex64, alpha: Complex64) -> f64 {
    readout::displaced_occupation(occupation, moment, alpha)
}

/// Fits `p_inf (1 - exp(-gamma t))`; returns `(gamma, p_inf, rms_residual)`.
#[pyfunction]
fn fit_relaxation(times: Vec<f64>, values: Vec<f64>) -> PyResult<(f64, f64, f64)> {
    let fit = core_fit(&times, &values).map_err(to_py)?;
    Ok((fit.gamma, fit.p_inf, fit.residual))
}

/// Gaussian engine vs Fock-space oracle on the standard two- and
/// three-site cases; one summary line per case.
#[pyfunction]
#[pyo3(signature = (seed = 1))]
fn validate_engines(py: Python<'_>, seed: u64) -> PyResult<Vec<(String, bool)>> {
    py.detach(|| {
        standard_cases(seed)?
            .iter()
            .map(|c| compare_with_oracle(c).map(|r| (r.summary(), r.pass())))
            .collect::<Result<Vec<_>, Error>>()
    })
    .map_err(to_py)
}

/// Canonical names of the noise kinds.
#[pyfunction]
fn noise_kinds() -> Vec<&'static str> {
    [NoiseKind::None, NoiseKind::StandingWave, NoiseKind::Independent, NoiseKind::Static].iter().map(|k| k.name()).collect()
}

#[pymodule]
fn iontransport(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyChain>()?;
    m.add_function(wrap_pyfunction!(preset_names, m)?)?;
    m.add_function(wrap_pyfunction!(evolve_preset, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(raman_shift_amplitude, m)?)?;
    m.add_function(wrap_pyfunction!(cancellation_detuning, m)?)?;
    m.add_function(wrap_pyfunction!(laser_validity, m)?)?;
    m.add_function(wrap_pyfunction!(reconstruct_first_moment, m)?)?;
    m.add_function(wrap_pyfunction!(displaced_occupation, m)?)?;
    m.add_function(wrap_pyfunction!(fit_relaxation, m)?)?;
    m.add_function(wrap_pyfunction!(validate_engines, m)?)?;
    m.add_function(wrap_pyfunction!(noise_kinds, m)?)?;
    Ok(())
}
