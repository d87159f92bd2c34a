//! Run configuration: TOML in human units (kHz, MHz, GHz, us, ms), validated
//! and converted to SI angular units.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::chain::{ChainSpec, FrequencyProfile, DEFAULT_ANGLE_TRAP_GRADIENT};
use crate::constants::{ghz, isotope_mass_u, khz, mhz, ATOMIC_MASS_UNIT};
use crate::error::{Error, Result};
use crate::laser::{LaserParams, DEFAULT_GAMMA, DEFAULT_MARGIN};
use crate::noise::{NoiseKind, NoiseSpec};
use crate::propagators::{BathSpec, Engine, EnsembleSetup, InitialCondition, TimeGrid};

pub const DEFAULT_ISOTOPE: &str = "40Ca";

/// Shipped presets, by name.
pub const PRESETS: &[(&str, &str)] = &[
    ("fig2_bottomleft", include_str!("../presets/fig2_bottomleft.toml")),
    ("fig2_topleft", include_str!("../presets/fig2_topleft.toml")),
    ("fig2_rates", include_str!("../presets/fig2_rates.toml")),
    ("fig3_thermal", include_str!("../presets/fig3_thermal.toml")),
    ("paper_params", include_str!("../presets/paper_params.toml")),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ChainMode {
    #[default]
    Explicit,
    AngleTrap,
    MultiIsotope,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKindKey {
    None,
    #[serde(alias = "standing-wave")]
    StandingWave,
    Independent,
    Static,
}

impl From<NoiseKindKey> for NoiseKind {
    fn from(k: NoiseKindKey) -> Self {
        match k {
            NoiseKindKey::None => NoiseKind::None,
            NoiseKindKey::StandingWave => NoiseKind::StandingWave,
            NoiseKindKey::Independent => NoiseKind::Independent,
            NoiseKindKey::Static => NoiseKind::Static,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EngineKey {
    #[default]
    SingleExcitation,
    Gaussian,
}

impl From<EngineKey> for Engine {
    fn from(k: EngineKey) -> Self {
        match k {
            EngineKey::SingleExcitation => Engine::SingleExcitation,
            EngineKey::Gaussian => Engine::Gaussian,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_ions: Option<usize>,
    pub omega_z_khz: f64,
    #[serde(default)]
    pub mode: ChainMode,
    /// Species of every ion, e.g. `"40Ca"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub isotope: Option<String>,
    /// Per-ion species; overrides `isotope`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub isotopes: Option<Vec<String>>,
    /// Per-ion masses in u; overrides both species keys.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub masses_u: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_isotope: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_mass_u: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub local_frequencies_khz: Option<Vec<f64>>,
    #[serde(default)]
    pub frequencies_are_renormalized: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_x_center_khz: Option<f64>,
    /// Relative change of the transverse frequency per mm of axial offset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gradient_per_mm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_x_reference_khz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub kind: NoiseKindKey,
    #[serde(default)]
    pub amplitude_khz: f64,
    #[serde(default = "default_dwell_us")]
    pub dwell_us: f64,
    #[serde(default = "default_lambda_ratio_n")]
    pub lambda_ratio_n: u32,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct BathSection {
    #[serde(default)]
    pub kappa_per_ms: f64,
    #[serde(default)]
    pub nbar: f64,
    #[serde(default)]
    pub init_occupation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub t_total_ms: f64,
    #[serde(default = "default_dwell_us")]
    pub output_dt_us: f64,
    #[serde(default = "default_trajectories")]
    pub trajectories: usize,
    #[serde(default)]
    pub engine: EngineKey,
    /// `site:k`, `coherent:k:alpha`, `coherent:k:re,im` or `vacuum`; sites are 1-based.
    #[serde(default = "default_initial")]
    pub initial: String,
    /// 1-based site whose population is fitted; defaults to the last ion.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_site: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep_amplitudes_khz: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep_kinds: Option<Vec<NoiseKindKey>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaserSection {
    pub delta_ghz: f64,
    pub omega1_mhz: f64,
    pub omega2_mhz: f64,
    pub delta_l_prime_mhz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_l_mhz: Option<f64>,
    pub eta_x: f64,
    pub omega_x_khz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_mhz: Option<f64>,
    #[serde(default = "default_margin")]
    pub margin: f64,
    /// Motional frequencies entering the validity ratios; defaults to `omega_x`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode_frequencies_khz: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    /// Also write per-trajectory first moments (needed by `measure`).
    #[serde(default)]
    pub write_trajectories: bool,
}

fn default_dwell_us() -> f64 {
    20.0
}
fn default_lambda_ratio_n() -> u32 {
    4
}
fn default_seed() -> u64 {
    1
}
fn default_trajectories() -> usize {
    1
}
fn default_initial() -> String {
    "site:1".into()
}
fn default_margin() -> f64 {
    DEFAULT_MARGIN
}

/// The configuration file as written, in human units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain: Option<ChainSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bath: Option<BathSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<RunSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub laser: Option<LaserSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSection>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub t_total: f64,
    pub output_dt: f64,
    pub trajectories: usize,
    pub engine: Engine,
    pub initial: InitialCondition,
    /// 0-based; `None` means the last ion.
    pub fit_site: Option<usize>,
    /// rad/s
    pub sweep_amplitudes: Vec<f64>,
    pub sweep_kinds: Vec<NoiseKind>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaserSettings {
    pub params: LaserParams,
    pub margin: f64,
    pub mode_frequencies: Vec<f64>,
}

/// Validated configuration in SI units; `file` keeps the original echo.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub file: ConfigFile,
    pub chain: Option<ChainSpec>,
    pub noise: Option<NoiseSpec>,
    pub bath: BathSpec,
    pub run: Option<RunSettings>,
    pub laser: Option<LaserSettings>,
    pub output_dir: Option<String>,
    pub write_trajectories: bool,
}

fn invalid(path: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{path}: {msg}"))
}

fn positive(path: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(path, format!("must be positive, got {v}")))
    }
}

fn non_negative(path: &str, v: f64) -> Result<f64> {
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(path, format!("must be >= 0, got {v}")))
    }
}

fn species_mass(path: &str, name: &str) -> Result<f64> {
    isotope_mass_u(name).ok_or_else(|| invalid(path, format!("unknown isotope {name:?}")))
}

/// Parses `site:k`, `coherent:k:alpha`, `coherent:k:re,im` or `vacuum`.
pub fn parse_initial(s: &str) -> Result<InitialCondition> {
    let bad = || invalid("run.initial", format!("cannot parse {s:?}; expected site:k, coherent:k:alpha or vacuum"));
    let parts: Vec<&str> = s.trim().split(':').collect();
    let site = |p: &str| -> Result<usize> {
        match p.trim().parse::<usize>() {
            Ok(k) if k >= 1 => Ok(k - 1),
            _ => Err(bad()),
        }
    };
    match parts.as_slice() {
        ["vacuum"] => Ok(InitialCondition::Vacuum),
        ["site", k] => Ok(InitialCondition::Site(site(k)?)),
        ["coherent", k, a] => {
            let nums: Vec<f64> = a.split(',').map(|x| x.trim().parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|_| bad())?;
            let alpha = match nums.as_slice() {
                [re] => Complex64::new(*re, 0.0),
                [re, im] => Complex64::new(*re, *im),
                _ => return Err(bad()),
            };
            Ok(InitialCondition::Coherent { site: site(k)?, alpha })
        }
        _ => Err(bad()),
    }
}

fn resolve_chain(c: &ChainSection) -> Result<ChainSpec> {
    let omega_z = khz(positive("chain.omega_z_khz", c.omega_z_khz)?);
    let n_from_lists = c
        .local_frequencies_khz
        .as_ref()
        .map(Vec::len)
        .or(c.masses_u.as_ref().map(Vec::len))
        .or(c.isotopes.as_ref().map(Vec::len));
    let n_ions = c
        .n_ions
        .or(n_from_lists)
        .ok_or_else(|| invalid("chain.n_ions", "missing; required when no per-ion list is given"))?;
    if n_ions == 0 {
        return Err(invalid("chain.n_ions", "must be at least 1"));
    }

    let masses_u: Vec<f64> = if let Some(m) = &c.masses_u {
        for (i, v) in m.iter().enumerate() {
            positive(&format!("chain.masses_u[{i}]"), *v)?;
        }
        m.clone()
    } else if let Some(names) = &c.isotopes {
        names.iter().enumerate().map(|(i, n)| species_mass(&format!("chain.isotopes[{i}]"), n)).collect::<Result<_>>()?
    } else {
        let name = c.isotope.as_deref().unwrap_or(DEFAULT_ISOTOPE);
        vec![species_mass("chain.isotope", name)?; n_ions]
    };
    if masses_u.len() != n_ions {
        return Err(invalid("chain", format!("{} masses for {n_ions} ions", masses_u.len())));
    }
    let reference_u = match (&c.reference_mass_u, &c.reference_isotope) {
        (Some(m), _) => positive("chain.reference_mass_u", *m)?,
        (None, Some(name)) => species_mass("chain.reference_isotope", name)?,
        (None, None) => masses_u[0],
    };

    let profile = match c.mode {
        ChainMode::Explicit => {
            let f = c
                .local_frequencies_khz
                .as_ref()
                .ok_or_else(|| invalid("chain.local_frequencies_khz", "missing; required in explicit mode"))?;
            if f.len() != n_ions {
                return Err(invalid("chain.local_frequencies_khz", format!("{} values for {n_ions} ions", f.len())));
            }
            for (i, v) in f.iter().enumerate() {
                positive(&format!("chain.local_frequencies_khz[{i}]"), *v)?;
            }
            FrequencyProfile::Explicit(f.iter().map(|v| khz(*v)).collect())
        }
        ChainMode::AngleTrap => {
            let center = c
                .omega_x_center_khz
                .ok_or_else(|| invalid("chain.omega_x_center_khz", "missing; required in angle_trap mode"))?;
            let gradient = c.gradient_per_mm.map_or(DEFAULT_ANGLE_TRAP_GRADIENT, |g| g * 1e3);
            if !gradient.is_finite() {
                return Err(invalid("chain.gradient_per_mm", "must be finite"));
            }
            FrequencyProfile::AngleTrap { omega_x_center: khz(positive("chain.omega_x_center_khz", center)?), gradient }
        }
        ChainMode::MultiIsotope => {
            let w = c
                .omega_x_reference_khz
                .ok_or_else(|| invalid("chain.omega_x_reference_khz", "missing; required in multi_isotope mode"))?;
            FrequencyProfile::MultiIsotope { omega_x_reference: khz(positive("chain.omega_x_reference_khz", w)?) }
        }
    };
    let spec = ChainSpec {
        n_ions,
        omega_z,
        profile,
        masses: masses_u.iter().map(|m| m * ATOMIC_MASS_UNIT).collect(),
        reference_mass: reference_u * ATOMIC_MASS_UNIT,
        frequencies_are_renormalized: c.frequencies_are_renormalized,
    };
    spec.validate().map_err(|e| invalid("chain", e))?;
    Ok(spec)
}

fn resolve_noise(n: &NoiseSection) -> Result<NoiseSpec> {
    let spec = NoiseSpec {
        kind: n.kind.into(),
        amplitude: khz(non_negative("noise.amplitude_khz", n.amplitude_khz)?),
        lambda_ratio_n: n.lambda_ratio_n,
        dwell: positive("noise.dwell_us", n.dwell_us)? * 1e-6,
        seed: n.seed,
    };
    spec.validate().map_err(|e| invalid("noise", e))?;
    Ok(spec)
}

fn resolve_bath(b: &BathSection) -> Result<BathSpec> {
    Ok(BathSpec {
        kappa: non_negative("bath.kappa_per_ms", b.kappa_per_ms)? * 1e3,
        nbar: non_negative("bath.nbar", b.nbar)?,
        init_occupation: non_negative("bath.init_occupation", b.init_occupation)?,
    })
}

fn resolve_run(r: &RunSection, n_ions: Option<usize>) -> Result<RunSettings> {
    let t_total = positive("run.t_total_ms", r.t_total_ms)? * 1e-3;
    let output_dt = positive("run.output_dt_us", r.output_dt_us)? * 1e-6;
    if r.trajectories == 0 {
        return Err(invalid("run.trajectories", "must be at least 1"));
    }
    let initial = parse_initial(&r.initial)?;
    let engine: Engine = r.engine.into();
    match (engine, initial) {
        (Engine::SingleExcitation, InitialCondition::Site(_)) => {}
        (Engine::Gaussian, InitialCondition::Coherent { .. } | InitialCondition::Vacuum) => {}
        _ => return Err(invalid("run.initial", format!("{:?} is not valid for the {} engine", r.initial, engine.name()))),
    }
    if let Some(n) = n_ions {
        let site = match initial {
            InitialCondition::Site(k) | InitialCondition::Coherent { site: k, .. } => Some(k),
            InitialCondition::Vacuum => None,
        };
        if site.is_some_and(|k| k >= n) {
            return Err(invalid("run.initial", format!("site out of range for {n} ions")));
        }
        if r.fit_site.is_some_and(|k| k == 0 || k > n) {
            return Err(invalid("run.fit_site", format!("must lie in 1..={n}")));
        }
    }
    let sweep_amplitudes = match &r.sweep_amplitudes_khz {
        Some(a) => a
            .iter()
            .enumerate()
            .map(|(i, v)| non_negative(&format!("run.sweep_amplitudes_khz[{i}]"), *v).map(khz))
            .collect::<Result<_>>()?,
        None => Vec::new(),
    };
    let sweep_kinds = r.sweep_kinds.as_ref().map_or_else(Vec::new, |k| k.iter().map(|&x| x.into()).collect());
    Ok(RunSettings {
        t_total,
        output_dt,
        trajectories: r.trajectories,
        engine,
        initial,
        fit_site: r.fit_site.map(|k| k - 1),
        sweep_amplitudes,
        sweep_kinds,
    })
}

fn resolve_laser(l: &LaserSection) -> Result<LaserSettings> {
    let gamma = match l.gamma_mhz {
        Some(g) => mhz(non_negative("laser.gamma_mhz", g)?),
        None => DEFAULT_GAMMA,
    };
    let params = LaserParams {
        delta: ghz(l.delta_ghz),
        omega1: mhz(non_negative("laser.omega1_mhz", l.omega1_mhz)?),
        omega2: mhz(non_negative("laser.omega2_mhz", l.omega2_mhz)?),
        delta_l_prime: mhz(l.delta_l_prime_mhz),
        delta_l: l.delta_l_mhz.map(mhz),
        eta_x: l.eta_x,
        omega_x: khz(non_negative("laser.omega_x_khz", l.omega_x_khz)?),
        gamma,
    };
    params.validate().map_err(|e| invalid("laser", e))?;
    let mode_frequencies = match &l.mode_frequencies_khz {
        Some(m) if m.is_empty() => return Err(invalid("laser.mode_frequencies_khz", "must not be empty")),
        Some(m) => m.iter().map(|v| khz(*v)).collect(),
        None => vec![params.omega_x],
    };
    Ok(LaserSettings { params, margin: positive("laser.margin", l.margin)?, mode_frequencies })
}

impl RunConfig {
    pub fn from_file(file: ConfigFile) -> Result<Self> {
        let chain = file.chain.as_ref().map(resolve_chain).transpose()?;
        let noise = file.noise.as_ref().map(resolve_noise).transpose()?;
        let bath = file.bath.as_ref().map(resolve_bath).transpose()?.unwrap_or_default();
        let run = file.run.as_ref().map(|r| resolve_run(r, chain.as_ref().map(|c| c.n_ions))).transpose()?;
        let laser = file.laser.as_ref().map(resolve_laser).transpose()?;
        let output = file.output.clone().unwrap_or_default();
        Ok(RunConfig {
            chain,
            noise,
            bath,
            run,
            laser,
            output_dir: output.dir,
            write_trajectories: output.write_trajectories,
            file,
        })
    }

    pub fn require_chain(&self) -> Result<&ChainSpec> {
        self.chain.as_ref().ok_or_else(|| invalid("chain", "missing section"))
    }

    pub fn require_noise(&self) -> Result<&NoiseSpec> {
        self.noise.as_ref().ok_or_else(|| invalid("noise", "missing section"))
    }

    pub fn require_run(&self) -> Result<&RunSettings> {
        self.run.as_ref().ok_or_else(|| invalid("run", "missing section"))
    }

    pub fn require_laser(&self) -> Result<&LaserSettings> {
        self.laser.as_ref().ok_or_else(|| invalid("laser", "missing section"))
    }

    /// Master seed (the noise seed), if a noise section exists.
    pub fn seed(&self) -> Option<u64> {
        self.noise.as_ref().map(|n| n.seed)
    }

    /// Overrides the master seed in both the resolved spec and the echo.
    pub fn set_seed(&mut self, seed: u64) {
        if let Some(n) = self.noise.as_mut() {
            n.seed = seed;
        }
        if let Some(n) = self.file.noise.as_mut() {
            n.seed = seed;
        }
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        let run = self.require_run()?;
        TimeGrid::uniform(run.t_total, run.output_dt)
    }

    pub fn ensemble_setup(&self) -> Result<EnsembleSetup> {
        let run = self.require_run()?;
        Ok(EnsembleSetup {
            noise: self.require_noise()?.clone(),
            bath: self.bath,
            initial: run.initial,
            grid: self.time_grid()?,
            trajectories: run.trajectories,
            engine: run.engine,
            keep_trajectories: self.write_trajectories,
        })
    }

    /// 0-based site used for rate fits.
    pub fn fit_site(&self) -> Result<usize> {
        let n = self.require_chain()?.n_ions;
        Ok(self.run.as_ref().and_then(|r| r.fit_site).unwrap_or(n - 1))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(&self.file).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Parses and validates TOML configuration text.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let de = toml::Deserializer::parse(text).map_err(|e| Error::Config(e.to_string()))?;
    let file: ConfigFile = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let msg = inner.message().trim().to_string();
        if path.is_empty() || path == "." {
            Error::Config(msg)
        } else {
            Error::Config(format!("{path}: {msg}"))
        }
    })?;
    RunConfig::from_file(file)
}

/// Parses a configuration echoed as JSON (the `config` field of a manifest).
pub fn parse_config_json(value: serde_json::Value) -> Result<RunConfig> {
    let file: ConfigFile = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        Error::Config(format!("{path}: {}", e.into_inner()))
    })?;
    RunConfig::from_file(file)
}

pub fn preset_text(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn preset(name: &str) -> Result<RunConfig> {
    let text = preset_text(name).ok_or_else(|| {
        let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
        Error::Config(format!("unknown preset {name:?}; available: {}", names.join(", ")))
    })?;
    parse_config(text)
}

/// Reads a TOML file, or a JSON run manifest whose `config` is reused.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if path.extension().is_some_and(|e| e == "json") {
        let manifest: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let config = manifest
            .get("config")
            .cloned()
            .ok_or_else(|| Error::Config(format!("{}: manifest has no `config` field", path.display())))?;
        return parse_config_json(config);
    }
    parse_config(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}
