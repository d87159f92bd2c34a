//! Experiment orchestration behind the command-line tool.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{fit_equilibration_rate, rate_sweep};
use crate::chain::{build_model, ChainModel};
use crate::config::{ConfigFile, NoiseKindKey, RunConfig};
use crate::constants::{to_khz, TWO_PI};
use crate::error::{Error, Result};
use crate::laser::{cancellation_detuning, raman_shift_amplitude, static_term_factor, validity_report};
use crate::noise::NoiseKind;
use crate::output;
use crate::propagators::{ensemble_run, pairwise_mean, Engine, Trajectory};
use crate::readout::{displaced_occupation, reconstruct_first_moment, ReadNoise, PROBE_PHASES};
use crate::validation::{compare_with_oracle, standard_cases};

pub const MANIFEST_NAME: &str = "manifest.json";

/// Stream offset separating read-noise draws from noise-field draws.
const READOUT_STREAM_BASE: u64 = 1 << 63;

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Chain,
    Evolve,
    /// Amplitudes in kHz; `None` falls back to the configuration.
    Rates { amplitudes_khz: Option<Vec<f64>>, kinds: Option<Vec<NoiseKind>> },
    Laser,
    Measure { ensemble: Option<PathBuf>, alpha: f64, read_noise: f64 },
    Validate,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Chain => "chain",
            Command::Evolve => "evolve",
            Command::Rates { .. } => "rates",
            Command::Laser => "laser",
            Command::Measure { .. } => "measure",
            Command::Validate => "validate",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    /// Worker threads; `None` uses every available core.
    pub threads: Option<usize>,
    /// Where the configuration came from (preset name or path).
    pub source: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub source: String,
    pub seed: Option<u64>,
    pub threads: usize,
    pub started_unix_ms: u128,
    pub arguments: serde_json::Value,
    pub outputs: Vec<String>,
    pub config: ConfigFile,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub report: String,
    pub outputs: Vec<PathBuf>,
    pub manifest: PathBuf,
    /// False when a check (validation, laser margins) did not pass.
    pub success: bool,
}

fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis())
}

fn write_manifest(path: &Path, manifest: &RunManifest) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn kind_key(k: NoiseKind) -> NoiseKindKey {
    match k {
        NoiseKind::None => NoiseKindKey::None,
        NoiseKind::StandingWave => NoiseKindKey::StandingWave,
        NoiseKind::Independent => NoiseKindKey::Independent,
        NoiseKind::Static => NoiseKindKey::Static,
    }
}

/// Folds command-line overrides into the configuration so the manifest
/// alone reproduces the run.
fn apply_overrides(config: &mut RunConfig, command: &Command) -> Result<()> {
    if let Command::Rates { amplitudes_khz, kinds } = command {
        if amplitudes_khz.is_none() && kinds.is_none() {
            return Ok(());
        }
        let mut file = config.file.clone();
        let run = file.run.as_mut().ok_or_else(|| Error::Config("run: missing section".into()))?;
        if let Some(a) = amplitudes_khz {
            run.sweep_amplitudes_khz = Some(a.clone());
        }
        if let Some(k) = kinds {
            run.sweep_kinds = Some(k.iter().map(|&x| kind_key(x)).collect());
        }
        *config = RunConfig::from_file(file)?;
    }
    Ok(())
}

fn planned_outputs(config: &RunConfig, command: &Command, out: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    match command {
        Command::Chain => files.push("chain.txt"),
        Command::Laser => files.push("laser.txt"),
        Command::Evolve => {
            files.push("populations.csv");
            if config.require_run()?.engine == Engine::Gaussian {
                files.push("filtered.csv");
                if config.write_trajectories {
                    files.push("ensemble.csv");
                }
            }
        }
        Command::Rates { .. } => files.push("rates.csv"),
        Command::Measure { .. } => files.push("measure.csv"),
        Command::Validate => files.push("validate.csv"),
    }
    Ok(files.into_iter().map(|f| out.join(f)).collect())
}

fn arguments(command: &Command) -> serde_json::Value {
    match command {
        Command::Measure { ensemble, alpha, read_noise } => serde_json::json!({
            "ensemble": ensemble.as_ref().map(|p| p.display().to_string()),
            "alpha": alpha,
            "read_noise": read_noise,
        }),
        _ => serde_json::json!({}),
    }
}

/// Runs one subcommand: writes the manifest, then the results.
pub fn run_experiment(config: &mut RunConfig, command: &Command, opts: &RunOptions) -> Result<RunOutcome> {
    apply_overrides(config, command)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = opts.threads {
        if n == 0 {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?;

    std::fs::create_dir_all(&opts.out_dir).map_err(|e| Error::io(&opts.out_dir, e))?;
    let outputs = planned_outputs(config, command, &opts.out_dir)?;
    let manifest_path = opts.out_dir.join(MANIFEST_NAME);
    let manifest = RunManifest {
        tool: "iontransport".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.name().into(),
        source: opts.source.clone(),
        seed: config.seed(),
        threads: pool.current_num_threads(),
        started_unix_ms: now_ms(),
        arguments: arguments(command),
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
        config: config.file.clone(),
    };
    write_manifest(&manifest_path, &manifest)?;

    let (report, success) = pool.install(|| dispatch(config, command, &outputs))?;
    Ok(RunOutcome { report, outputs, manifest: manifest_path, success })
}

fn dispatch(config: &RunConfig, command: &Command, outputs: &[PathBuf]) -> Result<(String, bool)> {
    match command {
        Command::Chain => {
            let report = chain_report(&build_model(config.require_chain()?)?);
            std::fs::write(&outputs[0], &report).map_err(|e| Error::io(&outputs[0], e))?;
            Ok((report, true))
        }
        Command::Laser => {
            let (report, pass) = laser_report(config)?;
            std::fs::write(&outputs[0], &report).map_err(|e| Error::io(&outputs[0], e))?;
            Ok((report, pass))
        }
        Command::Evolve => evolve(config, outputs).map(|r| (r, true)),
        Command::Rates { .. } => rates(config, &outputs[0]).map(|r| (r, true)),
        Command::Measure { ensemble, alpha, read_noise } => {
            measure(config, ensemble.as_deref(), *alpha, *read_noise, &outputs[0]).map(|r| (r, true))
        }
        Command::Validate => validate(config, &outputs[0]),
    }
}

pub fn chain_report(model: &ChainModel) -> String {
    let mut s = String::new();
    let n = model.n_ions();
    let _ = writeln!(s, "ions: {n}");
    let _ = writeln!(s, "length scale: {:.4} um", model.length_scale * 1e6);
    let pos: Vec<String> = model.positions.iter().map(|z| format!("{:.4}", z * 1e6)).collect();
    let _ = writeln!(s, "positions (um): [{}]", pos.join(", "));
    let _ = writeln!(s, "mean spacing: {:.4} um", model.mean_spacing() * 1e6);
    let w: Vec<String> = model.local_frequencies.iter().map(|w| format!("{:.4}", to_khz(*w))).collect();
    let _ = writeln!(s, "local frequencies (kHz): [{}]", w.join(", "));
    let _ = writeln!(s, "couplings (kHz):");
    for j in 0..n {
        let row: Vec<String> = (0..n).map(|k| format!("{:>10.5}", to_khz(model.couplings[(j, k)]))).collect();
        let _ = writeln!(s, "  {}", row.join(" "));
    }
    let modes: Vec<String> = model.mode_frequencies().iter().map(|w| format!("{:.4}", to_khz(*w))).collect();
    let _ = writeln!(s, "mode frequencies (kHz): [{}]", modes.join(", "));
    let _ = writeln!(s, "max coupling / min local frequency: {:.3e}", model.coupling_ratio());
    let _ = writeln!(s, "max coupling / min neighbour gap: {:.4}", model.localization_ratio());
    let _ = writeln!(s, "off-site weight of normal modes: {:.4}", model.localization_diagnostic());
    let _ = writeln!(s, "weight beyond nearest neighbours: {:.3e}", model.long_range_participation());
    s
}

fn laser_report(config: &RunConfig) -> Result<(String, bool)> {
    let laser = config.require_laser()?;
    let p = &laser.params;
    let shift = raman_shift_amplitude(p, 1.0)?;
    let solved = cancellation_detuning(p.omega2, p.delta_l_prime, p.eta_x, p.omega_x)?;
    let report = validity_report(p, &laser.mode_frequencies, laser.margin)?;
    let mut s = String::new();
    let _ = writeln!(s, "per-phonon shift at full intensity: {:.4} kHz", to_khz(shift));
    let _ = writeln!(s, "noise amplitude A (half the shift range): {:.4} kHz", to_khz(shift.abs()) / 2.0);
    let _ = writeln!(s, "cancellation detuning: {:.4} GHz (configured {:.4} GHz)", solved / TWO_PI / 1e9, p.delta / TWO_PI / 1e9);
    let _ = writeln!(s, "residual static-term factor at configured detuning: {:.4e}", static_term_factor(p)?);
    let _ = writeln!(s, "Gamma = {:.4} MHz{}", p.gamma / TWO_PI / 1e6, if config.file.laser.as_ref().is_some_and(|l| l.gamma_mhz.is_none()) { " (assumed)" } else { "" });
    let _ = writeln!(s, "validity at configured parameters:\n{report}");
    let at_solved = validity_report(&p.at_cancellation()?, &laser.mode_frequencies, laser.margin)?;
    let _ = writeln!(
        s,
        "at the cancellation detuning: shift {:.4} kHz, validity {}",
        to_khz(raman_shift_amplitude(&p.at_cancellation()?, 1.0)?),
        if at_solved.pass { "PASS" } else { "FAIL" }
    );
    Ok((s, report.pass))
}

fn evolve(config: &RunConfig, outputs: &[PathBuf]) -> Result<String> {
    let model = build_model(config.require_chain()?)?;
    let setup = config.ensemble_setup()?;
    let result = ensemble_run(&model, &setup)?;
    output::write_populations(&outputs[0], &result.mean)?;
    if let Some(filtered) = &result.mean.filtered {
        output::write_filtered(&outputs[1], &result.mean.times, filtered)?;
        if config.write_trajectories {
            output::write_ensemble(&outputs[2], &result.mean.times, &result.trajectories)?;
        }
    }
    let mut s = String::new();
    let last = result.mean.populations.last().cloned().unwrap_or_default();
    let fmt: Vec<String> = last.iter().map(|p| format!("{p:.5}")).collect();
    let _ = writeln!(s, "{} trajectories, engine {}", setup.trajectories, setup.engine.name());
    let _ = writeln!(s, "final populations: [{}]", fmt.join(", "));
    let site = config.fit_site()?;
    let peak = result.mean.site(site).into_iter().fold(0.0, f64::max);
    let _ = writeln!(s, "max population of site {}: {peak:.5}", site + 1);
    match fit_equilibration_rate(&result.mean, site) {
        Ok(fit) => {
            let _ = writeln!(
                s,
                "fit site {}: gamma = {:.4} 1/s (1/gamma = {:.4} ms), p_inf = {:.5}, rms residual = {:.3e}",
                site + 1,
                fit.gamma,
                1e3 / fit.gamma,
                fit.p_inf,
                fit.residual
            );
        }
        Err(e) => {
            let _ = writeln!(s, "fit site {}: {e}", site + 1);
        }
    }
    Ok(s)
}

fn rates(config: &RunConfig, path: &Path) -> Result<String> {
    let model = build_model(config.require_chain()?)?;
    let run = config.require_run()?;
    if run.sweep_amplitudes.is_empty() {
        return Err(Error::Config("run.sweep_amplitudes_khz: missing; pass --amplitudes or set it".into()));
    }
    let kinds = if run.sweep_kinds.is_empty() { vec![NoiseKind::StandingWave, NoiseKind::Independent] } else { run.sweep_kinds.clone() };
    let mut setup = config.ensemble_setup()?;
    setup.keep_trajectories = false;
    let points = rate_sweep(&model, &setup, &run.sweep_amplitudes, &kinds, config.fit_site()?)?;
    output::write_rates(path, &points)?;
    let mut s = String::from("amplitude_khz  kind           gamma_per_s   p_inf\n");
    for p in &points {
        let _ = writeln!(s, "{:>13.3}  {:<13}  {:>11.3}  {:.4}", to_khz(p.amplitude), p.kind.name(), p.fit.gamma, p.fit.p_inf);
    }
    Ok(s)
}

/// Reconstructed first moments of one trajectory, `[t][j]`.
fn reconstruct_trajectory(traj: &Trajectory, alpha: f64, noise: Option<ReadNoise>, seed: u64, index: usize) -> Result<Vec<Vec<Complex64>>> {
    use rand_distr::{Distribution, Normal};
    let moments = traj.moments.as_ref().ok_or_else(|| Error::Contract("trajectory has no first moments".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(READOUT_STREAM_BASE | index as u64);
    let normal = match noise {
        Some(rn) if rn.sigma > 0.0 => Some(Normal::new(0.0, rn.sigma).map_err(|e| Error::Domain(e.to_string()))?),
        _ => None,
    };
    traj.populations
        .iter()
        .zip(moments)
        .map(|(occ, mu)| {
            occ.iter()
                .zip(mu)
                .map(|(&n, &m)| {
                    let mut r = PROBE_PHASES.map(|theta| displaced_occupation(n, m, Complex64::from_polar(alpha, theta)));
                    if let Some(normal) = &normal {
                        for x in r.iter_mut() {
                            *x += normal.sample(&mut rng);
                        }
                    }
                    reconstruct_first_moment(r[0], r[1], r[2], alpha)
                })
                .collect()
        })
        .collect()
}

fn measure(config: &RunConfig, ensemble: Option<&Path>, alpha: f64, read_noise: f64, path: &Path) -> Result<String> {
    let noise = ReadNoise::new(read_noise)?;
    if !(alpha > 0.0) {
        return Err(Error::Domain(format!("probe amplitude must be positive, got {alpha}")));
    }
    let (times, trajectories) = match ensemble {
        Some(p) => output::read_ensemble(p)?,
        None => {
            let model = build_model(config.require_chain()?)?;
            let mut setup = config.ensemble_setup()?;
            if setup.engine != Engine::Gaussian {
                return Err(Error::Config("run.engine: measure needs the gaussian engine".into()));
            }
            setup.keep_trajectories = true;
            let r = ensemble_run(&model, &setup)?;
            (r.mean.times, r.trajectories)
        }
    };
    let seed = config.seed().unwrap_or(1);
    let reconstructed: Vec<Vec<Vec<Complex64>>> = trajectories
        .par_iter()
        .enumerate()
        .map(|(k, t)| reconstruct_trajectory(t, alpha, Some(noise), seed, k))
        .collect::<Result<_>>()?;
    let filtered = crate::readout::filtered_transport_signal(&reconstructed)?;
    let raw = pairwise_mean(&trajectories.iter().map(|t| &t.populations).collect::<Vec<_>>());
    output::write_measurement(path, &times, &raw, &filtered)?;
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.5}")).collect::<Vec<_>>().join(", ");
    Ok(format!(
        "{} trajectories, probe |alpha| = {alpha}, read noise sigma = {read_noise}\nfinal raw occupations: [{}]\nfinal filtered signal: [{}]\n",
        trajectories.len(),
        fmt(raw.last().map_or(&[][..], |v| v)),
        fmt(filtered.last().map_or(&[][..], |v| v)),
    ))
}

fn validate(config: &RunConfig, path: &Path) -> Result<(String, bool)> {
    let seed = config.seed().unwrap_or(1);
    let cases = standard_cases(seed)?;
    let reports = cases.par_iter().map(compare_with_oracle).collect::<Result<Vec<_>>>()?;
    let header = "case,sites,cutoff,occupation_err,moment_err,leak,trace_err,pass\n";
    let mut csv = String::from(header);
    let mut s = String::new();
    for r in &reports {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            r.name, r.sites, r.cutoff, r.max_occupation_error, r.max_moment_error, r.max_leak, r.max_trace_error, r.pass()
        );
        let _ = writeln!(s, "{}", r.summary());
    }
    std::fs::write(path, csv).map_err(|e| Error::io(path, e))?;
    Ok((s, reports.iter().all(|r| r.pass())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::preset;

    #[test]
    fn evolve_writes_manifest_and_csv() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = preset("fig2_bottomleft").unwrap();
        let opts = RunOptions { out_dir: dir.path().to_path_buf(), threads: Some(2), source: "fig2_bottomleft".into() };
        let outcome = run_experiment(&mut cfg, &Command::Evolve, &opts).unwrap();
        let text = std::fs::read_to_string(&outcome.outputs[0]).unwrap();
        assert!(text.starts_with("t_ms,P1,P2,P3\n0.000000,1,0,0\n"));
        assert_eq!(text.lines().count(), 502);
        let manifest: RunManifest = serde_json::from_str(&std::fs::read_to_string(&outcome.manifest).unwrap()).unwrap();
        assert_eq!(manifest.command, "evolve");
        assert_eq!(manifest.config, cfg.file);
    }

    #[test]
    fn rates_overrides_land_in_the_echo() {
        let mut cfg = preset("fig2_topleft").unwrap();
        let cmd = Command::Rates { amplitudes_khz: Some(vec![0.0, 3.0]), kinds: Some(vec![NoiseKind::Independent]) };
        apply_overrides(&mut cfg, &cmd).unwrap();
        let run = cfg.file.run.as_ref().unwrap();
        assert_eq!(run.sweep_amplitudes_khz, Some(vec![0.0, 3.0]));
        assert_eq!(run.sweep_kinds, Some(vec![NoiseKindKey::Independent]));
    }

    #[test]
    fn noiseless_reconstruction_is_exact() {
        let traj = Trajectory {
            populations: vec![vec![1.25, 0.2]],
            moments: Some(vec![vec![Complex64::new(0.5, -0.5), Complex64::new(0.0, 0.0)]]),
        };
        let rec = reconstruct_trajectory(&traj, 1.0, None, 1, 0).unwrap();
        assert!((rec[0][0] - Complex64::new(0.5, -0.5)).norm() < 1e-15);
        assert!(rec[0][1].norm() < 1e-15);
    }
}
