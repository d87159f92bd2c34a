use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use iontransport_core::config::{load_config, preset, preset_text, RunConfig, PRESETS};
use iontransport_core::noise::NoiseKind;
use iontransport_core::runner::{run_experiment, Command, RunOptions};

/// Noise-induced phonon transport in trapped-ion chains.
#[derive(Parser, Debug)]
#[command(name = "iontransport", version, about)]
struct Cli {
    /// Configuration file (TOML, or a manifest.json from an earlier run).
    #[arg(long, global = true, env = "IONTRANSPORT_CONFIG")]
    config: Option<PathBuf>,
    /// Shipped preset name.
    #[arg(long, global = true, env = "IONTRANSPORT_PRESET")]
    preset: Option<String>,
    /// Master seed; overrides `noise.seed`.
    #[arg(long, global = true, env = "IONTRANSPORT_SEED")]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "IONTRANSPORT_THREADS")]
    threads: Option<usize>,
    /// Output directory (default: `output.dir` from the config, else `out`).
    #[arg(long, global = true, env = "IONTRANSPORT_OUT")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args, Debug, Clone)]
struct Source {
    /// Preset name, as an alternative to `--preset`.
    name: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Print the chain model.
    Chain(Source),
    /// Run an ensemble and write population time series.
    Evolve(Source),
    /// Sweep the noise amplitude and fit equilibration rates.
    Rates {
        #[command(flatten)]
        source: Source,
        /// Comma-separated amplitudes in kHz.
        #[arg(long, value_delimiter = ',')]
        amplitudes: Option<Vec<f64>>,
        /// Comma-separated noise kinds (standing_wave, independent, static, none).
        #[arg(long, value_delimiter = ',', value_parser = parse_kind)]
        kinds: Option<Vec<NoiseKind>>,
    },
    /// Evaluate the Raman drive: shift amplitude, cancellation detuning, validity.
    Laser(Source),
    /// Replay an ensemble through the displacement readout.
    Measure {
        #[command(flatten)]
        source: Source,
        /// Ensemble CSV written by `evolve` with `output.write_trajectories`.
        #[arg(long)]
        ensemble: Option<PathBuf>,
        /// Probe displacement |alpha|.
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        /// Standard deviation of additive read noise on each occupation reading.
        #[arg(long, default_value_t = 0.0)]
        read_noise: f64,
    },
    /// Compare the Gaussian engine with the Fock-space oracle.
    Validate(Source),
    /// List the shipped presets, or print one.
    Presets { name: Option<String> },
}

fn parse_kind(s: &str) -> Result<NoiseKind, String> {
    NoiseKind::parse(s).ok_or_else(|| format!("unknown noise kind {s:?}"))
}

fn resolve(cli: &Cli, positional: Option<&str>, required: bool) -> Result<(RunConfig, String), String> {
    let named = positional.or(cli.preset.as_deref());
    let (mut config, source) = match (&cli.config, named) {
        (Some(_), Some(_)) => return Err("give either --config or a preset, not both".into()),
        (Some(path), None) => (load_config(path).map_err(|e| e.to_string())?, path.display().to_string()),
        (None, Some(name)) => (preset(name).map_err(|e| e.to_string())?, name.to_string()),
        (None, None) if required => return Err("no configuration: pass --config <file> or a preset name".into()),
        (None, None) => (RunConfig::from_file(Default::default()).map_err(|e| e.to_string())?, "defaults".into()),
    };
    if let Some(seed) = cli.seed {
        config.set_seed(seed);
    }
    Ok((config, source))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();

    let (command, source, required) = match &cli.command {
        Cmd::Presets { name } => {
            match name {
                Some(n) => match preset_text(n) {
                    Some(text) => print!("{text}"),
                    None => {
                        eprintln!("error: unknown preset {n:?}");
                        return ExitCode::FAILURE;
                    }
                },
                None => PRESETS.iter().for_each(|(n, _)| println!("{n}")),
            }
            return ExitCode::SUCCESS;
        }
        Cmd::Chain(s) => (Command::Chain, s.clone(), true),
        Cmd::Evolve(s) => (Command::Evolve, s.clone(), true),
        Cmd::Rates { source, amplitudes, kinds } => {
            (Command::Rates { amplitudes_khz: amplitudes.clone(), kinds: kinds.clone() }, source.clone(), true)
        }
        Cmd::Laser(s) => (Command::Laser, s.clone(), true),
        Cmd::Measure { source, ensemble, alpha, read_noise } => (
            Command::Measure { ensemble: ensemble.clone(), alpha: *alpha, read_noise: *read_noise },
            source.clone(),
            ensemble.is_none(),
        ),
        Cmd::Validate(s) => (Command::Validate, s.clone(), false),
    };

    let (mut config, source) = match resolve(&cli, source.name.as_deref(), required) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let out_dir = cli
        .out
        .clone()
        .or_else(|| config.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let opts = RunOptions { out_dir, threads: cli.threads, source };

    match run_experiment(&mut config, &command, &opts) {
        Ok(outcome) => {
            print!("{}", outcome.report);
            for p in &outcome.outputs {
                println!("wrote {}", p.display());
            }
            if outcome.success {
                ExitCode::SUCCESS
            } else {
                eprintln!("{}: check did not pass", command.name());
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
