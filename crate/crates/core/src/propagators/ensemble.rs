use num_complex::Complex64;
use rayon::prelude::*;

use super::gaussian::gaussian_trajectory;
use super::single::single_trajectory;
use super::{BathSpec, GaussianState, SingleExcitationState, TimeGrid, TimeSeries, Trajectory};
use crate::chain::ChainModel;
use crate::error::{Error, Result};
use crate::noise::{make_process_with_rng, trajectory_rng, NoiseSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Engine {
    SingleExcitation,
    Gaussian,
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Engine::SingleExcitation => "single_excitation",
            Engine::Gaussian => "gaussian",
        }
    }
}

/// Initial state; site indices are 0-based.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialCondition {
    /// One phonon on a site.
    Site(usize),
    /// Coherent state on a site, on top of the bath's initial occupation.
    Coherent { site: usize, alpha: Complex64 },
    /// Vacuum plus the bath's initial occupation.
    Vacuum,
}

impl InitialCondition {
    pub fn single_excitation(&self, n: usize) -> Result<SingleExcitationState> {
        match *self {
            InitialCondition::Site(j) => SingleExcitationState::localized(n, j),
            _ => Err(Error::Contract("the single-excitation engine needs a `site:k` initial state".into())),
        }
    }

    pub fn gaussian(&self, n: usize, bath: &BathSpec) -> Result<GaussianState> {
        let base = GaussianState::thermal(n, bath.init_occupation);
        match *self {
            InitialCondition::Coherent { site, alpha } => base.with_coherent(site, alpha),
            InitialCondition::Vacuum => Ok(base),
            InitialCondition::Site(_) => {
                Err(Error::Contract("a single-phonon Fock state is not Gaussian; use `coherent:k:alpha`".into()))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleSetup {
    /// `noise.seed` is the master seed; trajectory `i` uses stream `i`.
    pub noise: NoiseSpec,
    pub bath: BathSpec,
    pub initial: InitialCondition,
    pub grid: TimeGrid,
    pub trajectories: usize,
    pub engine: Engine,
    /// Keep per-trajectory records in the result.
    pub keep_trajectories: bool,
}

#[derive(Debug, Clone)]
pub struct EnsembleResult {
    /// Trajectory mean; `filtered` is set for the Gaussian engine.
    pub mean: TimeSeries,
    /// Empty unless `keep_trajectories` was requested.
    pub trajectories: Vec<Trajectory>,
}

/// Runs independent noise realisations on the current rayon pool and
/// averages them. Output does not depend on the number of worker threads.
pub fn ensemble_run(model: &ChainModel, setup: &EnsembleSetup) -> Result<EnsembleResult> {
    if setup.trajectories == 0 {
        return Err(Error::Contract("an ensemble needs at least one trajectory".into()));
    }
    setup.noise.validate()?;
    setup.bath.validate()?;
    let n = model.n_ions();
    let t_end = setup.grid.end();

    let run_one = |index: usize| -> Result<Trajectory> {
        let rng = trajectory_rng(setup.noise.seed, index as u64);
        let noise = make_process_with_rng(&setup.noise, &model.positions, t_end, rng)?;
        match setup.engine {
            Engine::SingleExcitation => {
                let psi0 = setup.initial.single_excitation(n)?;
                single_trajectory(model, noise, &setup.grid, &psi0)
            }
            Engine::Gaussian => {
                let s0 = setup.initial.gaussian(n, &setup.bath)?;
                gaussian_trajectory(model, noise, &setup.bath, &s0, &setup.grid)
            }
        }
    };

    let results: Vec<Result<Trajectory>> = (0..setup.trajectories).into_par_iter().map(run_one).collect();
    let mut trajectories = Vec::with_capacity(results.len());
    for r in results {
        trajectories.push(r?);
    }

    let populations: Vec<&Vec<Vec<f64>>> = trajectories.iter().map(|t| &t.populations).collect();
    let filtered = match setup.engine {
        Engine::Gaussian => {
            let sq: Vec<Vec<Vec<f64>>> = trajectories
                .iter()
                .map(|t| {
                    t.moments
                        .as_ref()
                        .map(|m| m.iter().map(|row| row.iter().map(|z| z.norm_sqr()).collect()).collect())
                        .unwrap_or_default()
                })
                .collect();
            Some(pairwise_mean(&sq.iter().collect::<Vec<_>>()))
        }
        Engine::SingleExcitation => None,
    };
    let mean = TimeSeries { times: setup.grid.times().to_vec(), populations: pairwise_mean(&populations), filtered };

    if !setup.keep_trajectories {
        trajectories.clear();
    }
    Ok(EnsembleResult { mean, trajectories })
}

/// Element-wise mean of equally shaped `[t][j]` tables, summed pairwise in
/// index order so the result is independent of how they were produced.
pub fn pairwise_mean(tables: &[&Vec<Vec<f64>>]) -> Vec<Vec<f64>> {
    if tables.is_empty() {
        return Vec::new();
    }
    let count = tables.len() as f64;
    let rows = tables[0].len();
    let mut column = vec![0.0; tables.len()];
    (0..rows)
        .map(|t| {
            let cols = tables[0][t].len();
            (0..cols)
                .map(|j| {
                    for (slot, table) in column.iter_mut().zip(tables) {
                        *slot = table[t][j];
                    }
                    pairwise_sum(&column) / count
                })
                .collect()
        })
        .collect()
}

fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}
