#![allow(clippy::needless_range_loop)]

use num_complex::Complex64;
use proptest::prelude::*;

use iontransport_core::chain::ChainModel;
use iontransport_core::fock::{evolve_master, FockDensityMatrix, FockSpace};
use iontransport_core::noise::{make_process, make_process_with_rng, trajectory_rng, NoiseKind, NoiseSpec};
use iontransport_core::propagators::{
    ensemble_run, pairwise_mean, run_gaussian_trajectory, run_single_excitation_trajectory, BathSpec, Engine,
    EnsembleSetup, GaussianState, InitialCondition, SingleExcitationState, TimeGrid,
};
use iontransport_core::validation::reference_chain;

const KHZ: f64 = 2.0 * std::f64::consts::PI * 1e3;

fn noise(kind: NoiseKind, amp_khz: f64, seed: u64) -> NoiseSpec {
    NoiseSpec { kind, amplitude: amp_khz * KHZ, lambda_ratio_n: 4, dwell: 20e-6, seed }
}

fn chain(freqs: &[f64]) -> ChainModel {
    reference_chain(freqs).unwrap()
}

fn quiet() -> BathSpec {
    BathSpec { kappa: 0.0, nbar: 0.0, init_occupation: 0.0 }
}

#[test]
fn two_site_rabi_oscillation() {
    let model = chain(&[435.0, 439.5]);
    let c = model.couplings[(0, 1)];
    let detuning = model.local_frequencies[0] - model.local_frequencies[1];
    let grid = TimeGrid::uniform(2e-3, 5e-6).unwrap();
    let rec = make_process(&NoiseSpec::none(20e-6), &model.positions, grid.end()).unwrap();
    let psi0 = SingleExcitationState::localized(2, 0).unwrap();
    let series = run_single_excitation_trajectory(&model, rec, &grid, &psi0).unwrap();
    let omega = (4.0 * c * c + detuning * detuning).sqrt();
    for (t, p) in series.times.iter().zip(&series.populations) {
        let expected = 4.0 * c * c / (omega * omega) * (omega * t / 2.0).sin().powi(2);
        assert!((p[1] - expected).abs() < 1e-10, "t={t}: {} vs {expected}", p[1]);
    }
}

#[test]
fn oracle_matches_single_excitation_without_bath() {
    let model = chain(&[435.0, 439.5, 445.0]);
    let spec = noise(NoiseKind::StandingWave, 3.0, 17);
    let grid = TimeGrid::uniform(0.3e-3, 10e-6).unwrap();
    let samples = make_process(&spec, &model.positions, grid.end()).unwrap().record();
    let psi0 = SingleExcitationState::localized(3, 0).unwrap();
    let engine = run_single_excitation_trajectory(&model, samples.clone(), &grid, &psi0).unwrap();
    let rho0 = FockDensityMatrix::single_excitation(FockSpace::new(3, 2).unwrap(), 0).unwrap();
    let oracle = evolve_master(&model, &samples, &quiet(), &rho0, &grid).unwrap();
    for (a, b) in engine.populations.iter().zip(&oracle.occupations) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-8, "{x} vs {y}");
        }
    }
}

#[test]
fn bath_relaxes_total_occupation() {
    // Hopping conserves the total, so every site feels the same relaxation:
    // N_tot(t) = N nbar + (N_tot(0) - N nbar) exp(-2 kappa t).
    let model = chain(&[435.0, 439.5, 445.0]);
    let bath = BathSpec { kappa: 400.0, nbar: 0.8, init_occupation: 0.1 };
    let grid = TimeGrid::uniform(4e-3, 50e-6).unwrap();
    let rec = make_process(&noise(NoiseKind::Independent, 5.0, 2), &model.positions, grid.end()).unwrap();
    let s0 = GaussianState::thermal(3, 0.1).with_coherent(1, Complex64::new(0.6, -0.4)).unwrap();
    let n0 = s0.total_occupation();
    let (series, _) = run_gaussian_trajectory(&model, rec, &bath, &s0, &grid).unwrap();
    for (t, total) in series.times.iter().zip(series.totals()) {
        let expected = 3.0 * bath.nbar + (n0 - 3.0 * bath.nbar) * (-2.0 * bath.kappa * t).exp();
        assert!((total - expected).abs() < 1e-10, "t={t}: {total} vs {expected}");
    }
}

#[test]
fn ensemble_mean_is_the_average_of_its_trajectories() {
    let model = chain(&[435.0, 439.5, 445.0]);
    let grid = TimeGrid::uniform(1e-3, 20e-6).unwrap();
    let setup = EnsembleSetup {
        noise: noise(NoiseKind::StandingWave, 3.0, 23),
        bath: quiet(),
        initial: InitialCondition::Site(0),
        grid: grid.clone(),
        trajectories: 7,
        engine: Engine::SingleExcitation,
        keep_trajectories: true,
    };
    let run = ensemble_run(&model, &setup).unwrap();
    let psi0 = SingleExcitationState::localized(3, 0).unwrap();
    let manual: Vec<Vec<Vec<f64>>> = (0..7)
        .map(|i| {
            let rec = make_process_with_rng(&setup.noise, &model.positions, grid.end(), trajectory_rng(23, i)).unwrap();
            run_single_excitation_trajectory(&model, rec, &grid, &psi0).unwrap().populations
        })
        .collect();
    for (kept, m) in run.trajectories.iter().zip(&manual) {
        assert_eq!(&kept.populations, m);
    }
    let mean = pairwise_mean(&manual.iter().collect::<Vec<_>>());
    assert_eq!(run.mean.populations, mean);
    for t in 0..grid.len() {
        let naive: f64 = manual.iter().map(|m| m[t][2]).sum::<f64>() / 7.0;
        assert!((naive - mean[t][2]).abs() < 1e-15);
    }
}

#[test]
fn ensemble_does_not_depend_on_thread_count() {
    let model = chain(&[435.0, 439.5, 445.0]);
    let setup = EnsembleSetup {
        noise: noise(NoiseKind::Independent, 2.0, 4),
        bath: BathSpec { kappa: 50.0, nbar: 2.0, init_occupation: 0.3 },
        initial: InitialCondition::Coherent { site: 0, alpha: Complex64::new(1.0, 0.0) },
        grid: TimeGrid::uniform(1e-3, 20e-6).unwrap(),
        trajectories: 37,
        engine: Engine::Gaussian,
        keep_trajectories: false,
    };
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| ensemble_run(&model, &setup).unwrap())
    };
    let (a, b) = (run(1), run(5));
    assert_eq!(a.mean, b.mean);
}

#[test]
fn noiseless_ensemble_equals_one_trajectory() {
    let model = chain(&[435.0, 439.5, 445.0]);
    let grid = TimeGrid::uniform(1e-3, 20e-6).unwrap();
    let mut setup = EnsembleSetup {
        noise: NoiseSpec::none(20e-6),
        bath: quiet(),
        initial: InitialCondition::Site(1),
        grid: grid.clone(),
        trajectories: 1,
        engine: Engine::SingleExcitation,
        keep_trajectories: false,
    };
    let one = ensemble_run(&model, &setup).unwrap().mean;
    setup.trajectories = 16;
    let many = ensemble_run(&model, &setup).unwrap().mean;
    for (a, b) in one.populations.iter().zip(&many.populations) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-14);
        }
    }
}

#[test]
fn invalid_inputs_are_rejected() {
    let model = chain(&[435.0, 439.5, 445.0]);
    let grid = TimeGrid::uniform(1e-3, 20e-6).unwrap();
    let base = EnsembleSetup {
        noise: noise(NoiseKind::StandingWave, 3.0, 1),
        bath: quiet(),
        initial: InitialCondition::Site(0),
        grid,
        trajectories: 0,
        engine: Engine::SingleExcitation,
        keep_trajectories: false,
    };
    assert!(ensemble_run(&model, &base).is_err());
    let fock_in_gaussian = EnsembleSetup { trajectories: 2, engine: Engine::Gaussian, ..base.clone() };
    assert!(ensemble_run(&model, &fock_in_gaussian).is_err());
    let bad_bath = EnsembleSetup { trajectories: 2, bath: BathSpec { kappa: -1.0, ..quiet() }, ..base.clone() };
    assert!(ensemble_run(&model, &bad_bath).is_err());
    assert!(TimeGrid::new(vec![0.0, 2e-6, 1e-6]).is_err());
    assert!(SingleExcitationState::localized(3, 3).is_err());
}

fn khz_vec(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(420.0..460.0_f64, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn single_excitation_conserves_norm(
        freqs in (2usize..6).prop_flat_map(khz_vec),
        amp in 0.0..20.0_f64,
        seed in any::<u64>(),
        kind in 0usize..3,
    ) {
        let kind = [NoiseKind::StandingWave, NoiseKind::Independent, NoiseKind::Static][kind];
        let model = chain(&freqs);
        let n = freqs.len();
        let grid = TimeGrid::uniform(2e-3, 20e-6).unwrap();
        let rec = make_process(&noise(kind, amp, seed), &model.positions, grid.end()).unwrap();
        let psi0 = SingleExcitationState::localized(n, seed as usize % n).unwrap();
        let series = run_single_excitation_trajectory(&model, rec, &grid, &psi0).unwrap();
        for total in series.totals() {
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn coherent_state_tracks_single_excitation(
        freqs in (2usize..5).prop_flat_map(khz_vec),
        amp in 0.0..10.0_f64,
        seed in any::<u64>(),
    ) {
        // Linear dynamics: mu(t) = U(t) mu(0), the same map as one excitation.
        let model = chain(&freqs);
        let n = freqs.len();
        let grid = TimeGrid::uniform(1e-3, 20e-6).unwrap();
        let spec = noise(NoiseKind::StandingWave, amp, seed);
        let samples = make_process(&spec, &model.positions, grid.end()).unwrap().record();
        let psi0 = SingleExcitationState::localized(n, 0).unwrap();
        let single = run_single_excitation_trajectory(&model, samples.clone(), &grid, &psi0).unwrap();
        let g0 = GaussianState::vacuum(n).with_coherent(0, Complex64::new(1.0, 0.0)).unwrap();
        let (gauss, moments) = run_gaussian_trajectory(&model, samples, &quiet(), &g0, &grid).unwrap();
        for t in 0..grid.len() {
            for j in 0..n {
                prop_assert!((gauss.populations[t][j] - single.populations[t][j]).abs() < 1e-10);
                prop_assert!((moments[t][j].norm_sqr() - single.populations[t][j]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn thermal_background_is_inert_without_bath(occ in 0.0..50.0_f64, seed in any::<u64>()) {
        let model = chain(&[435.0, 439.5, 445.0]);
        let grid = TimeGrid::uniform(1e-3, 50e-6).unwrap();
        let rec = make_process(&noise(NoiseKind::Independent, 4.0, seed), &model.positions, grid.end()).unwrap();
        let (series, moments) =
            run_gaussian_trajectory(&model, rec, &quiet(), &GaussianState::thermal(3, occ), &grid).unwrap();
        for (row, mu) in series.populations.iter().zip(&moments) {
            for (p, m) in row.iter().zip(mu) {
                prop_assert!((p - occ).abs() <= 1e-10 * occ.max(1.0));
                prop_assert_eq!(m.norm(), 0.0);
            }
        }
    }
}
