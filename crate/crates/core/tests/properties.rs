use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use iontransport_core::analysis::fit_relaxation;
use iontransport_core::chain::{build_model, equilibrium_positions, ChainSpec};
use iontransport_core::constants::isotope_mass_kg;
use iontransport_core::laser::{
    cancellation_detuning, raman_shift_amplitude, static_term_factor, LaserParams, DEFAULT_GAMMA,
};
use iontransport_core::propagators::GaussianState;
use iontransport_core::readout::{displace, measure, occupation_after_displacement, ReadNoise};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn gaussian_state() -> impl Strategy<Value = GaussianState> {
    (1usize..5).prop_flat_map(|n| {
        (prop::collection::vec((-3.0..3.0_f64, -3.0..3.0_f64), n), prop::collection::vec((-1.0..1.0_f64, -1.0..1.0_f64), n * n))
            .prop_map(move |(mu, a)| {
                let mu = DVector::from_iterator(n, mu.into_iter().map(|(r, i)| c(r, i)));
                let a = DMatrix::from_iterator(n, n, a.into_iter().map(|(r, i)| c(r, i)));
                GaussianState { mu, v: a.adjoint() * a }
            })
    })
}

proptest! {
    #[test]
    fn reconstruction_recovers_first_moment(state in gaussian_state(), alpha in 0.05..5.0_f64, pick in any::<usize>()) {
        let j = pick % state.n_sites();
        let rec = measure::<ChaCha8Rng>(&state, j, alpha, None).unwrap();
        prop_assert!((rec.moment - state.mu[j]).norm() < 1e-12 * (1.0 + state.v[(j, j)].re / alpha));
    }

    #[test]
    fn displaced_occupation_matches_displacement(state in gaussian_state(), re in -2.0..2.0_f64, im in -2.0..2.0_f64) {
        let alpha = c(re, im);
        let direct = displace(&state, 0, alpha).unwrap().occupation(0);
        let identity = occupation_after_displacement(&state, 0, alpha).unwrap();
        prop_assert!((direct - identity).abs() < 1e-12 * (1.0 + direct.abs()));
    }

    #[test]
    fn fit_rescales_with_time(gamma in 50.0..5000.0_f64, p in 0.05..1.0_f64, scale in 0.01..100.0_f64, wobble in 0.0..0.05_f64) {
        let times: Vec<f64> = (0..=400).map(|i| i as f64 * 25e-6).collect();
        let values: Vec<f64> =
            times.iter().enumerate().map(|(i, t)| p * -(-gamma * t).exp_m1() + wobble * p * (i as f64 * 0.7).sin()).collect();
        let base = fit_relaxation(&times, &values).unwrap();
        let stretched: Vec<f64> = times.iter().map(|t| t * scale).collect();
        let fit = fit_relaxation(&stretched, &values).unwrap();
        prop_assert!((fit.gamma * scale / base.gamma - 1.0).abs() < 1e-6, "{} vs {}", fit.gamma * scale, base.gamma);
        prop_assert!((fit.p_inf / base.p_inf - 1.0).abs() < 1e-6);
        if wobble == 0.0 {
            prop_assert!((base.gamma / gamma - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn shift_scales_with_intensity(fz in 0.0..1.0_f64, factor in 0.1..10.0_f64) {
        let p = quoted();
        let full = raman_shift_amplitude(&p, 1.0).unwrap();
        prop_assert!((raman_shift_amplitude(&p, fz).unwrap() - fz * full).abs() <= 1e-12 * full.abs());
        let brighter = LaserParams { omega2: p.omega2 * factor, ..p };
        prop_assert!((raman_shift_amplitude(&brighter, 1.0).unwrap() / full - factor * factor).abs() < 1e-9 * factor * factor);
    }

    #[test]
    fn cancellation_nulls_static_term(dlp_mhz in 1.0..50.0_f64, omega2_ghz in 0.5..5.0_f64, eta in 0.01..0.5_f64) {
        let p = LaserParams { delta_l_prime: mhz(dlp_mhz), omega2: 1e3 * mhz(omega2_ghz), eta_x: eta, ..quoted() };
        let at = p.at_cancellation().unwrap();
        prop_assert!(static_term_factor(&at).unwrap().abs() < 1e-12);
        prop_assert_eq!(at.delta, cancellation_detuning(p.omega2, p.delta_l_prime, eta, p.omega_x).unwrap());
    }

    #[test]
    fn equilibrium_balances_forces(n in 2usize..40) {
        let u = equilibrium_positions(n).unwrap();
        for j in 0..n {
            let coulomb: f64 = (0..n).filter(|&k| k != j).map(|k| (u[j] - u[k]).signum() / (u[j] - u[k]).powi(2)).sum();
            prop_assert!((u[j] - coulomb).abs() < 1e-9, "ion {}: {} vs {}", j, u[j], coulomb);
            prop_assert!((u[j] + u[n - 1 - j]).abs() < 1e-9);
        }
        prop_assert!(u.windows(2).all(|w| w[0] < w[1]));
    }
}

fn mhz(f: f64) -> f64 {
    2.0 * PI * f * 1e6
}

fn quoted() -> LaserParams {
    LaserParams {
        delta: 1e3 * mhz(100.0),
        omega1: mhz(200.0),
        omega2: mhz(2000.0),
        delta_l_prime: mhz(10.0),
        delta_l: None,
        eta_x: 0.3,
        omega_x: 2.0 * PI * 400e3,
        gamma: DEFAULT_GAMMA,
    }
}

#[test]
fn small_chains_have_closed_form_positions() {
    let two = equilibrium_positions(2).unwrap();
    assert!((two[1] - 0.25f64.cbrt()).abs() < 1e-12);
    let three = equilibrium_positions(3).unwrap();
    assert!(three[1].abs() < 1e-12);
    assert!((three[2] - 1.25f64.cbrt()).abs() < 1e-12);
}

#[test]
fn couplings_follow_dipole_law() {
    // c_jk = e^2 / (8 pi eps0 m sqrt(w_j w_k) d_jk^3) for equal masses.
    let (e, eps0) = (1.602_176_634e-19, 8.854_187_812_8e-12);
    let m = isotope_mass_kg("40Ca").unwrap();
    let freqs: Vec<f64> = [431.0, 437.0, 440.0, 446.0, 452.0].iter().map(|f| 2.0 * PI * f * 1e3).collect();
    let model = build_model(&ChainSpec::explicit(2.0 * PI * 40e3, m, freqs.clone(), true)).unwrap();
    for j in 0..5 {
        assert_eq!(model.hopping[(j, j)], freqs[j]);
        for k in 0..5 {
            if j == k {
                continue;
            }
            let d = (model.positions[j] - model.positions[k]).abs();
            let expected = e * e / (8.0 * PI * eps0 * m * (freqs[j] * freqs[k]).sqrt() * d.powi(3));
            assert!((model.couplings[(j, k)] / expected - 1.0).abs() < 1e-9);
            assert_eq!(model.hopping[(j, k)], model.hopping[(k, j)]);
        }
    }
}

#[test]
fn read_noise_propagates_to_moment() {
    let state = GaussianState::thermal(2, 0.4).with_coherent(1, c(0.3, -0.2)).unwrap();
    let (sigma, alpha) = (0.05, 1.5);
    let rn = ReadNoise::new(sigma).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let count = 20_000;
    let draws: Vec<Complex64> =
        (0..count).map(|_| measure(&state, 1, alpha, Some((rn, &mut rng))).unwrap().moment - state.mu[1]).collect();
    let expected = rn.moment_std(alpha);
    for part in [|z: &Complex64| z.re, |z: &Complex64| z.im] {
        let xs: Vec<f64> = draws.iter().map(part).collect();
        let mean = xs.iter().sum::<f64>() / count as f64;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (count - 1) as f64).sqrt();
        assert!(mean.abs() < 4.0 * expected / (count as f64).sqrt());
        assert!((sd / expected - 1.0).abs() < 0.03, "{sd} vs {expected}");
    }
    assert!(ReadNoise::new(-1.0).is_err());
}
