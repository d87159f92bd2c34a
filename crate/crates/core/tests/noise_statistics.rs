use std::f64::consts::PI;

use proptest::prelude::*;

use iontransport_core::analysis::{correlation_stats, ks_statistic};
use iontransport_core::chain::equilibrium_positions;
use iontransport_core::noise::{make_process, make_process_with_rng, trajectory_rng, NoiseKind, NoiseSpec, ShiftSampler};

fn spec(kind: NoiseKind, amplitude: f64, n: u32, seed: u64) -> NoiseSpec {
    NoiseSpec { kind, amplitude, lambda_ratio_n: n, dwell: 20e-6, seed }
}

fn positions(n: usize, scale: f64) -> Vec<f64> {
    equilibrium_positions(n).unwrap().into_iter().map(|u| u * scale).collect()
}

fn draws(sampler: &ShiftSampler, seed: u64, count: usize) -> Vec<Vec<f64>> {
    let mut rng = trajectory_rng(seed, 0);
    (0..count).map(|_| sampler.sample(&mut rng)).collect()
}

#[test]
fn independent_shift_follows_arcsine_law() {
    let a = 2.0 * PI * 3e3;
    let sampler = ShiftSampler::new(&spec(NoiseKind::Independent, a, 4, 11), &[0.0]).unwrap();
    let xs: Vec<f64> = draws(&sampler, 11, 100_000).into_iter().map(|v| v[0]).collect();
    // 2A sin^2(theta) with theta uniform: P(x' <= x) = (2/pi) asin(sqrt(x / 2A)).
    let d = ks_statistic(&xs, |x| 2.0 / PI * (x / (2.0 * a)).clamp(0.0, 1.0).sqrt().asin());
    assert!(d < 0.01, "KS distance {d}");
}

#[test]
fn standing_wave_correlations_follow_the_wave() {
    // Four unevenly spaced ions; corr(j, k) = cos(2 k_z (z_j - z_k)).
    let z = positions(4, 38e-6);
    let count = 20_000;
    for n in [0u32, 1, 3] {
        let s = spec(NoiseKind::StandingWave, 1.0, n, 5 + n as u64);
        let sampler = ShiftSampler::new(&s, &z).unwrap();
        let stats = correlation_stats(&draws(&sampler, s.seed, count)).unwrap();
        let spacing = (z[3] - z[0]) / 3.0;
        let k = 2.0 * PI / s.standing_wavelength(spacing);
        for i in 0..4 {
            for j in i + 1..4 {
                let expected = (2.0 * k * (z[i] - z[j])).cos();
                let got = stats.correlation[i][j].unwrap();
                let se = (1.0 - expected * expected) / (count as f64).sqrt();
                assert!((got - expected).abs() <= 3.0 * se + 1e-9, "n={n} ({i},{j}): {got} vs {expected}");
            }
        }
    }
}

#[test]
fn independent_sites_are_uncorrelated() {
    let z = positions(5, 40e-6);
    let count = 20_000;
    let sampler = ShiftSampler::new(&spec(NoiseKind::Independent, 1.0, 4, 3), &z).unwrap();
    let stats = correlation_stats(&draws(&sampler, 3, count)).unwrap();
    let se = 1.0 / (count as f64).sqrt();
    for i in 0..5 {
        for j in i + 1..5 {
            let r = stats.correlation[i][j].unwrap();
            assert!(r.abs() <= 3.0 * se, "({i},{j}): {r}");
        }
    }
}

#[test]
fn static_noise_holds_one_pattern() {
    let z = positions(3, 38e-6);
    let samples: Vec<_> = make_process(&spec(NoiseKind::Static, 1e4, 4, 9), &z, 1e-3).unwrap().collect();
    assert_eq!(samples.len(), 50);
    assert!(samples.iter().all(|s| s.shifts == samples[0].shifts));
    assert!(samples[0].shifts.iter().any(|&x| x > 0.0));
}

#[test]
fn process_covers_the_run_with_partial_last_interval() {
    let z = positions(3, 38e-6);
    let p = make_process(&spec(NoiseKind::StandingWave, 1e4, 4, 1), &z, 0.105e-3).unwrap();
    assert_eq!(p.n_intervals(), 6);
    let samples: Vec<_> = p.collect();
    assert_eq!(samples[0].start, 0.0);
    assert!((samples[5].end - 0.105e-3).abs() < 1e-18);
    assert!((samples[5].duration() - 5e-6).abs() < 1e-12);
    for w in samples.windows(2) {
        assert_eq!(w[0].end, w[1].start);
    }
}

proptest! {
    #[test]
    fn shifts_stay_in_range(seed in any::<u64>(), amp in 0.0..1e6_f64, n in 0u32..12, kind in 0usize..3) {
        let kind = [NoiseKind::StandingWave, NoiseKind::Independent, NoiseKind::Static][kind];
        let z = positions(6, 40e-6);
        let sampler = ShiftSampler::new(&spec(kind, amp, n, seed), &z).unwrap();
        for v in draws(&sampler, seed, 50) {
            for x in v {
                prop_assert!((0.0..=2.0 * amp).contains(&x));
            }
        }
    }

    #[test]
    fn outer_ions_of_three_are_complementary(seed in any::<u64>(), n in 0u32..12, scale in 5e-6..80e-6_f64) {
        // Two spacings are (2n+1)/2 half-waves apart, so sin^2 turns into cos^2.
        let z = positions(3, scale);
        let amp = 1.0e4;
        let sampler = ShiftSampler::new(&spec(NoiseKind::StandingWave, amp, n, seed), &z).unwrap();
        for v in draws(&sampler, seed, 20) {
            prop_assert!((v[0] + v[2] - 2.0 * amp).abs() <= 1e-9 * amp);
        }
    }

    #[test]
    fn streams_are_reproducible(seed in any::<u64>(), index in any::<u64>()) {
        let z = positions(3, 38e-6);
        let s = spec(NoiseKind::Independent, 1.0, 4, seed);
        let a: Vec<_> = make_process_with_rng(&s, &z, 0.2e-3, trajectory_rng(seed, index)).unwrap().collect();
        let b: Vec<_> = make_process_with_rng(&s, &z, 0.2e-3, trajectory_rng(seed, index)).unwrap().collect();
        let c: Vec<_> = make_process_with_rng(&s, &z, 0.2e-3, trajectory_rng(seed, index ^ 1)).unwrap().collect();
        prop_assert_eq!(&a, &b);
        prop_assert_ne!(&a, &c);
    }
}
