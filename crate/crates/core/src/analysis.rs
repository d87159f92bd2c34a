//! Equilibration-rate fits, amplitude sweeps and noise statistics.

use rayon::prelude::*;

use crate::chain::ChainModel;
use crate::error::{Error, Result};
use crate::noise::NoiseKind;
use crate::propagators::{ensemble_run, EnsembleSetup, TimeSeries};

/// Points of the logarithmic scan that brackets the best rate.
const SCAN_POINTS: usize = 241;
/// The scan covers `[1e-3, 1e3] / T` for a record of length `T`.
const SCAN_DECADES: f64 = 3.0;

/// Least-squares fit of `p_inf (1 - exp(-gamma t))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    /// 1/s
    pub gamma: f64,
    pub p_inf: f64,
    /// Root-mean-square misfit.
    pub residual: f64,
    /// First and last fitted time (s).
    pub window: (f64, f64),
}

impl RateFit {
    /// `1 / gamma` (s).
    pub fn time_constant(&self) -> f64 {
        1.0 / self.gamma
    }
}

struct Problem<'a> {
    t: &'a [f64],
    y: &'a [f64],
    y_sq: f64,
}

impl Problem<'_> {
    /// Optimal `p` and the sum of squared residuals for a given rate.
    fn profile(&self, gamma: f64) -> (f64, f64) {
        let (mut yf, mut ff) = (0.0, 0.0);
        for (t, y) in self.t.iter().zip(self.y) {
            let f = -(-gamma * t).exp_m1();
            yf += y * f;
            ff += f * f;
        }
        if ff == 0.0 {
            return (0.0, self.y_sq);
        }
        let p = yf / ff;
        let sse = self.t.iter().zip(self.y).map(|(t, y)| (y - p * -(-gamma * t).exp_m1()).powi(2)).sum();
        (p, sse)
    }

    /// `sum (y - p f) t exp(-gamma t)` at the profiled `p`; zero at an interior optimum.
    fn gradient(&self, gamma: f64) -> f64 {
        let (p, _) = self.profile(gamma);
        self.t.iter().zip(self.y).map(|(t, y)| (y - p * -(-gamma * t).exp_m1()) * t * (-gamma * t).exp()).sum()
    }
}

/// Fits `y(t) = p_inf (1 - exp(-gamma t))` with `p_inf` eliminated in closed
/// form and `gamma` found by a log-grid scan, golden-section refinement and a
/// final secant step on the stationarity condition.
pub fn fit_relaxation(times: &[f64], values: &[f64]) -> Result<RateFit> {
    if times.len() != values.len() {
        return Err(Error::Contract("times and values differ in length".into()));
    }
    if times.len() < 3 {
        return Err(Error::Fit("need at least three points".into()));
    }
    if times.iter().chain(values).any(|x| !x.is_finite()) {
        return Err(Error::Fit("series contains non-finite values".into()));
    }
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &y| (a.min(y), b.max(y)));
    if hi - lo <= 1e-14 * hi.abs().max(lo.abs()).max(f64::MIN_POSITIVE) {
        return Err(Error::Fit("series is constant".into()));
    }
    let span = times.iter().cloned().fold(0.0, f64::max);
    if !(span > 0.0) {
        return Err(Error::Fit("series needs positive times".into()));
    }
    let problem = Problem { t: times, y: values, y_sq: values.iter().map(|y| y * y).sum() };
    let sse = |log_g: f64| problem.profile(log_g.exp()).1;

    let (a, b) = ((10f64.powf(-SCAN_DECADES) / span).ln(), (10f64.powf(SCAN_DECADES) / span).ln());
    let step = (b - a) / (SCAN_POINTS - 1) as f64;
    let grid: Vec<f64> = (0..SCAN_POINTS).map(|i| sse(a + step * i as f64)).collect();
    let best = (0..SCAN_POINTS).min_by(|&i, &j| grid[i].total_cmp(&grid[j])).unwrap_or(0);

    let mut left = a + step * best.saturating_sub(1) as f64;
    let mut right = a + step * (best + 1).min(SCAN_POINTS - 1) as f64;
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = right - ratio * (right - left);
    let mut x2 = left + ratio * (right - left);
    let (mut f1, mut f2) = (sse(x1), sse(x2));
    for _ in 0..200 {
        if right - left < 1e-12 {
            break;
        }
        if f1 <= f2 {
            right = x2;
            x2 = x1;
            f2 = f1;
            x1 = right - ratio * (right - left);
            f1 = sse(x1);
        } else {
            left = x1;
            x1 = x2;
            f1 = f2;
            x2 = left + ratio * (right - left);
            f2 = sse(x2);
        }
    }
    let mut gamma = (0.5 * (left + right)).exp();
    let mut best_sse = sse(gamma.ln());

    // Secant polish on the gradient; kept only where it lowers the misfit.
    let (mut g0, mut g1) = (gamma * (1.0 - 1e-6), gamma);
    let (mut d0, mut d1) = (problem.gradient(g0), problem.gradient(g1));
    for _ in 0..50 {
        if d1 == d0 || d1 == 0.0 {
            break;
        }
        let g2 = g1 - d1 * (g1 - g0) / (d1 - d0);
        if !(g2 > 0.0) || !g2.is_finite() || (g2 / gamma - 1.0).abs() > 0.1 {
            break;
        }
        let s2 = sse(g2.ln());
        if s2 <= best_sse {
            gamma = g2;
            best_sse = s2;
        }
        if (g2 - g1).abs() <= 1e-15 * g1 {
            break;
        }
        (g0, d0, g1) = (g1, d1, g2);
        d1 = problem.gradient(g1);
    }

    let (p_inf, sse) = problem.profile(gamma);
    let window = (times[0], *times.last().unwrap());
    Ok(RateFit { gamma, p_inf, residual: (sse / times.len() as f64).sqrt(), window })
}

/// Fits the population of `site` (0-based) over the whole series.
pub fn fit_equilibration_rate(series: &TimeSeries, site: usize) -> Result<RateFit> {
    if site >= series.n_sites() {
        return Err(Error::Contract(format!("site {} out of range", site + 1)));
    }
    fit_relaxation(&series.times, &series.site(site))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatePoint {
    /// rad/s
    pub amplitude: f64,
    pub kind: NoiseKind,
    pub fit: RateFit,
}

/// Runs the ensemble and the fit for every `(amplitude, kind)` pair, all
/// with the base setup's master seed. Rows come back amplitude-major in the
/// order given.
pub fn rate_sweep(
    model: &ChainModel,
    base: &EnsembleSetup,
    amplitudes: &[f64],
    kinds: &[NoiseKind],
    site: usize,
) -> Result<Vec<RatePoint>> {
    if amplitudes.is_empty() || kinds.is_empty() {
        return Err(Error::Contract("rate sweep needs at least one amplitude and one noise kind".into()));
    }
    let jobs: Vec<(f64, NoiseKind)> = amplitudes.iter().flat_map(|&a| kinds.iter().map(move |&k| (a, k))).collect();
    let results: Vec<Result<RatePoint>> = jobs
        .into_par_iter()
        .map(|(amplitude, kind)| {
            let mut setup = base.clone();
            setup.noise.amplitude = amplitude;
            setup.noise.kind = kind;
            setup.keep_trajectories = false;
            let run = ensemble_run(model, &setup)?;
            let fit = fit_equilibration_rate(&run.mean, site)?;
            log::info!("sweep point {:.3} kHz {kind}: gamma = {:.4} 1/s", amplitude / crate::constants::TWO_PI / 1e3, fit.gamma);
            Ok(RatePoint { amplitude, kind, fit })
        })
        .collect();
    results.into_iter().collect()
}

/// Sample means and Pearson correlations; `None` where a variance vanishes.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationStats {
    pub count: usize,
    pub mean: Vec<f64>,
    pub std_dev: Vec<f64>,
    pub correlation: Vec<Vec<Option<f64>>>,
}

/// `samples[s][j]`: sample `s` of component `j`.
pub fn correlation_stats(samples: &[Vec<f64>]) -> Result<CorrelationStats> {
    if samples.len() < 2 {
        return Err(Error::Contract("correlation statistics need at least two samples".into()));
    }
    let n = samples[0].len();
    if samples.iter().any(|s| s.len() != n) {
        return Err(Error::Contract("samples have different lengths".into()));
    }
    let count = samples.len();
    let mean: Vec<f64> = (0..n).map(|j| samples.iter().map(|s| s[j]).sum::<f64>() / count as f64).collect();
    let mut cov = vec![vec![0.0; n]; n];
    for s in samples {
        for j in 0..n {
            for k in j..n {
                cov[j][k] += (s[j] - mean[j]) * (s[k] - mean[k]);
            }
        }
    }
    for j in 0..n {
        for k in j..n {
            cov[j][k] /= (count - 1) as f64;
            cov[k][j] = cov[j][k];
        }
    }
    let std_dev: Vec<f64> = (0..n).map(|j| cov[j][j].sqrt()).collect();
    let scale: Vec<f64> = mean.iter().map(|m| m.abs().max(f64::MIN_POSITIVE)).collect();
    let correlation = (0..n)
        .map(|j| {
            (0..n)
                .map(|k| {
                    let (sj, sk) = (std_dev[j], std_dev[k]);
                    (sj > 1e-12 * scale[j] && sk > 1e-12 * scale[k]).then(|| (cov[j][k] / (sj * sk)).clamp(-1.0, 1.0))
                })
                .collect()
        })
        .collect();
    Ok(CorrelationStats { count, mean, std_dev, correlation })
}

/// Kolmogorov-Smirnov distance between the empirical distribution of
/// `samples` and `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter().enumerate().fold(0.0_f64, |d, (i, &x)| {
        let f = cdf(x);
        d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_model() {
        let times: Vec<f64> = (0..=500).map(|i| i as f64 * 20e-6).collect();
        let values: Vec<f64> = times.iter().map(|t| (1.0 - (-t / 5e-3).exp()) / 3.0).collect();
        let fit = fit_relaxation(&times, &values).unwrap();
        assert!((fit.gamma - 200.0).abs() < 1e-6, "{}", fit.gamma);
        assert!((fit.p_inf - 1.0 / 3.0).abs() < 1e-10);
        assert!(fit.residual < 1e-10);
        assert_eq!(fit.window, (0.0, 10e-3));
    }

    #[test]
    fn constant_series_is_an_error() {
        let t = [0.0, 1.0, 2.0, 3.0];
        assert!(matches!(fit_relaxation(&t, &[0.2; 4]), Err(Error::Fit(_))));
        assert!(fit_relaxation(&t[..2], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn correlation_of_constant_component_is_missing() {
        let samples: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 2.0, -(i as f64)]).collect();
        let stats = correlation_stats(&samples).unwrap();
        assert_eq!(stats.correlation[0][1], None);
        assert_eq!(stats.correlation[1][1], None);
        assert!((stats.correlation[0][2].unwrap() + 1.0).abs() < 1e-15);
        assert!((stats.correlation[0][0].unwrap() - 1.0).abs() < 1e-15);
        assert!(correlation_stats(&samples[..1]).is_err());
    }

    #[test]
    fn ks_of_uniform_grid() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        assert!((ks_statistic(&xs, |x| x) - 0.0005).abs() < 1e-12);
    }
}
