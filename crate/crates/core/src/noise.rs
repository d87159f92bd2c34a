//! Piecewise-constant stochastic frequency shifts (engineered dephasing).
//!
//! A shift pattern is held fixed for one dwell interval and then redrawn.
//! For the standing-wave kind every ion sees `2A sin^2(k z_j + phi)` with a
//! common random phase `phi`; choosing `lambda = 8d/(2n+1)` makes nearest
//! neighbours uncorrelated and next-nearest neighbours anticorrelated.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Random stream used by one trajectory.
pub type TrajectoryRng = ChaCha8Rng;

/// Independent stream `index` of the family identified by `master_seed`.
///
/// ChaCha is counter based, so stream `i` does not depend on how many other
/// streams were created or in which order they are consumed.
pub fn trajectory_rng(master_seed: u64, index: u64) -> TrajectoryRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NoiseKind {
    None,
    StandingWave,
    Independent,
    /// One standing-wave draw held for the whole run.
    Static,
}

impl NoiseKind {
    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::None => "none",
            NoiseKind::StandingWave => "standing_wave",
            NoiseKind::Independent => "independent",
            NoiseKind::Static => "static",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(NoiseKind::None),
            "standing-wave" | "standing_wave" => Some(NoiseKind::StandingWave),
            "independent" => Some(NoiseKind::Independent),
            "static" => Some(NoiseKind::Static),
            _ => None,
        }
    }
}

impl std::fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    /// `A_noise` (rad/s); shifts lie in `[0, 2A]`.
    pub amplitude: f64,
    /// `n` in `lambda_z = 8d / (2n + 1)`.
    pub lambda_ratio_n: u32,
    /// Dwell time of one shift pattern (s).
    pub dwell: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn none(dwell: f64) -> Self {
        NoiseSpec { kind: NoiseKind::None, amplitude: 0.0, lambda_ratio_n: 0, dwell, seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude >= 0.0) || !self.amplitude.is_finite() {
            return Err(Error::Domain(format!("noise amplitude must be >= 0, got {}", self.amplitude)));
        }
        if !(self.dwell > 0.0) || !self.dwell.is_finite() {
            return Err(Error::Domain(format!("dwell time must be > 0, got {}", self.dwell)));
        }
        Ok(())
    }

    /// Axial standing-wave wavelength for ion spacing `d`.
    pub fn standing_wavelength(&self, spacing: f64) -> f64 {
        8.0 * spacing / (2.0 * self.lambda_ratio_n as f64 + 1.0)
    }
}

/// Draws shift patterns for a fixed set of ion positions.
#[derive(Debug, Clone)]
pub struct ShiftSampler {
    kind: NoiseKind,
    amplitude: f64,
    /// `2 pi / lambda_z`
    wavenumber: f64,
    positions: Vec<f64>,
}

impl ShiftSampler {
    pub fn new(spec: &NoiseSpec, positions: &[f64]) -> Result<Self> {
        spec.validate()?;
        if positions.is_empty() {
            return Err(Error::Contract("noise sampler needs ion positions".into()));
        }
        let n = positions.len();
        let spacing = if n > 1 { (positions[n - 1] - positions[0]) / (n - 1) as f64 } else { 0.0 };
        let wavenumber = match spec.kind {
            NoiseKind::StandingWave | NoiseKind::Static if n > 1 => {
                if !(spacing > 0.0) {
                    return Err(Error::Contract("standing-wave noise needs distinct ion positions".into()));
                }
                2.0 * PI / spec.standing_wavelength(spacing)
            }
            _ => 0.0,
        };
        Ok(ShiftSampler { kind: spec.kind, amplitude: spec.amplitude, wavenumber, positions: positions.to_vec() })
    }

    pub fn n_ions(&self) -> usize {
        self.positions.len()
    }

    /// One shift pattern `dw_j` (rad/s).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let two_a = 2.0 * self.amplitude;
        match self.kind {
            NoiseKind::None => vec![0.0; self.positions.len()],
            NoiseKind::StandingWave | NoiseKind::Static => {
                let phase = 2.0 * PI * rng.random::<f64>();
                self.positions
                    .iter()
                    .map(|z| two_a * (self.wavenumber * z + phase).sin().powi(2))
                    .collect()
            }
            NoiseKind::Independent => {
                self.positions.iter().map(|_| two_a * (2.0 * PI * rng.random::<f64>()).sin().powi(2)).collect()
            }
        }
    }
}

/// Frequency shifts held over `[start, end)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftSample {
    pub shifts: Vec<f64>,
    pub start: f64,
    pub end: f64,
}

impl ShiftSample {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

/// Single draw of a shift pattern; the interval is left as `[0, dwell)`.
pub fn sample_shifts<R: Rng + ?Sized>(spec: &NoiseSpec, positions: &[f64], rng: &mut R) -> Result<ShiftSample> {
    let sampler = ShiftSampler::new(spec, positions)?;
    Ok(ShiftSample { shifts: sampler.sample(rng), start: 0.0, end: spec.dwell })
}

/// Number of dwell intervals needed to cover `t_total`; a last partial
/// interval counts as one.
pub fn interval_count(t_total: f64, dwell: f64) -> usize {
    let ratio = t_total / dwell;
    let nearest = ratio.round();
    if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest as usize
    } else {
        ratio.ceil() as usize
    }
}

/// Lazily generated sequence of [`ShiftSample`]s covering `[0, t_total)`.
#[derive(Debug, Clone)]
pub struct NoiseProcess {
    sampler: ShiftSampler,
    rng: TrajectoryRng,
    dwell: f64,
    t_total: f64,
    n_intervals: usize,
    next: usize,
    held: Option<Vec<f64>>,
}

impl NoiseProcess {
    pub fn n_intervals(&self) -> usize {
        self.n_intervals
    }

    pub fn t_total(&self) -> f64 {
        self.t_total
    }

    /// Collects the remaining samples; used to replay one realisation in
    /// several engines.
    pub fn record(self) -> Vec<ShiftSample> {
        self.collect()
    }
}

impl Iterator for NoiseProcess {
    type Item = ShiftSample;

    fn next(&mut self) -> Option<ShiftSample> {
        if self.next >= self.n_intervals {
            return None;
        }
        let i = self.next;
        self.next += 1;
        let start = i as f64 * self.dwell;
        let end = if i + 1 == self.n_intervals { self.t_total } else { (i + 1) as f64 * self.dwell };
        let shifts = match self.sampler.kind {
            NoiseKind::Static => {
                if self.held.is_none() {
                    self.held = Some(self.sampler.sample(&mut self.rng));
                }
                self.held.clone().unwrap()
            }
            _ => self.sampler.sample(&mut self.rng),
        };
        Some(ShiftSample { shifts, start, end })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.n_intervals - self.next;
        (left, Some(left))
    }
}

impl ExactSizeIterator for NoiseProcess {}

/// Noise process seeded directly from `spec.seed`.
pub fn make_process(spec: &NoiseSpec, positions: &[f64], t_total: f64) -> Result<NoiseProcess> {
    make_process_with_rng(spec, positions, t_total, trajectory_rng(spec.seed, 0))
}

/// Noise process drawing from an explicit stream, e.g. one trajectory of an
/// ensemble.
pub fn make_process_with_rng(
    spec: &NoiseSpec,
    positions: &[f64],
    t_total: f64,
    rng: TrajectoryRng,
) -> Result<NoiseProcess> {
    if !(t_total > 0.0) || !t_total.is_finite() {
        return Err(Error::Domain(format!("run duration must be > 0, got {t_total}")));
    }
    let sampler = ShiftSampler::new(spec, positions)?;
    Ok(NoiseProcess {
        sampler,
        rng,
        dwell: spec.dwell,
        t_total,
        n_intervals: interval_count(t_total, spec.dwell),
        next: 0,
        held: None,
    })
}
