//! CSV files: one per quantity family, `t_ms` with six decimals and every
//! other float in shortest round-trip form.

use std::fs::File;
use std::path::Path;

use num_complex::Complex64;

use crate::analysis::RatePoint;
use crate::constants::to_khz;
use crate::error::{Error, Result};
use crate::propagators::{TimeSeries, Trajectory};

fn t_ms(t: f64) -> String {
    format!("{:.6}", t * 1e3)
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn numbered(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).map(move |j| format!("{prefix}{j}"))
}

fn write_table(path: &Path, header: Vec<String>, rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(&header).map_err(|e| Error::csv(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn time_table(path: &Path, prefix: &str, times: &[f64], values: &[Vec<f64>]) -> Result<()> {
    if times.len() != values.len() {
        return Err(Error::Contract("time column and values differ in length".into()));
    }
    let n = values.first().map_or(0, Vec::len);
    let header = std::iter::once("t_ms".to_string()).chain(numbered(prefix, n)).collect();
    let rows = times
        .iter()
        .zip(values)
        .map(|(t, row)| std::iter::once(t_ms(*t)).chain(row.iter().map(|v| v.to_string())).collect());
    write_table(path, header, rows)
}

/// `t_ms, P1, ..., PN`
pub fn write_populations(path: &Path, series: &TimeSeries) -> Result<()> {
    time_table(path, "P", &series.times, &series.populations)
}

/// `t_ms, ntr1, ..., ntrN`
pub fn write_filtered(path: &Path, times: &[f64], filtered: &[Vec<f64>]) -> Result<()> {
    time_table(path, "ntr", times, filtered)
}

/// `t_ms, n1, ..., nN, ntr1, ..., ntrN`
pub fn write_measurement(path: &Path, times: &[f64], raw: &[Vec<f64>], filtered: &[Vec<f64>]) -> Result<()> {
    if raw.len() != times.len() || filtered.len() != times.len() {
        return Err(Error::Contract("measurement columns differ in length".into()));
    }
    let n = raw.first().map_or(0, Vec::len);
    let header = std::iter::once("t_ms".to_string()).chain(numbered("n", n)).chain(numbered("ntr", n)).collect();
    let rows = (0..times.len()).map(|t| {
        std::iter::once(t_ms(times[t]))
            .chain(raw[t].iter().chain(&filtered[t]).map(|v| v.to_string()))
            .collect()
    });
    write_table(path, header, rows)
}

/// `amplitude_khz, kind, gamma_per_s, p_inf, residual`
pub fn write_rates(path: &Path, points: &[RatePoint]) -> Result<()> {
    let header = ["amplitude_khz", "kind", "gamma_per_s", "p_inf", "residual"].map(String::from).to_vec();
    let rows = points.iter().map(|p| {
        vec![
            to_khz(p.amplitude).to_string(),
            p.kind.name().to_string(),
            p.fit.gamma.to_string(),
            p.fit.p_inf.to_string(),
            p.fit.residual.to_string(),
        ]
    });
    write_table(path, header, rows)
}

/// Per-trajectory records: `traj, t_ms, n1.., mu1_re, mu1_im, ..`.
pub fn write_ensemble(path: &Path, times: &[f64], trajectories: &[Trajectory]) -> Result<()> {
    let n = trajectories.first().and_then(|t| t.populations.first()).map_or(0, Vec::len);
    let mut header: Vec<String> = vec!["traj".into(), "t_ms".into()];
    header.extend(numbered("n", n));
    for j in 1..=n {
        header.push(format!("mu{j}_re"));
        header.push(format!("mu{j}_im"));
    }
    let mut rows = Vec::new();
    for (k, traj) in trajectories.iter().enumerate() {
        let moments = traj
            .moments
            .as_ref()
            .ok_or_else(|| Error::Contract("ensemble records need first moments (Gaussian engine)".into()))?;
        for (t, time) in times.iter().enumerate() {
            let mut row = vec![k.to_string(), t_ms(*time)];
            row.extend(traj.populations[t].iter().map(|v| v.to_string()));
            for z in &moments[t] {
                row.push(z.re.to_string());
                row.push(z.im.to_string());
            }
            rows.push(row);
        }
    }
    write_table(path, header, rows.into_iter())
}

/// Reads a file written by [`write_ensemble`]; times come back in seconds.
pub fn read_ensemble(path: &Path) -> Result<(Vec<f64>, Vec<Trajectory>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let header = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    let n = header.iter().filter(|h| h.starts_with('n') && h[1..].parse::<usize>().is_ok()).count();
    if header.len() != 2 + 3 * n || n == 0 {
        return Err(Error::Config(format!("{}: not an ensemble file", path.display())));
    }
    let bad = |line: usize| Error::Config(format!("{}: malformed row {line}", path.display()));
    let mut times: Vec<f64> = Vec::new();
    let mut trajectories: Vec<Trajectory> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        let nums: Vec<f64> = record.iter().map(|s| s.parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|_| bad(line + 2))?;
        let k = nums[0] as usize;
        if k == trajectories.len() {
            trajectories.push(Trajectory { populations: Vec::new(), moments: Some(Vec::new()) });
        } else if k + 1 != trajectories.len() {
            return Err(bad(line + 2));
        }
        let traj = trajectories.last_mut().unwrap();
        let t = nums[1] * 1e-3;
        if k == 0 {
            times.push(t);
        } else if times.get(traj.populations.len()).is_none_or(|&t0| (t0 - t).abs() > 1e-9) {
            return Err(bad(line + 2));
        }
        traj.populations.push(nums[2..2 + n].to_vec());
        let mu = (0..n).map(|j| Complex64::new(nums[2 + n + 2 * j], nums[3 + n + 2 * j])).collect();
        traj.moments.as_mut().unwrap().push(mu);
    }
    if trajectories.iter().any(|t| t.populations.len() != times.len()) {
        return Err(Error::Config(format!("{}: trajectories have different lengths", path.display())));
    }
    Ok((times, trajectories))
}
