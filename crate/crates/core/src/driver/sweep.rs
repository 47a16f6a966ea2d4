//! One run per parameter value, with the trend quantities tabulated.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use super::config::RunConfig;
use super::run::{execute, write_outputs, DiagnosticsRow, RunOutcome, RunReport};
use crate::error::{Result, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SweepParam {
    /// Penalty strength `n`.
    #[serde(rename = "n")]
    Penalty,
    /// Artificial viscosity `eps`.
    #[serde(rename = "eps")]
    Eps,
    /// Artificial pressure `delta`.
    #[serde(rename = "delta")]
    Delta,
    /// Sharpness `N` of the regularized negative part.
    #[serde(rename = "N")]
    Sharpness,
    /// Grid spacing; sets `nx = lx / dx`, `ny = ly / dx`.
    #[serde(rename = "dx")]
    Dx,
    /// Fixed time step.
    #[serde(rename = "dt")]
    Dt,
}

impl FromStr for SweepParam {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "n" => Self::Penalty,
            "eps" | "epsilon" => Self::Eps,
            "delta" => Self::Delta,
            "N" => Self::Sharpness,
            "dx" => Self::Dx,
            "dt" => Self::Dt,
            other => return Err(format!("unknown sweep parameter {other:?}; expected n, eps, delta, N, dx or dt")),
        })
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Penalty => "n",
            Self::Eps => "eps",
            Self::Delta => "delta",
            Self::Sharpness => "N",
            Self::Dx => "dx",
            Self::Dt => "dt",
        };
        f.write_str(s)
    }
}

impl SweepParam {
    /// `base` with the parameter set to `value`.
    pub fn apply(self, base: &RunConfig, value: f64) -> Result<RunConfig> {
        let mut cfg = base.clone();
        match self {
            Self::Penalty => cfg.penalty.n = value,
            Self::Eps => cfg.penalty.eps = value,
            Self::Delta => cfg.penalty.delta = value,
            Self::Sharpness => cfg.penalty.sharpness = value,
            Self::Dx => {
                if !(value > 0.0) {
                    return Err(SimError::InvalidParams(format!("dx = {value} must be positive")));
                }
                cfg.grid.nx = (cfg.domain.lx / value).round() as usize;
                cfg.grid.ny = (cfg.domain.ly / value).round() as usize;
            }
            Self::Dt => cfg.time.dt = Some(value),
        }
        cfg.output.dir = base.output.dir.join(format!("sweep_{self}")).join(format!("{self}={value:e}"));
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepEntry {
    pub value: f64,
    pub report: RunReport,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct SweepTrends {
    /// Final rigidity measure per value.
    pub rigidity: Vec<f64>,
    pub rigidity_strictly_decreasing: bool,
    /// `rigidity[k] / rigidity[k + 1]`.
    pub rigidity_reduction: Vec<f64>,
    /// Largest interior pressure norms per value.
    pub pnorm_gamma: Vec<f64>,
    pub pnorm_beta: Vec<f64>,
    /// `max / min` of `pnorm_gamma` over the sweep.
    pub pnorm_spread: f64,
    /// `|residual(T)|` per value.
    pub energy_residual: Vec<f64>,
    /// `energy_residual[k] / energy_residual[k + 1]`.
    pub energy_residual_ratio: Vec<f64>,
    /// `|rho_k - rho_{k+1}|_{L1}` at the final time; absent when grids differ.
    pub cauchy_l1: Option<Vec<f64>>,
    pub cauchy_decreasing: Option<bool>,
    /// `max_t |E_a - E_b| / |E_b|` between the last two runs.
    pub energy_trajectory_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub param: SweepParam,
    pub values: Vec<f64>,
    pub entries: Vec<SweepEntry>,
    pub trends: SweepTrends,
}

pub fn check_monotone(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(SimError::InvalidParams("sweep needs at least one value".into()));
    }
    let up = values.windows(2).all(|w| w[1] > w[0]);
    let down = values.windows(2).all(|w| w[1] < w[0]);
    if values.iter().any(|v| !v.is_finite()) || !(up || down) {
        return Err(SimError::InvalidParams(format!("sweep values {values:?} are not strictly monotone")));
    }
    Ok(())
}

/// Runs in memory without writing anything.
pub fn sweep_outcomes(base: &RunConfig, param: SweepParam, values: &[f64]) -> Result<Vec<RunOutcome>> {
    check_monotone(values)?;
    let configs = values.iter().map(|&v| param.apply(base, v)).collect::<Result<Vec<_>>>()?;
    configs.par_iter().map(|c| execute(c, None)).collect()
}

/// Runs every value into its own subdirectory and writes `sweep.json`.
pub fn sweep(base: &RunConfig, param: SweepParam, values: &[f64]) -> Result<SweepReport> {
    check_monotone(values)?;
    let configs = values.iter().map(|&v| param.apply(base, v)).collect::<Result<Vec<_>>>()?;
    let outcomes = configs
        .par_iter()
        .map(|c| {
            let dir = c.output_dir();
            fs::create_dir_all(&dir)?;
            fs::write(dir.join("config.toml"), c.to_toml())?;
            let out = execute(c, Some(&dir))?;
            write_outputs(&dir, &out)?;
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let report = summarize(param, values, &outcomes);
    let dir = base.output_dir().join(format!("sweep_{param}"));
    write_json(&dir, &report)?;
    Ok(report)
}

fn write_json(dir: &Path, report: &SweepReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    let json = serde_json::to_string_pretty(report).map_err(|e| SimError::Io(e.to_string()))?;
    fs::write(dir.join("sweep.json"), json)?;
    Ok(())
}

pub fn summarize(param: SweepParam, values: &[f64], outcomes: &[RunOutcome]) -> SweepReport {
    let ratios = |xs: &[f64]| xs.windows(2).map(|w| w[0] / w[1]).collect::<Vec<_>>();
    let rigidity: Vec<f64> = outcomes.iter().map(|o| o.report.final_rigidity).collect();
    let pnorm_gamma: Vec<f64> = outcomes.iter().map(|o| o.report.max_pnorm_gamma).collect();
    let pnorm_beta: Vec<f64> = outcomes.iter().map(|o| o.report.max_pnorm_beta).collect();
    let energy_residual: Vec<f64> = outcomes.iter().map(|o| o.report.final_energy_residual.abs()).collect();
    let (lo, hi) = pnorm_gamma.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &p| (a.min(p), b.max(p)));
    let same_grid = outcomes.windows(2).all(|w| w[0].rho.grid == w[1].rho.grid);
    let cauchy_l1: Option<Vec<f64>> = same_grid.then(|| {
        outcomes
            .windows(2)
            .map(|w| {
                let v = w[0].rho.grid.cell_volume();
                w[0].rho.data.iter().zip(&w[1].rho.data).map(|(a, b)| v * (a - b).abs()).sum()
            })
            .collect()
    });
    let cauchy_decreasing = cauchy_l1.as_ref().map(|c| c.windows(2).all(|w| w[1] < w[0]));
    let energy_trajectory_gap = match outcomes {
        [.., a, b] => trajectory_gap(&a.diagnostics, &b.diagnostics),
        _ => 0.0,
    };
    let trends = SweepTrends {
        rigidity_strictly_decreasing: rigidity.windows(2).all(|w| w[1] < w[0]),
        rigidity_reduction: ratios(&rigidity),
        rigidity,
        pnorm_spread: if lo > 0.0 { hi / lo } else { f64::INFINITY },
        pnorm_gamma,
        pnorm_beta,
        energy_residual_ratio: ratios(&energy_residual),
        energy_residual,
        cauchy_l1,
        cauchy_decreasing,
        energy_trajectory_gap,
    };
    let entries =
        values.iter().zip(outcomes).map(|(&value, o)| SweepEntry { value, report: o.report.clone() }).collect();
    SweepReport { param, values: values.to_vec(), entries, trends }
}

/// `max_t |E_a(t) - E_b(t)| / |E_b(t)|` over the times of `b`, with `E_a`
/// linearly interpolated.
pub fn trajectory_gap(a: &[DiagnosticsRow], b: &[DiagnosticsRow]) -> f64 {
    let t_last = a.last().map_or(0.0, |r| r.t);
    b.iter()
        .filter(|r| r.t <= t_last)
        .map(|r| {
            let k = a.partition_point(|x| x.t < r.t);
            let ea = if k == 0 {
                a[0].energy
            } else {
                let (p, q) = (&a[k - 1], &a[k.min(a.len() - 1)]);
                if q.t > p.t {
                    p.energy + (q.energy - p.energy) * (r.t - p.t) / (q.t - p.t)
                } else {
                    q.energy
                }
            };
            (ea - r.energy).abs() / r.energy.abs()
        })
        .fold(0.0, f64::max)
}
