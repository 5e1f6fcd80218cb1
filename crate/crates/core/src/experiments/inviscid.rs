use serde::{Deserialize, Serialize};

use super::energy::{energy_distance, EnergyDistance};
use super::stats::{batch_means, integrated_autocorrelation_time, thin, MeanEstimate};
use crate::effective::{simulate_effective, QSource};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::rng;
use crate::sde::{simulate_full, Model, PathRecorder, SimConfig};

/// Thinning stride in units of the integrated autocorrelation time of `U`.
pub const THINNING_TAU_MULTIPLE: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InviscidConfig {
    /// Strictly descending, at least three values.
    pub eps_grid: Vec<f64>,
    pub full: SimConfig,
    pub effective: SimConfig,
    /// Extra full run `(eps, kappa)`, reported but not gated.
    pub kappa_probe: Option<(f64, f64)>,
}

impl InviscidConfig {
    pub fn validate(&self) -> Result<()> {
        if self.eps_grid.len() < 3 {
            return Err(Error::InvalidParameter {
                field: "eps_grid",
                reason: format!("needs at least 3 values, got {}", self.eps_grid.len()),
            });
        }
        if self.eps_grid.windows(2).any(|w| !(w[0] >= w[1])) || self.eps_grid.iter().any(|e| !(*e > 0.0)) {
            return Err(Error::InvalidParameter {
                field: "eps_grid",
                reason: "values must be positive and sorted descending".into(),
            });
        }
        self.full.validate()?;
        self.effective.validate()
    }
}

/// Thinned stationary `(U, V)` sample of a recorded path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarySample {
    pub points: Vec<[f64; 2]>,
    pub stride: usize,
    pub tau_int: f64,
    /// Batch-means `2 E[U - V]` over the unthinned series.
    pub twice_u_minus_v: MeanEstimate,
}

pub fn stationary_sample(rec: &PathRecorder) -> Result<StationarySample> {
    let u = rec.u_series();
    let v = rec.v_series();
    let tau = integrated_autocorrelation_time(&u);
    let stride = (THINNING_TAU_MULTIPLE * tau).ceil() as usize;
    let pts: Vec<[f64; 2]> = u.iter().zip(&v).map(|(a, b)| [*a, *b]).collect();
    let diff: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a - b).collect();
    Ok(StationarySample {
        points: thin(&pts, stride),
        stride,
        tau_int: tau,
        twice_u_minus_v: batch_means(&diff)?.scaled(2.0),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InviscidRow {
    pub eps: f64,
    pub kappa: f64,
    pub distance: EnergyDistance,
    pub mean_gap: f64,
    pub mean_gap_se: f64,
    pub n_samples: usize,
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InviscidReport {
    pub eps_grid: Vec<f64>,
    pub rows: Vec<InviscidRow>,
    pub effective_samples: usize,
    pub effective_twice_u_minus_v: MeanEstimate,
    /// First-to-last distance decrease exceeds one combined SE.
    pub monotone_flag: bool,
    pub mean_gap_decreasing: bool,
    pub kappa_probe: Option<InviscidRow>,
}

fn compare(
    eps: f64,
    kappa: f64,
    full: &StationarySample,
    eff: &StationarySample,
    seed: u64,
) -> Result<InviscidRow> {
    let distance = energy_distance(&full.points, &eff.points, seed)?;
    let gap = full.twice_u_minus_v.mean - eff.twice_u_minus_v.mean;
    Ok(InviscidRow {
        eps,
        kappa,
        distance,
        mean_gap: gap.abs(),
        mean_gap_se: full.twice_u_minus_v.se.hypot(eff.twice_u_minus_v.se),
        n_samples: full.points.len(),
        stride: full.stride,
    })
}

/// Full-system stationary samples along a descending `eps` grid compared
/// with one effective-diffusion sample.
pub fn inviscid_sweep(
    cfg: &InviscidConfig,
    model: &Model,
    q_source: &QSource,
    exec: Execution,
) -> Result<InviscidReport> {
    cfg.validate()?;
    let p = &model.params;
    let mut eff_rng = rng::stream(rng::derive_seed(cfg.effective.seed, 0xeff), 0);
    let eff_rec = simulate_effective(&cfg.effective, p, &model.spectrum, q_source, None, &mut eff_rng)?;
    let eff = stationary_sample(&eff_rec)?;

    let mut jobs: Vec<(f64, f64)> = cfg.eps_grid.iter().map(|&e| (e, p.kappa)).collect();
    if let Some(probe) = cfg.kappa_probe {
        jobs.push(probe);
    }
    let samples = exec::try_map_indexed(exec, jobs.len(), |k| {
        let (eps, kappa) = jobs[k];
        let m = model.with_params(p.with_eps(eps).with_kappa(kappa))?;
        let mut r = rng::stream(cfg.full.seed, k as u64);
        let rec = simulate_full(&cfg.full, &m, None, &mut r)?;
        stationary_sample(&rec)
    })?;
    let mut rows = samples
        .iter()
        .zip(&jobs)
        .enumerate()
        .map(|(k, (s, &(eps, kappa)))| compare(eps, kappa, s, &eff, rng::derive_seed(cfg.full.seed, k as u64)))
        .collect::<Result<Vec<_>>>()?;
    let kappa_probe = cfg.kappa_probe.map(|_| rows.pop().expect("probe row"));
    let first = &rows[0];
    let last = &rows[rows.len() - 1];
    let combined = first.distance.se.hypot(last.distance.se);
    let monotone_flag = first.distance.value - last.distance.value > combined;
    let mean_gap_decreasing = first.mean_gap > last.mean_gap;
    Ok(InviscidReport {
        eps_grid: cfg.eps_grid.clone(),
        effective_samples: eff.points.len(),
        effective_twice_u_minus_v: eff.twice_u_minus_v,
        rows,
        monotone_flag,
        mean_gap_decreasing,
        kappa_probe,
    })
}
