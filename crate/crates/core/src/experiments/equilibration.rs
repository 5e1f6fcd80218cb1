use serde::{Deserialize, Serialize};

use crate::effective::QSource;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::sde::{run_ensemble, Model, SimConfig, Stepper};
use crate::spectrum::{compute_observables, GoodSet, StateClass, StateVector};

/// Relative tolerance on the final ensemble means.
pub const FINAL_REL_TOL: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibrationReport {
    pub t_grid: Vec<f64>,
    pub members: usize,
    pub target_q: Vec<f64>,
    /// `[time][mode]` ensemble means of `x_l^2`.
    pub ensemble_mean: Vec<Vec<f64>>,
    pub ensemble_se: Vec<Vec<f64>>,
    /// `[time][mode]` values of `|mean - q_l|`.
    pub abs_deviation: Vec<Vec<f64>>,
    pub max_rel_deviation: Vec<f64>,
    /// Minus the slope of `log(max_rel_deviation)` against time.
    pub decay_rate: f64,
    pub final_within_tolerance: bool,
    pub pass: bool,
}

/// Ensemble of fast-only runs from `x0`, compared to `q(u_0, v_0)` on `t_grid`.
#[allow(clippy::too_many_arguments)]
pub fn equilibration_test(
    x0: &StateVector,
    t_grid: &[f64],
    cfg: &SimConfig,
    model: &Model,
    q_source: &QSource,
    good: GoodSet,
    members: usize,
    exec: Execution,
) -> Result<EquilibrationReport> {
    let s = &model.spectrum;
    let obs = compute_observables(x0, s)?;
    if obs.u == 0.0 || good.classify_observables(&obs, s) != StateClass::Good {
        return Err(Error::NotGoodState(format!(
            "ratio {} with u = {} is not in the good set {:?}",
            obs.ratio(),
            obs.u,
            good
        )));
    }
    if t_grid.is_empty() || t_grid.windows(2).any(|w| w[0] >= w[1]) || t_grid[0] < 0.0 {
        return Err(Error::InvalidParameter {
            field: "t_grid",
            reason: "must be nonempty, nonnegative and strictly increasing".into(),
        });
    }
    if members < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: members });
    }
    let target_q = q_source.eval(obs.cone_point(), s)?;
    let steps: Vec<usize> = t_grid.iter().map(|t| (t / cfg.h).round() as usize).collect();
    let n = model.dim();
    // each member returns x_l^2 at every grid time
    let paths = run_ensemble(exec, cfg.seed, members, |_, rng| {
        let mut st = Stepper::new(cfg, model);
        let mut x = x0.as_slice().to_vec();
        let mut done = 0usize;
        let mut out = Vec::with_capacity(steps.len());
        for &target in &steps {
            while done < target {
                st.fast(&mut x, rng)?;
                done += 1;
            }
            out.push(x.iter().map(|v| v * v).collect::<Vec<_>>());
        }
        Ok(out)
    })?;
    let m = members as f64;
    let mut ensemble_mean = Vec::with_capacity(steps.len());
    let mut ensemble_se = Vec::with_capacity(steps.len());
    let mut abs_deviation = Vec::with_capacity(steps.len());
    let mut max_rel_deviation = Vec::with_capacity(steps.len());
    let mut noise_floor = Vec::with_capacity(steps.len());
    for k in 0..steps.len() {
        let mean: Vec<f64> = (0..n).map(|l| paths.iter().map(|p| p[k][l]).sum::<f64>() / m).collect();
        let se: Vec<f64> = (0..n)
            .map(|l| {
                let var = paths.iter().map(|p| (p[k][l] - mean[l]).powi(2)).sum::<f64>() / (m - 1.0);
                (var / m).sqrt()
            })
            .collect();
        let dev: Vec<f64> = mean.iter().zip(&target_q).map(|(a, q)| (a - q).abs()).collect();
        max_rel_deviation.push(dev.iter().zip(&target_q).map(|(d, q)| d / q).fold(0.0, f64::max));
        noise_floor.push(3.0 * se.iter().zip(&target_q).map(|(s, q)| s / q).fold(0.0, f64::max));
        ensemble_mean.push(mean);
        ensemble_se.push(se);
        abs_deviation.push(dev);
    }
    let decay_rate = fit_decay_rate(t_grid, &max_rel_deviation, &noise_floor);
    let last = steps.len() - 1;
    let final_within_tolerance = (0..n).all(|l| {
        abs_deviation[last][l] <= (FINAL_REL_TOL * target_q[l]).max(3.0 * ensemble_se[last][l])
    });
    Ok(EquilibrationReport {
        t_grid: t_grid.to_vec(),
        members,
        target_q,
        ensemble_mean,
        ensemble_se,
        abs_deviation,
        max_rel_deviation,
        decay_rate,
        final_within_tolerance,
        pass: final_within_tolerance && decay_rate > 0.0,
    })
}

/// Least-squares rate of `log(dev)` over the points above the noise floor
/// (at least the first two points are always used).
fn fit_decay_rate(t: &[f64], dev: &[f64], floor: &[f64]) -> f64 {
    let mut pts: Vec<(f64, f64)> = t
        .iter()
        .zip(dev.iter().zip(floor))
        .filter(|(_, (d, f))| **d > **f && **d > 0.0)
        .map(|(t, (d, _))| (*t, d.ln()))
        .collect();
    if pts.len() < 2 {
        pts = t.iter().zip(dev).take(2).filter(|(_, d)| **d > 0.0).map(|(t, d)| (*t, d.ln())).collect();
    }
    if pts.len() < 2 {
        return 0.0;
    }
    let k = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        -sxy / sxx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::{ModelParams, Spectrum};

    #[test]
    fn decay_fit_recovers_exponential() {
        let t: [f64; 4] = [0.0, 1.0, 2.0, 3.0];
        let d: Vec<f64> = t.iter().map(|t| 0.8 * (-0.7 * t).exp()).collect();
        assert!((fit_decay_rate(&t, &d, &[0.0; 4]) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn initial_deviation_is_exact_and_bad_states_rejected() {
        let s = Spectrum::torus(0.7, &[(0, 1), (1, 0), (1, 1), (0, 2)]).unwrap();
        let m = Model::torus(s.clone(), ModelParams::gaussian(4, 1.0, 0.5, 1.0).unwrap()).unwrap();
        let x0 = StateVector::from(vec![(2.0f64 / 3.0).sqrt(), 0.0, 0.0, 0.0, 0.0, 0.0, (4.0f64 / 3.0).sqrt(), 0.0]);
        let good = GoodSet { u_min: 0.5, u_max: 10.0, eta: 0.02 };
        let cfg = SimConfig::default();
        let rep = equilibration_test(&x0, &[0.0, 0.5], &cfg, &m, &QSource::Exact, good, 8, Execution::Sequential).unwrap();
        for l in 0..8 {
            assert_eq!(rep.abs_deviation[0][l], (x0[l] * x0[l] - rep.target_q[l]).abs());
        }
        let strict = GoodSet { eta: 0.5, ..good };
        assert!(matches!(
            equilibration_test(&x0, &[0.0], &cfg, &m, &QSource::Exact, strict, 8, Execution::Sequential),
            Err(Error::NotGoodState(_))
        ));
    }
}
