use rand::Rng;
use rand_distr::StandardNormal;

use super::Model;
use crate::error::{Error, Result};
use crate::rng::StreamRng;
use crate::spectrum::StateVector;

/// Maximum number of successive step halvings after a failed midpoint solve.
pub const MAX_HALVINGS: u32 = 8;

/// Counters from the fast midpoint solver.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FastStats {
    pub substeps: u64,
    pub halvings: u64,
    pub max_iterations: usize,
    /// Largest per-substep `max(|dU| / (1 + U), |dV| / (1 + V))`.
    pub max_invariant_error: f64,
}

impl FastStats {
    pub fn merge(&mut self, other: &FastStats) {
        self.substeps += other.substeps;
        self.halvings += other.halvings;
        self.max_iterations = self.max_iterations.max(other.max_iterations);
        self.max_invariant_error = self.max_invariant_error.max(other.max_invariant_error);
    }
}

/// Implicit-midpoint solver for `dz = b(z)/eps dt + sqrt(kappa/eps) sum Z_m(z) o dbeta_m`.
#[derive(Debug, Clone)]
pub(crate) struct FastSolver<'a> {
    model: &'a Model,
    tol: f64,
    max_iter: usize,
    noise_scale: f64,
    weights: Vec<f64>,
    z: Vec<f64>,
    mid: Vec<f64>,
    next: Vec<f64>,
    pub stats: FastStats,
}

impl<'a> FastSolver<'a> {
    pub fn new(model: &'a Model, tol: f64, max_iter: usize) -> Self {
        let n = model.dim();
        let p = &model.params;
        Self {
            model,
            tol,
            max_iter,
            noise_scale: (p.kappa / p.eps).sqrt(),
            weights: vec![0.0; model.fields.len()],
            z: vec![0.0; n],
            mid: vec![0.0; n],
            next: vec![0.0; n],
            stats: FastStats::default(),
        }
    }

    pub fn n_noises(&self) -> usize {
        self.model.fields.len()
    }

    /// `x + G(at)` into `out`, with `weights` already scaled.
    #[inline]
    fn increment(&self, x: &[f64], at: &[f64], drift_scale: f64, out: &mut [f64]) {
        out.copy_from_slice(x);
        self.model.triads.accumulate(at, drift_scale, out);
        self.model.fields.accumulate_weighted(at, &self.weights, out);
    }

    /// One midpoint solve with Brownian increments `dbeta`; on success `x`
    /// holds the new state.
    pub fn try_step(&mut self, x: &mut [f64], dt: f64, dbeta: &[f64]) -> Result<()> {
        let drift_scale = dt / self.model.params.eps;
        for (w, db) in self.weights.iter_mut().zip(dbeta) {
            *w = self.noise_scale * db;
        }
        let xmax = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let threshold = self.tol * (1.0 + xmax);
        let mut z = std::mem::take(&mut self.z);
        let mut mid = std::mem::take(&mut self.mid);
        let mut next = std::mem::take(&mut self.next);
        self.increment(x, x, drift_scale, &mut z);
        let mut residual = f64::INFINITY;
        let mut converged = false;
        let mut iterations = 0;
        for it in 1..=self.max_iter {
            iterations = it;
            for ((m, a), b) in mid.iter_mut().zip(x.iter()).zip(&z) {
                *m = 0.5 * (a + b);
            }
            self.increment(x, &mid, drift_scale, &mut next);
            residual = next.iter().zip(&z).fold(0.0f64, |m, (a, b)| {
                let d = (a - b).abs();
                if d > m || d.is_nan() {
                    d
                } else {
                    m
                }
            });
            std::mem::swap(&mut z, &mut next);
            if !residual.is_finite() {
                break;
            }
            if residual <= threshold {
                converged = true;
                break;
            }
        }
        let result = if converged {
            let lam = self.model.spectrum.lambda();
            let (mut du, mut dv, mut u, mut v) = (0.0, 0.0, 0.0, 0.0);
            for ((a, b), l) in x.iter().zip(&z).zip(lam) {
                let d = (b - a) * (b + a);
                du += d;
                dv += d / l;
                u += a * a;
                v += a * a / l;
            }
            let err = (du.abs() / (1.0 + u)).max(dv.abs() / (1.0 + v));
            self.stats.max_invariant_error = self.stats.max_invariant_error.max(err);
            self.stats.max_iterations = self.stats.max_iterations.max(iterations);
            self.stats.substeps += 1;
            x.copy_from_slice(&z);
            Ok(())
        } else {
            Err(Error::MidpointDiverged { residual, iterations })
        };
        self.z = z;
        self.mid = mid;
        self.next = next;
        result
    }

    /// Midpoint step that refines the Brownian path by bisection when the
    /// fixed-point iteration fails, up to [`MAX_HALVINGS`] levels.
    pub fn step_refining(
        &mut self,
        x: &mut [f64],
        dt: f64,
        dbeta: &[f64],
        rng: &mut StreamRng,
        depth: u32,
    ) -> Result<()> {
        let backup = x.to_vec();
        match self.try_step(x, dt, dbeta) {
            Ok(()) => Ok(()),
            Err(e) if depth >= MAX_HALVINGS => {
                x.copy_from_slice(&backup);
                Err(e)
            }
            Err(_) => {
                x.copy_from_slice(&backup);
                self.stats.halvings += 1;
                let half_sd = 0.5 * dt.sqrt();
                let first: Vec<f64> = dbeta
                    .iter()
                    .map(|db| {
                        let xi: f64 = rng.sample(StandardNormal);
                        0.5 * db + half_sd * xi
                    })
                    .collect();
                let second: Vec<f64> = dbeta.iter().zip(&first).map(|(a, b)| a - b).collect();
                self.step_refining(x, 0.5 * dt, &first, rng, depth + 1)?;
                self.step_refining(x, 0.5 * dt, &second, rng, depth + 1)
            }
        }
    }

    /// Draws the increments for a substep of length `dt` and advances `x`.
    pub fn substep(&mut self, x: &mut [f64], dt: f64, rng: &mut StreamRng, dbeta: &mut [f64]) -> Result<()> {
        let sd = dt.sqrt();
        for db in dbeta.iter_mut() {
            let xi: f64 = rng.sample(StandardNormal);
            *db = sd * xi;
        }
        self.step_refining(x, dt, dbeta, rng, 0)
    }
}

/// One fast implicit-midpoint step without halving; fails with
/// [`Error::MidpointDiverged`] when the fixed-point iteration does not converge.
pub fn fast_midpoint_step(
    x: &StateVector,
    dt: f64,
    model: &Model,
    rng: &mut StreamRng,
    tol: f64,
    max_iter: usize,
) -> Result<StateVector> {
    model.spectrum.check_dim(x.len())?;
    let mut solver = FastSolver::new(model, tol, max_iter);
    let sd = dt.sqrt();
    let dbeta: Vec<f64> = (0..solver.n_noises())
        .map(|_| {
            let xi: f64 = rng.sample(StandardNormal);
            sd * xi
        })
        .collect();
    let mut out = x.as_slice().to_vec();
    solver.try_step(&mut out, dt, &dbeta)?;
    Ok(StateVector::from(out))
}
