//! Uniform sampling of a sector polytope.

use rand::Rng;
use rand_distr::StandardNormal;

use super::{enumerate_vertices, Halfspace, SectorPolytope};
use crate::error::{Error, Result};
use crate::rng::StreamRng;

/// Box-rejection acceptance below which the sampler switches to hit-and-run.
pub const HIT_AND_RUN_THRESHOLD: f64 = 1e-3;
const PILOT_DRAWS: usize = 20_000;
const BURN_IN_PER_DIM: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerKind {
    Rejection,
    /// Hit-and-run chain, burned in for `64 * dim` steps and thinned by `dim`.
    HitAndRun,
}

#[derive(Debug, Clone)]
pub struct PolytopeSampler<'a> {
    poly: &'a SectorPolytope,
    kind: SamplerKind,
    acceptance: f64,
    box_volume: f64,
    halfspaces: Vec<Halfspace>,
    state: Vec<f64>,
    dir: Vec<f64>,
}

impl<'a> PolytopeSampler<'a> {
    /// Measures box-rejection acceptance with a pilot run and picks the method.
    pub fn new(poly: &'a SectorPolytope, rng: &mut StreamRng) -> Result<Self> {
        if poly.is_degenerate() {
            return Err(Error::DegeneratePolytope);
        }
        let mut probe = vec![0.0; poly.dim];
        let mut hits = 0usize;
        for _ in 0..PILOT_DRAWS {
            draw_box(poly, rng, &mut probe);
            hits += poly.contains(&probe, 0.0) as usize;
        }
        let acceptance = hits as f64 / PILOT_DRAWS as f64;
        let box_volume = poly.box_bounds.iter().product();
        let mut s = Self {
            poly,
            kind: SamplerKind::Rejection,
            acceptance,
            box_volume,
            halfspaces: poly.halfspaces(1.0),
            state: Vec::new(),
            dir: vec![0.0; poly.dim],
        };
        if acceptance < HIT_AND_RUN_THRESHOLD {
            s.kind = SamplerKind::HitAndRun;
            s.state = interior_point(poly)?;
            for _ in 0..BURN_IN_PER_DIM * poly.dim {
                s.hit_and_run_step(rng);
            }
        }
        Ok(s)
    }

    /// Forces hit-and-run regardless of the measured acceptance.
    pub fn hit_and_run(poly: &'a SectorPolytope, rng: &mut StreamRng) -> Result<Self> {
        let mut s = Self::new(poly, rng)?;
        if s.kind == SamplerKind::Rejection {
            s.kind = SamplerKind::HitAndRun;
            s.state = interior_point(poly)?;
            for _ in 0..BURN_IN_PER_DIM * poly.dim {
                s.hit_and_run_step(rng);
            }
        }
        Ok(s)
    }

    pub fn kind(&self) -> SamplerKind {
        self.kind
    }

    pub fn pilot_acceptance(&self) -> f64 {
        self.acceptance
    }

    pub fn volume_estimate(&self) -> f64 {
        self.acceptance * self.box_volume
    }

    pub fn sample_into(&mut self, rng: &mut StreamRng, out: &mut [f64]) {
        match self.kind {
            SamplerKind::Rejection => loop {
                draw_box(self.poly, rng, out);
                if self.poly.contains(out, 0.0) {
                    return;
                }
            },
            SamplerKind::HitAndRun => {
                for _ in 0..self.poly.dim {
                    self.hit_and_run_step(rng);
                }
                out.copy_from_slice(&self.state);
            }
        }
    }

    pub fn sample(&mut self, rng: &mut StreamRng) -> Vec<f64> {
        let mut out = vec![0.0; self.poly.dim];
        self.sample_into(rng, &mut out);
        out
    }

    fn hit_and_run_step(&mut self, rng: &mut StreamRng) {
        let norm = loop {
            for d in self.dir.iter_mut() {
                *d = rng.sample(StandardNormal);
            }
            let n: f64 = self.dir.iter().map(|d| d * d).sum::<f64>().sqrt();
            if n > 0.0 {
                break n;
            }
        };
        self.dir.iter_mut().for_each(|d| *d /= norm);
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for h in &self.halfspaces {
            let rate: f64 = h.a.iter().zip(&self.dir).map(|(a, d)| a * d).sum();
            let slack = h.slack(&self.state).max(0.0);
            if rate > 0.0 {
                hi = hi.min(slack / rate);
            } else if rate < 0.0 {
                lo = lo.max(slack / rate);
            }
        }
        if !(lo.is_finite() && hi.is_finite()) || hi <= lo {
            return;
        }
        let t = rng.random_range(lo..=hi);
        for (x, d) in self.state.iter_mut().zip(&self.dir) {
            *x += t * d;
        }
        // guard against rounding just outside the facets
        for x in self.state.iter_mut() {
            *x = x.max(0.0);
        }
    }
}

fn draw_box(poly: &SectorPolytope, rng: &mut StreamRng, out: &mut [f64]) {
    for (o, &b) in out.iter_mut().zip(&poly.box_bounds) {
        *o = b * rng.random::<f64>();
    }
}

fn interior_point(poly: &SectorPolytope) -> Result<Vec<f64>> {
    let scale = poly.u;
    let vs = enumerate_vertices(&poly.halfspaces(scale), poly.dim, 1e-11);
    if vs.points.len() <= poly.dim {
        return Err(Error::DegeneratePolytope);
    }
    let k = vs.points.len() as f64;
    Ok((0..poly.dim).map(|c| scale * vs.points.iter().map(|p| p[c]).sum::<f64>() / k).collect())
}
