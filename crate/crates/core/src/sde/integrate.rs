use rand::Rng;
use rand_distr::StandardNormal;

use super::fast::FastSolver;
use super::ou::OuPropagator;
use super::recorder::{FlagKind, PathRecorder, RunStats};
use super::{Mode, Model, SimConfig};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::rng::{self, StreamRng};
use crate::spectrum::{observables_unchecked, StateClass, StateVector};

/// Draw from the product Gaussian with per-mode variance `a (1 + delta_l) / 2`.
pub fn draw_stationary_gaussian(model: &Model, rng: &mut StreamRng) -> StateVector {
    let p = &model.params;
    let x = (0..model.dim())
        .map(|l| {
            let xi: f64 = rng.sample(StandardNormal);
            (0.5 * p.a * (1.0 + p.delta_mode(l))).sqrt() * xi
        })
        .collect::<Vec<_>>();
    StateVector::from(x)
}

/// Reusable integrator state for one trajectory.
pub struct Stepper<'a> {
    model: &'a Model,
    h: f64,
    half_ou: OuPropagator,
    solver: FastSolver<'a>,
    substeps: usize,
    dbeta: Vec<f64>,
    heun: HeunBuffers,
}

impl<'a> Stepper<'a> {
    pub fn new(cfg: &SimConfig, model: &'a Model) -> Self {
        Self::with_step(cfg, model, cfg.h)
    }

    pub fn with_step(cfg: &SimConfig, model: &'a Model, h: f64) -> Self {
        let solver = FastSolver::new(model, cfg.midpoint_tol, cfg.midpoint_max_iter);
        let m = solver.n_noises();
        Self {
            model,
            h,
            half_ou: OuPropagator::new(0.5 * h, &model.params, &model.spectrum),
            substeps: cfg.fast_substeps(h, model.params.eps),
            solver,
            dbeta: vec![0.0; m],
            heun: HeunBuffers::new(model.dim(), m),
        }
    }

    pub fn substeps(&self) -> usize {
        self.substeps
    }

    pub fn fast_stats(&self) -> super::FastStats {
        self.solver.stats
    }

    /// Fast-only flow over one outer step.
    pub fn fast(&mut self, x: &mut [f64], rng: &mut StreamRng) -> Result<()> {
        let dt = self.h / self.substeps as f64;
        for _ in 0..self.substeps {
            self.solver.substep(x, dt, rng, &mut self.dbeta)?;
        }
        Ok(())
    }

    /// Forcing half step, fast substeps, forcing half step.
    pub fn strang(&mut self, x: &mut [f64], rng: &mut StreamRng) -> Result<()> {
        self.half_ou.apply(x, rng);
        self.fast(x, rng)?;
        self.half_ou.apply(x, rng);
        Ok(())
    }

    /// Heun step of the full dynamics.
    pub fn heun_full(&mut self, x: &mut [f64], rng: &mut StreamRng) -> Result<()> {
        self.heun.draw(self.h, true, rng);
        heun_model_step(self.model, x, self.h, true, &mut self.heun);
        Ok(())
    }

    /// Heun step of the fast-only dynamics.
    pub fn heun_fast(&mut self, x: &mut [f64], rng: &mut StreamRng) -> Result<()> {
        self.heun.draw(self.h, false, rng);
        heun_model_step(self.model, x, self.h, false, &mut self.heun);
        Ok(())
    }
}

/// One Strang step of the full system.
pub fn strang_step(
    x: &StateVector,
    h: f64,
    cfg: &SimConfig,
    model: &Model,
    rng: &mut StreamRng,
) -> Result<StateVector> {
    model.spectrum.check_dim(x.len())?;
    let mut st = Stepper::with_step(cfg, model, h);
    let mut y = x.as_slice().to_vec();
    st.strang(&mut y, rng)?;
    Ok(StateVector::from(y))
}

/// Stratonovich Heun step `x + (F(x) + F(y))h/2 + (G(x) + G(y)) dW / 2` with
/// predictor `y = x + F(x) h + G(x) dW`.
///
/// `drift(z, out)` writes `F(z)`; `noise(z, dw, out)` adds `G(z) dW` into `out`.
pub fn heun_step<F, G>(x: &[f64], h: f64, dw: &[f64], drift: F, noise: G) -> Vec<f64>
where
    F: Fn(&[f64], &mut [f64]),
    G: Fn(&[f64], &[f64], &mut [f64]),
{
    let n = x.len();
    let mut incr0 = vec![0.0; n];
    drift(x, &mut incr0);
    incr0.iter_mut().for_each(|v| *v *= h);
    noise(x, dw, &mut incr0);
    let pred: Vec<f64> = x.iter().zip(&incr0).map(|(a, b)| a + b).collect();
    let mut incr1 = vec![0.0; n];
    drift(&pred, &mut incr1);
    incr1.iter_mut().for_each(|v| *v *= h);
    noise(&pred, dw, &mut incr1);
    x.iter().zip(incr0.iter().zip(&incr1)).map(|(a, (b, c))| a + 0.5 * (b + c)).collect()
}

struct HeunBuffers {
    forcing: Vec<f64>,
    stirring: Vec<f64>,
    incr0: Vec<f64>,
    incr1: Vec<f64>,
    pred: Vec<f64>,
}

impl HeunBuffers {
    fn new(n: usize, m: usize) -> Self {
        Self {
            forcing: vec![0.0; n],
            stirring: vec![0.0; m],
            incr0: vec![0.0; n],
            incr1: vec![0.0; n],
            pred: vec![0.0; n],
        }
    }

    /// Forcing increments first, then stirring, in field order.
    fn draw(&mut self, h: f64, forcing: bool, rng: &mut StreamRng) {
        let sd = h.sqrt();
        if forcing {
            for f in self.forcing.iter_mut() {
                let xi: f64 = rng.sample(StandardNormal);
                *f = sd * xi;
            }
        }
        for w in self.stirring.iter_mut() {
            let xi: f64 = rng.sample(StandardNormal);
            *w = sd * xi;
        }
    }
}

fn model_increment(model: &Model, z: &[f64], h: f64, full: bool, buf_forcing: &[f64], stirring: &[f64], out: &mut [f64]) {
    let p = &model.params;
    out.iter_mut().for_each(|v| *v = 0.0);
    model.triads.accumulate(z, h / p.eps, out);
    model.fields.accumulate_weighted(z, stirring, out);
    if full {
        for (l, (o, lam)) in out.iter_mut().zip(model.spectrum.lambda()).enumerate() {
            let amp = (lam * p.a * (1.0 + p.delta_mode(l))).sqrt();
            *o += -lam * z[l] * h + amp * buf_forcing[l];
        }
    }
}

fn heun_model_step(model: &Model, x: &mut [f64], h: f64, full: bool, b: &mut HeunBuffers) {
    let scale = (model.params.kappa / model.params.eps).sqrt();
    b.stirring.iter_mut().for_each(|w| *w *= scale);
    model_increment(model, x, h, full, &b.forcing, &b.stirring, &mut b.incr0);
    for ((p, a), d) in b.pred.iter_mut().zip(x.iter()).zip(&b.incr0) {
        *p = a + d;
    }
    model_increment(model, &b.pred, h, full, &b.forcing, &b.stirring, &mut b.incr1);
    for ((a, d0), d1) in x.iter_mut().zip(&b.incr0).zip(&b.incr1) {
        *a += 0.5 * (d0 + d1);
    }
}

/// Heun predictor-corrector step of the full system.
pub fn heun_reference_step(
    x: &StateVector,
    h: f64,
    model: &Model,
    rng: &mut StreamRng,
) -> Result<StateVector> {
    model.spectrum.check_dim(x.len())?;
    let mut b = HeunBuffers::new(model.dim(), model.fields.len());
    b.draw(h, true, rng);
    let mut y = x.as_slice().to_vec();
    heun_model_step(model, &mut y, h, true, &mut b);
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { t: h, last_finite: x.as_slice().to_vec() });
    }
    Ok(StateVector::from(y))
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum StepKind {
    Strang,
    Fast,
    HeunFull,
    HeunFast,
}

fn run(
    cfg: &SimConfig,
    model: &Model,
    x0: StateVector,
    t_end: f64,
    kind: StepKind,
    rng: &mut StreamRng,
) -> Result<PathRecorder> {
    cfg.validate()?;
    model.spectrum.check_dim(x0.len())?;
    let lambda = model.spectrum.lambda();
    let mut rec = PathRecorder::new(FlagKind::Good, cfg.burn_in);
    let good = cfg.good_set;
    let is_good = |obs: &crate::spectrum::Observables| {
        obs.u > 0.0 && good.classify_observables(obs, &model.spectrum) == StateClass::Good
    };
    let mut x = x0.into_inner();
    let obs = observables_unchecked(&x, lambda);
    rec.push(0.0, obs, is_good(&obs));
    if cfg.state_stride.is_some() {
        rec.push_state(0.0, &x);
    }
    let mut st = Stepper::new(cfg, model);
    let n_steps = (t_end / cfg.h).round().max(1.0) as usize;
    let mut last = x.clone();
    for k in 1..=n_steps {
        let t = k as f64 * cfg.h;
        let outcome = match kind {
            StepKind::Strang => st.strang(&mut x, rng),
            StepKind::Fast => st.fast(&mut x, rng),
            StepKind::HeunFull => st.heun_full(&mut x, rng),
            StepKind::HeunFast => st.heun_fast(&mut x, rng),
        };
        if let Err(e) = outcome {
            return Err(Error::TrajectoryAborted { t, reason: e.to_string() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { t, last_finite: last });
        }
        last.copy_from_slice(&x);
        if k % cfg.record_stride == 0 {
            let obs = observables_unchecked(&x, lambda);
            rec.push(t, obs, is_good(&obs));
        }
        if cfg.state_stride.is_some_and(|s| k % s == 0) {
            rec.push_state(t, &x);
        }
    }
    rec.stats = RunStats { steps: n_steps as u64, fast: st.fast_stats(), ..Default::default() };
    Ok(rec)
}

/// Full system via Strang splitting; `x0 = None` draws from the stationary Gaussian.
pub fn simulate_full(
    cfg: &SimConfig,
    model: &Model,
    x0: Option<StateVector>,
    rng: &mut StreamRng,
) -> Result<PathRecorder> {
    let x0 = x0.unwrap_or_else(|| draw_stationary_gaussian(model, rng));
    run(cfg, model, x0, cfg.t_end, StepKind::Strang, rng)
}

/// Fast-only flow from `x0` up to `t_end`.
pub fn simulate_fast_only(
    x0: StateVector,
    t_end: f64,
    cfg: &SimConfig,
    model: &Model,
    rng: &mut StreamRng,
) -> Result<PathRecorder> {
    if x0.iter().all(|&v| v == 0.0) {
        return Err(Error::ZeroState);
    }
    let mut cfg = cfg.clone();
    cfg.t_end = t_end;
    cfg.burn_in = cfg.burn_in.min(0.5 * t_end);
    run(&cfg, model, x0, t_end, StepKind::Fast, rng)
}

/// Full system with the Heun predictor-corrector at step `cfg.h`.
pub fn simulate_reference(
    cfg: &SimConfig,
    model: &Model,
    x0: Option<StateVector>,
    rng: &mut StreamRng,
) -> Result<PathRecorder> {
    let x0 = x0.unwrap_or_else(|| draw_stationary_gaussian(model, rng));
    run(cfg, model, x0, cfg.t_end, StepKind::HeunFull, rng)
}

/// Fast-only flow with the Heun predictor-corrector.
pub fn simulate_fast_heun(
    x0: StateVector,
    t_end: f64,
    cfg: &SimConfig,
    model: &Model,
    rng: &mut StreamRng,
) -> Result<PathRecorder> {
    let mut cfg = cfg.clone();
    cfg.t_end = t_end;
    cfg.burn_in = cfg.burn_in.min(0.5 * t_end);
    run(&cfg, model, x0, t_end, StepKind::HeunFast, rng)
}

/// Runs `cfg.mode` from stream `(cfg.seed, 0)`.
pub fn simulate(cfg: &SimConfig, model: &Model, x0: Option<StateVector>) -> Result<PathRecorder> {
    let mut r = rng::stream(cfg.seed, 0);
    match cfg.mode {
        Mode::Full => simulate_full(cfg, model, x0, &mut r),
        Mode::Reference => simulate_reference(cfg, model, x0, &mut r),
        Mode::FastOnly => {
            let x0 = x0.ok_or(Error::InvalidConfig("fast-only runs need an initial state".into()))?;
            simulate_fast_only(x0, cfg.t_end, cfg, model, &mut r)
        }
    }
}

/// Runs `count` independent jobs, job `i` on stream `(cfg.seed, i)`.
pub fn run_ensemble<T, F>(exec: Execution, seed: u64, count: usize, job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &mut StreamRng) -> Result<T> + Sync + Send,
{
    exec::try_map_indexed(exec, count, |i| {
        let mut r = rng::stream(seed, i as u64);
        job(i, &mut r)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::{ModelParams, Spectrum};

    fn model(eps: f64) -> Model {
        let s = Spectrum::torus(0.7, &[(0, 1), (1, 0), (1, 1), (0, 2)]).unwrap();
        Model::torus(s, ModelParams::gaussian(4, 1.0, 0.5, eps).unwrap()).unwrap()
    }

    #[test]
    fn heun_matches_classical_ode_step() {
        let f = |x: &[f64], out: &mut [f64]| out[0] = -2.0 * x[0] + x[0] * x[0];
        let none = |_: &[f64], _: &[f64], _: &mut [f64]| {};
        let h = 0.1;
        let x = [0.7];
        let y = heun_step(&x, h, &[], f, none);
        let k1 = -2.0 * 0.7 + 0.49;
        let p = 0.7 + h * k1;
        let k2 = -2.0 * p + p * p;
        assert_eq!(y[0], 0.7 + 0.5 * h * (k1 + k2));
    }

    #[test]
    fn strang_without_fast_part_is_exact_forcing() {
        let s = Spectrum::torus(0.7, &[(0, 1), (1, 0), (1, 1), (0, 2)]).unwrap();
        let p = ModelParams::gaussian(4, 1.0, 1e-300, 1.0).unwrap();
        let m = Model::new(s.clone(), p.clone(), crate::fields::TriadTensor::zero(&s)).unwrap();
        let cfg = SimConfig::default();
        let x = StateVector::from(vec![1.0; 8]);
        let mut r1 = rng::stream(1, 0);
        let y = strang_step(&x, 0.1, &cfg, &m, &mut r1).unwrap();
        // replay with the same draws: half step, no fast motion, half step
        let mut r2 = rng::stream(1, 0);
        let half = OuPropagator::new(0.05, &p, &s);
        let mut z = x.as_slice().to_vec();
        half.apply(&mut z, &mut r2);
        let substeps = cfg.fast_substeps(0.1, 1.0);
        for _ in 0..substeps * m.fields.len() {
            let _: f64 = r2.sample(StandardNormal);
        }
        half.apply(&mut z, &mut r2);
        for (a, b) in y.iter().zip(&z) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn identical_seeds_give_identical_paths() {
        let m = model(0.5);
        let cfg = SimConfig { t_end: 2.0, burn_in: 0.5, seed: 9, ..Default::default() };
        let a = simulate(&cfg, &m, None).unwrap();
        let b = simulate(&cfg, &m, None).unwrap();
        assert_eq!(a, b);
        let c = simulate(&SimConfig { seed: 10, ..cfg }, &m, None).unwrap();
        assert_ne!(a.observables, c.observables);
    }

    #[test]
    fn fast_only_single_pair_stays_on_circle() {
        let m = model(0.5);
        let cfg = SimConfig { t_end: 5.0, burn_in: 0.0, ..Default::default() };
        let x0 = StateVector::from(vec![0.0, 0.0, 0.0, 0.0, 1.2, -0.4, 0.0, 0.0]);
        let mut r = rng::stream(4, 0);
        let rec = simulate_fast_only(x0, 5.0, &cfg, &m, &mut r).unwrap();
        let u0 = rec.observables[0].u;
        for o in &rec.observables {
            assert!((o.u - u0).abs() < 1e-10 * u0);
            assert!((o.v * m.spectrum.mu()[2] - o.u).abs() < 1e-10 * u0);
        }
    }

    #[test]
    fn ensemble_results_are_backend_independent() {
        let m = model(0.5);
        let cfg = SimConfig { t_end: 0.5, burn_in: 0.0, ..Default::default() };
        let job = |_: usize, r: &mut StreamRng| simulate_full(&cfg, &m, None, r).map(|rec| rec.observables);
        let seq = run_ensemble(Execution::Sequential, 5, 4, job).unwrap();
        let par = run_ensemble(Execution::Parallel, 5, 4, job).unwrap();
        assert_eq!(seq, par);
    }
}
