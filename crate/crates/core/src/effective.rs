//! The limiting diffusion of `(U, V)` on the open cone.
//!
//! Its generator is
//! `a11 d^2_u + 2 a12 d^2_uv + a22 d^2_v + drift_u d_u + drift_v d_v`
//! with coefficients obtained from the averaged squares `q_l(u, v)`. Paths
//! are generated by Euler-Maruyama with a factor `F F^T = 2A`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polytope::{q_values, QMethod, RayTable};
use crate::rng::StreamRng;
use crate::sde::{FlagKind, PathRecorder, RunStats, SimConfig};
use crate::spectrum::{forcing_budgets, ConePoint, ModelParams, Observables, Spectrum};

/// Where `q(u, v)` comes from.
#[derive(Debug, Clone)]
pub enum QSource {
    /// Direct polytope evaluation at every call.
    Exact,
    /// Interpolated ray table.
    Table(RayTable),
}

impl QSource {
    /// Ray table with the default grid.
    pub fn default_table(s: &Spectrum) -> Result<Self> {
        Ok(QSource::Table(RayTable::build(s, RayTable::DEFAULT_POINTS)?))
    }

    pub fn eval_into(&self, w: ConePoint, s: &Spectrum, out: &mut [f64]) -> Result<()> {
        match self {
            QSource::Exact => {
                let q = q_values(w, s, QMethod::Exact)?;
                out.copy_from_slice(&q.q);
                Ok(())
            }
            QSource::Table(t) => t.eval_into(w, out),
        }
    }

    pub fn eval(&self, w: ConePoint, s: &Spectrum) -> Result<Vec<f64>> {
        let mut out = vec![0.0; s.dim()];
        self.eval_into(w, s, &mut out)?;
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveCoefficients {
    pub a11: f64,
    pub a12: f64,
    pub a22: f64,
    pub drift_u: f64,
    pub drift_v: f64,
    pub at: ConePoint,
}

impl EffectiveCoefficients {
    pub fn determinant(&self) -> f64 {
        self.a11 * self.a22 - self.a12 * self.a12
    }
}

/// Coefficients at `w` from given values `q = q(w)`.
pub fn coefficients_from_q(w: ConePoint, q: &[f64], p: &ModelParams, s: &Spectrum) -> EffectiveCoefficients {
    let b = forcing_budgets(p, s);
    let (mut s_lq, mut s_q, mut s_qinv, mut s_lam_q) = (0.0, 0.0, 0.0, 0.0);
    for (l, (&ql, &lam)) in q.iter().zip(s.lambda()).enumerate() {
        let f = 1.0 + p.delta_mode(l);
        s_lq += lam * f * ql;
        s_q += f * ql;
        s_qinv += f * ql / lam;
        s_lam_q += lam * ql;
    }
    EffectiveCoefficients {
        a11: 2.0 * p.a * s_lq,
        a12: 2.0 * p.a * s_q,
        a22: 2.0 * p.a * s_qinv,
        drift_u: b.b1 - 2.0 * s_lam_q,
        drift_v: b.b0 - 2.0 * w.u,
        at: w,
    }
}

pub fn effective_coefficients(
    w: ConePoint,
    p: &ModelParams,
    s: &Spectrum,
    q_source: &QSource,
) -> Result<EffectiveCoefficients> {
    let q = q_source.eval(w, s)?;
    Ok(coefficients_from_q(w, &q, p, s))
}

/// Lower-triangular `[[f11, 0], [f21, f22]]` with `F F^T = 2A`.
pub fn diffusion_factor(c: &EffectiveCoefficients) -> Result<[[f64; 2]; 2]> {
    let (m11, m12, m22) = (2.0 * c.a11, 2.0 * c.a12, 2.0 * c.a22);
    let tol = 1e-12 * (m11.abs() + m22.abs());
    if m11 < -tol || m22 < -tol {
        return Err(Error::NotPsd(m11.min(m22)));
    }
    let f11 = m11.max(0.0).sqrt();
    let f21 = if f11 > 0.0 { m12 / f11 } else { 0.0 };
    let schur = m22 - f21 * f21;
    if schur < -tol || (f11 == 0.0 && m12.abs() > tol) {
        return Err(Error::NotPsd(schur));
    }
    let f22 = if schur <= tol { 0.0 } else { schur.sqrt() };
    Ok([[f11, 0.0], [f21, f22]])
}

/// Result of one effective step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub point: ConePoint,
    /// Number of bisections performed while covering the step.
    pub halvings: u32,
    pub reflected: bool,
}

/// Maximum bisection depth before falling back to reflection.
pub const MAX_EFFECTIVE_HALVINGS: u32 = 12;

/// Mirror image of `w` across the boundary ray it violates, if any.
fn reflect(w: ConePoint, lambda_max: f64) -> ConePoint {
    if w.u <= w.v {
        ConePoint::new(w.v, w.u)
    } else {
        // across the line through the origin with direction (lambda_max, 1)
        let n2 = lambda_max * lambda_max + 1.0;
        let proj = (w.u * lambda_max + w.v) / n2;
        ConePoint::new(2.0 * proj * lambda_max - w.u, 2.0 * proj - w.v)
    }
}

/// Euler-Maruyama integrator for the cone diffusion.
pub struct EffectiveStepper<'a> {
    p: &'a ModelParams,
    s: &'a Spectrum,
    q_source: &'a QSource,
    q: Vec<f64>,
}

impl<'a> EffectiveStepper<'a> {
    pub fn new(p: &'a ModelParams, s: &'a Spectrum, q_source: &'a QSource) -> Self {
        Self { p, s, q_source, q: vec![0.0; s.dim()] }
    }

    /// `sum lambda_l q_l(w)`.
    pub fn weighted_q(&mut self, w: ConePoint) -> Result<f64> {
        self.q_source.eval_into(w, self.s, &mut self.q)?;
        Ok(self.q.iter().zip(self.s.lambda()).map(|(q, l)| q * l).sum())
    }

    fn coefficients(&mut self, w: ConePoint) -> Result<EffectiveCoefficients> {
        self.q_source.eval_into(w, self.s, &mut self.q)?;
        Ok(coefficients_from_q(w, &self.q, self.p, self.s))
    }

    fn propose(&mut self, w: ConePoint, h: f64, dw: [f64; 2]) -> Result<ConePoint> {
        let c = self.coefficients(w)?;
        let f = diffusion_factor(&c)?;
        Ok(ConePoint::new(
            w.u + c.drift_u * h + f[0][0] * dw[0],
            w.v + c.drift_v * h + f[1][0] * dw[0] + f[1][1] * dw[1],
        ))
    }

    fn advance(
        &mut self,
        w: ConePoint,
        h: f64,
        dw: [f64; 2],
        depth: u32,
        rng: &mut StreamRng,
        out: &mut StepOutcome,
    ) -> Result<ConePoint> {
        let prop = self.propose(w, h, dw)?;
        if prop.is_interior(self.s) {
            return Ok(prop);
        }
        if depth < MAX_EFFECTIVE_HALVINGS {
            out.halvings += 1;
            let sd = 0.5 * h.sqrt();
            let first: [f64; 2] = std::array::from_fn(|k| {
                let xi: f64 = rng.sample(StandardNormal);
                0.5 * dw[k] + sd * xi
            });
            let second = [dw[0] - first[0], dw[1] - first[1]];
            let mid = self.advance(w, 0.5 * h, first, depth + 1, rng, out)?;
            return self.advance(mid, 0.5 * h, second, depth + 1, rng, out);
        }
        out.reflected = true;
        let r = reflect(prop, self.s.lambda_max());
        if r.is_interior(self.s) {
            Ok(r)
        } else {
            Err(Error::StuckAtBoundary { u: prop.u, v: prop.v })
        }
    }

    /// One step of length `h` from `w`.
    pub fn step(&mut self, w: ConePoint, h: f64, rng: &mut StreamRng) -> Result<StepOutcome> {
        if !w.is_interior(self.s) {
            return Err(Error::OutsideCone { u: w.u, v: w.v });
        }
        let sd = h.sqrt();
        let dw: [f64; 2] = std::array::from_fn(|_| {
            let xi: f64 = rng.sample(StandardNormal);
            sd * xi
        });
        let mut out = StepOutcome { point: w, halvings: 0, reflected: false };
        out.point = self.advance(w, h, dw, 0, rng, &mut out)?;
        Ok(out)
    }
}

pub fn effective_step(
    w: ConePoint,
    h: f64,
    p: &ModelParams,
    s: &Spectrum,
    q_source: &QSource,
    rng: &mut StreamRng,
) -> Result<StepOutcome> {
    EffectiveStepper::new(p, s, q_source).step(w, h, rng)
}

/// Interior starting point `u = B_0 / 2` on the ray of ratio `(1 + lambda_N) / 2`.
pub fn default_initial_point(p: &ModelParams, s: &Spectrum) -> ConePoint {
    let u = 0.5 * forcing_budgets(p, s).b0;
    ConePoint::new(u, u / (0.5 * (1.0 + s.lambda_max())))
}

/// Stationary run of the cone diffusion. The `T` column holds `sum lambda_l q_l(W)`
/// and the flag column marks reflected steps.
pub fn simulate_effective(
    cfg: &SimConfig,
    p: &ModelParams,
    s: &Spectrum,
    q_source: &QSource,
    w0: Option<ConePoint>,
    rng: &mut StreamRng,
) -> Result<PathRecorder> {
    cfg.validate()?;
    p.check_spectrum(s)?;
    let mut w = w0.unwrap_or_else(|| default_initial_point(p, s));
    if !w.is_interior(s) {
        return Err(Error::OutsideCone { u: w.u, v: w.v });
    }
    let mut st = EffectiveStepper::new(p, s, q_source);
    let mut rec = PathRecorder::new(FlagKind::Reflected, cfg.burn_in);
    let obs = |w: ConePoint, st: &mut EffectiveStepper| -> Result<Observables> {
        Ok(Observables { u: w.u, v: w.v, t: st.weighted_q(w)? })
    };
    rec.push(0.0, obs(w, &mut st)?, false);
    let n = cfg.n_steps();
    let mut stats = RunStats { steps: n as u64, ..Default::default() };
    let mut reflected_since_record = false;
    for k in 1..=n {
        let t = k as f64 * cfg.h;
        let out = st.step(w, cfg.h, rng).map_err(|e| match e {
            e @ Error::StuckAtBoundary { .. } => e,
            e => Error::TrajectoryAborted { t, reason: e.to_string() },
        })?;
        w = out.point;
        stats.reflected_steps += out.reflected as u64;
        stats.halved_steps += (out.halvings > 0) as u64;
        reflected_since_record |= out.reflected;
        if k % cfg.record_stride == 0 {
            rec.push(t, obs(w, &mut st)?, reflected_since_record);
            reflected_since_record = false;
        }
    }
    rec.stats = stats;
    Ok(rec)
}

/// Largest boundary exponents allowed by the integrability condition, or
/// `None` when no positive exponent qualifies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmissibleExponents {
    pub alpha_max: Option<f64>,
    pub beta_max: Option<f64>,
}

pub const EXPONENT_MARGIN: f64 = 1e-9;

pub fn admissible_exponents(p: &ModelParams, s: &Spectrum) -> AdmissibleExponents {
    let lam = s.lambda();
    let top = s.lambda_max();
    let bound = |weight: &dyn Fn(f64) -> f64| {
        let terms: Vec<f64> = lam
            .iter()
            .enumerate()
            .map(|(l, &x)| weight(x) * (1.0 + p.delta_mode(l)))
            .collect();
        let sum: f64 = terms.iter().sum();
        let max = terms.iter().copied().fold(0.0, f64::max);
        if max <= 0.0 {
            return None;
        }
        let e = 0.5 * (sum / (2.0 * max) - 1.0) - EXPONENT_MARGIN;
        (e > 0.0).then_some(e)
    };
    AdmissibleExponents {
        alpha_max: bound(&|x| x - 1.0),
        beta_max: bound(&|x| top - x),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn setup() -> (Spectrum, ModelParams) {
        let s = Spectrum::torus(0.7, &[(0, 1), (1, 0), (1, 1), (0, 2)]).unwrap();
        (s, ModelParams::gaussian(4, 1.0, 0.5, 0.5).unwrap())
    }

    #[test]
    fn boundary_coefficients_are_degenerate() {
        let (s, p) = setup();
        let c = effective_coefficients(ConePoint::new(2.0, 2.0), &p, &s, &QSource::Exact).unwrap();
        assert_eq!((c.a11, c.a12, c.a22), (4.0, 4.0, 4.0));
        assert_eq!(c.determinant(), 0.0);
        let b = forcing_budgets(&p, &s);
        assert_eq!(c.drift_u, b.b1 - 4.0);
        let f = diffusion_factor(&c).unwrap();
        assert_eq!(f[1][1], 0.0);
    }

    #[test]
    fn interior_coefficients_are_elliptic() {
        let (s, p) = setup();
        let mut r = rng::stream(2, 0);
        let b = forcing_budgets(&p, &s);
        for _ in 0..200 {
            let ratio: f64 = r.random_range(1.001..3.999);
            let v: f64 = r.random_range(0.1..4.0);
            let w = ConePoint::new(ratio * v, v);
            let c = effective_coefficients(w, &p, &s, &QSource::Exact).unwrap();
            assert!(c.determinant() > 0.0);
            assert!((c.drift_v - (b.b0 - 2.0 * w.u)).abs() < 1e-12);
        }
    }

    #[test]
    fn factor_reproduces_twice_the_matrix() {
        let at = ConePoint::new(1.0, 1.0);
        let id = EffectiveCoefficients { a11: 0.5, a12: 0.0, a22: 0.5, drift_u: 0.0, drift_v: 0.0, at };
        assert_eq!(diffusion_factor(&id).unwrap(), [[1.0, 0.0], [0.0, 1.0]]);
        let mut r = rng::stream(3, 0);
        for _ in 0..1000 {
            let (x, y, z): (f64, f64, f64) = (r.random(), r.random(), r.random());
            let (a11, a12, a22) = (x * x + y * y, x * z, z * z + 0.1);
            let c = EffectiveCoefficients { a11, a12, a22, drift_u: 0.0, drift_v: 0.0, at };
            let f = diffusion_factor(&c).unwrap();
            let ulp = 4.0 * f64::EPSILON;
            assert!((f[0][0] * f[0][0] - 2.0 * a11).abs() <= ulp * 2.0 * a11);
            assert!((f[0][0] * f[1][0] - 2.0 * a12).abs() <= ulp * 2.0 * a11.max(a22));
            assert!((f[1][0].powi(2) + f[1][1].powi(2) - 2.0 * a22).abs() <= ulp * 2.0 * (a11 + a22));
        }
        let bad = EffectiveCoefficients { a11: 1.0, a12: 2.0, a22: 1.0, drift_u: 0.0, drift_v: 0.0, at };
        assert!(matches!(diffusion_factor(&bad), Err(Error::NotPsd(_))));
    }

    #[test]
    fn reflection_returns_into_cone() {
        let r = reflect(ConePoint::new(0.9, 1.0), 4.0);
        assert_eq!((r.u, r.v), (1.0, 0.9));
        let r = reflect(ConePoint::new(4.2, 1.0), 4.0);
        assert!(r.u < 4.0 * r.v);
        assert!(((r.u * r.u + r.v * r.v) - (4.2f64 * 4.2 + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn exponents_example() {
        let (s, p) = setup();
        let e = admissible_exponents(&p, &s);
        let sum: f64 = s.lambda().iter().map(|l| l - 1.0).sum();
        let alpha = 0.5 * (sum / 6.0 - 1.0) - EXPONENT_MARGIN;
        assert!((e.alpha_max.unwrap() - alpha).abs() < 1e-15);
        assert!((e.alpha_max.unwrap() - 0.5136).abs() < 1e-4);
        assert!((e.beta_max.unwrap() - 0.4864).abs() < 1e-4);
        // only the top pair carries weight: the strict inequality fails
        let nearly_off = -1.0 + 1e-12;
        let q = ModelParams::new(1.0, vec![0.0, nearly_off, nearly_off, 0.0], 0.5, 0.5).unwrap();
        assert_eq!(admissible_exponents(&q, &s).alpha_max, None);
    }

    #[test]
    fn zero_noise_step_follows_drift() {
        let (s, p) = setup();
        let q = QSource::Exact;
        let w = ConePoint::new(2.0, 1.0);
        let mut st = EffectiveStepper::new(&p, &s, &q);
        let c = effective_coefficients(w, &p, &s, &q).unwrap();
        let next = st.propose(w, 1e-3, [0.0, 0.0]).unwrap();
        assert_eq!(next, ConePoint::new(2.0 + c.drift_u * 1e-3, 1.0 + c.drift_v * 1e-3));
        assert!(next.is_interior(&s));
    }
}
