//! Fibres `X_{u,v}` of the enstrophy-energy map, their radial polytopes
//! `V_{u,v}` and the averaged coefficients `q_l(u, v)`.
//!
//! A state in the fibre is written pairwise as `x_{2i-1} = sqrt(s_i) cos(theta_i)`,
//! `x_{2i} = sqrt(s_i) sin(theta_i)`. The radial coordinates `sigma = (s_3, .., s_n)`
//! range over a convex polytope; `s_1` and `s_2` are affine functions of
//! `sigma`. The conditional law of the reference Gaussian on the fibre is
//! uniform in `sigma` and in the angles, so `q_{2i-1} = q_{2i} = E[s_i] / 2`.

mod geometry;
mod sampler;

pub use geometry::{enumerate_vertices, volume_and_centroid, Halfspace, VertexSet};
pub use sampler::{PolytopeSampler, SamplerKind, HIT_AND_RUN_THRESHOLD};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::CompensatedSum;
use crate::rng::{self, StreamRng};
use crate::spectrum::{observables_unchecked, ConeLocation, ConePoint, Spectrum, StateVector};

/// Largest polytope dimension handled by the exact vertex/triangulation path.
pub const MAX_EXACT_DIM: usize = 8;
/// Sample count used when an exact request exceeds [`MAX_EXACT_DIM`].
pub const FALLBACK_SAMPLES: usize = 200_000;
const FALLBACK_SEED: u64 = 0x5eed_0f_9011;
/// Relative tolerance below which `s_1`, `s_2` are treated as zero.
pub const RADIAL_TOL: f64 = 1e-12;

/// Inequality description of `V_{u,v}` in the coordinates `(s_3, .., s_n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorPolytope {
    pub u: f64,
    pub v: f64,
    pub dim: usize,
    /// `s_i <= (u - v) / (1 - 1/mu_i)`.
    pub box_bounds: Vec<f64>,
    /// Coefficients `1 - 1/mu_i` of the first linear form.
    pub ell1: Vec<f64>,
    /// Coefficients `1 - mu_2/mu_i` of the second linear form.
    pub ell2: Vec<f64>,
    /// Pair index `i0` (zero-based) with `mu_{i0-1} v < u <= mu_{i0} v`.
    pub sector: usize,
    pub location: ConeLocation,
    mu1_gap: f64,
    mu2: f64,
}

impl SectorPolytope {
    pub fn is_degenerate(&self) -> bool {
        self.location != ConeLocation::Interior
    }

    /// Right side `u - v` of `ell1(sigma) <= u - v`.
    pub fn ell1_bound(&self) -> f64 {
        self.u - self.v
    }

    /// Right side `u - mu_2 v` of `ell2(sigma) >= u - mu_2 v`.
    pub fn ell2_bound(&self) -> f64 {
        self.u - self.mu2 * self.v
    }

    /// The single point of a boundary polytope.
    pub fn dirac_point(&self) -> Option<Vec<f64>> {
        match self.location {
            ConeLocation::Interior => None,
            ConeLocation::LowerRay => Some(vec![0.0; self.dim]),
            ConeLocation::UpperRay => {
                let mut p = vec![0.0; self.dim];
                p[self.dim - 1] = self.u;
                Some(p)
            }
        }
    }

    /// Radial coordinates `(s_1, s_2)` determined by `sigma`.
    pub fn lower_radii(&self, sigma: &[f64]) -> (f64, f64) {
        let l1: f64 = self.ell1.iter().zip(sigma).map(|(c, s)| c * s).sum();
        let l2: f64 = self.ell2.iter().zip(sigma).map(|(c, s)| c * s).sum();
        let s1 = (self.mu2 * self.v - self.u + l2) / (self.mu2 - 1.0);
        let s2 = (self.u - self.v - l1) / self.mu1_gap;
        (s1, s2)
    }

    pub fn contains(&self, sigma: &[f64], tol: f64) -> bool {
        let l1: f64 = self.ell1.iter().zip(sigma).map(|(c, s)| c * s).sum();
        let l2: f64 = self.ell2.iter().zip(sigma).map(|(c, s)| c * s).sum();
        sigma.iter().all(|&s| s >= -tol)
            && l1 <= self.ell1_bound() + tol
            && l2 >= self.ell2_bound() - tol
    }

    /// The constraints `-s_i <= 0`, `ell1 <= u - v`, `-ell2 <= -(u - mu_2 v)`,
    /// each divided by `scale`.
    pub fn halfspaces(&self, scale: f64) -> Vec<Halfspace> {
        let d = self.dim;
        let mut h: Vec<Halfspace> = (0..d)
            .map(|i| {
                let mut a = vec![0.0; d];
                a[i] = -1.0;
                Halfspace { a, b: 0.0 }
            })
            .collect();
        h.push(Halfspace { a: self.ell1.clone(), b: self.ell1_bound() / scale });
        h.push(Halfspace {
            a: self.ell2.iter().map(|c| -c).collect(),
            b: -self.ell2_bound() / scale,
        });
        h
    }
}

pub fn build_polytope(w: ConePoint, s: &Spectrum) -> Result<SectorPolytope> {
    let location = w.locate(s)?;
    let mu = s.mu();
    let n = s.n_pairs();
    let mu2 = mu[1];
    let ell1: Vec<f64> = mu[2..].iter().map(|m| 1.0 - 1.0 / m).collect();
    let ell2: Vec<f64> = mu[2..].iter().map(|m| 1.0 - mu2 / m).collect();
    let box_bounds = ell1.iter().map(|c| (w.u - w.v).max(0.0) / c).collect();
    Ok(SectorPolytope {
        u: w.u,
        v: w.v,
        dim: n - 2,
        box_bounds,
        ell1,
        ell2,
        sector: if w.v > 0.0 { w.sector(s) } else { 0 },
        location,
        mu1_gap: 1.0 - 1.0 / mu2,
        mu2,
    })
}

/// Exact volume and centroid of a nondegenerate polytope.
pub fn volume_centroid(p: &SectorPolytope) -> Result<(f64, Vec<f64>)> {
    if p.is_degenerate() {
        return Err(Error::DegeneratePolytope);
    }
    if p.dim > MAX_EXACT_DIM {
        return Err(Error::DimensionTooHigh(p.dim));
    }
    // work in coordinates sigma / u, where all data is of order one
    let scale = p.u;
    let h = p.halfspaces(scale);
    let tol = 1e-11;
    let vs = enumerate_vertices(&h, p.dim, tol);
    let (vol, c) = volume_and_centroid(&vs, p.dim, 1e-9)?;
    let volume = vol * scale.powi(p.dim as i32);
    Ok((volume, c.into_iter().map(|x| x * scale).collect()))
}

/// Maps radial coordinates and angles to a state on the fibre `X_{u,v}`.
pub fn lift_sample(
    sigma: &[f64],
    angles: &[f64],
    w: ConePoint,
    s: &Spectrum,
) -> Result<StateVector> {
    let p = build_polytope(w, s)?;
    let n = s.n_pairs();
    if sigma.len() != n - 2 {
        return Err(Error::DimensionMismatch { expected: n - 2, got: sigma.len() });
    }
    if angles.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: angles.len() });
    }
    let radii = radii_from_sigma(&p, sigma)?;
    let mut x = vec![0.0; 2 * n];
    for (i, (&r, &th)) in radii.iter().zip(angles).enumerate() {
        let amp = r.sqrt();
        let (sn, cs) = th.sin_cos();
        x[2 * i] = amp * cs;
        x[2 * i + 1] = amp * sn;
    }
    Ok(StateVector::from(x))
}

/// All pair radii `(s_1, .., s_n)` for a point `sigma` of the polytope.
pub fn radii_from_sigma(p: &SectorPolytope, sigma: &[f64]) -> Result<Vec<f64>> {
    let (s1, s2) = p.lower_radii(sigma);
    let floor = -RADIAL_TOL * p.u.max(f64::MIN_POSITIVE);
    for r in [s1, s2].into_iter().chain(sigma.iter().copied()) {
        if r < floor {
            return Err(Error::NegativeRadial(r));
        }
    }
    Ok([s1, s2].into_iter().chain(sigma.iter().copied()).map(|r| r.max(0.0)).collect())
}

/// How `q` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum QMethod {
    Exact,
    MonteCarlo { samples: usize, seed: u64 },
}

/// How a [`QValues`] was obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum QProvenance {
    Exact,
    Boundary,
    MonteCarlo { samples: usize, std_errors: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QValues {
    pub q: Vec<f64>,
    pub volume: f64,
    pub method: QProvenance,
}

impl QValues {
    pub fn std_errors(&self) -> Option<&[f64]> {
        match &self.method {
            QProvenance::MonteCarlo { std_errors, .. } => Some(std_errors),
            _ => None,
        }
    }
}

fn pair_radii_to_q(radii: &[f64]) -> Vec<f64> {
    radii.iter().flat_map(|&r| [0.5 * r, 0.5 * r]).collect()
}

fn boundary_q(p: &SectorPolytope) -> Vec<f64> {
    let mut q = vec![0.0; 2 * (p.dim + 2)];
    let n = q.len();
    match p.location {
        ConeLocation::LowerRay => {
            q[0] = 0.5 * p.u;
            q[1] = 0.5 * p.u;
        }
        _ => {
            q[n - 2] = 0.5 * p.u;
            q[n - 1] = 0.5 * p.u;
        }
    }
    q
}

pub fn q_values(w: ConePoint, s: &Spectrum, method: QMethod) -> Result<QValues> {
    let p = build_polytope(w, s)?;
    if p.is_degenerate() {
        return Ok(QValues { q: boundary_q(&p), volume: 0.0, method: QProvenance::Boundary });
    }
    match method {
        QMethod::Exact if p.dim <= MAX_EXACT_DIM => {
            let (volume, centroid) = volume_centroid(&p)?;
            let (s1, s2) = p.lower_radii(&centroid);
            let radii: Vec<f64> =
                [s1, s2].into_iter().chain(centroid).map(|r| r.max(0.0)).collect();
            Ok(QValues { q: pair_radii_to_q(&radii), volume, method: QProvenance::Exact })
        }
        QMethod::Exact => {
            let mut r = rng::stream(FALLBACK_SEED, 0);
            monte_carlo_q(&p, FALLBACK_SAMPLES, &mut r)
        }
        QMethod::MonteCarlo { samples, seed } => {
            let mut r = rng::stream(seed, 0);
            monte_carlo_q(&p, samples, &mut r)
        }
    }
}

/// Sample estimate of `q` with standard errors, drawing from `rng`.
pub fn monte_carlo_q(p: &SectorPolytope, samples: usize, rng: &mut StreamRng) -> Result<QValues> {
    if samples < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: samples });
    }
    let mut sampler = PolytopeSampler::new(p, rng)?;
    let n = p.dim + 2;
    let mut draws: Vec<Vec<f64>> = vec![Vec::with_capacity(samples); n];
    let mut sigma = vec![0.0; p.dim];
    for _ in 0..samples {
        sampler.sample_into(rng, &mut sigma);
        let (s1, s2) = p.lower_radii(&sigma);
        draws[0].push(s1);
        draws[1].push(s2);
        for (d, &x) in draws[2..].iter_mut().zip(&sigma) {
            d.push(x);
        }
    }
    let correlated = sampler.kind() == SamplerKind::HitAndRun;
    let mut radii = Vec::with_capacity(n);
    let mut radii_se = Vec::with_capacity(n);
    for d in &draws {
        let (m, se) = if correlated { batch_mean_se(d) } else { iid_mean_se(d) };
        radii.push(m);
        radii_se.push(se);
    }
    Ok(QValues {
        q: pair_radii_to_q(&radii),
        volume: sampler.volume_estimate(),
        method: QProvenance::MonteCarlo { samples, std_errors: pair_radii_to_q(&radii_se) },
    })
}

fn iid_mean_se(xs: &[f64]) -> (f64, f64) {
    let m = crate::numerics::mean(xs);
    let var = crate::numerics::variance(xs);
    (m, (var / xs.len() as f64).sqrt())
}

fn batch_mean_se(xs: &[f64]) -> (f64, f64) {
    const BATCHES: usize = 32;
    let len = xs.len() / BATCHES;
    if len < 2 {
        return iid_mean_se(xs);
    }
    let means: Vec<f64> = xs.chunks_exact(len).take(BATCHES).map(crate::numerics::mean).collect();
    let m = crate::numerics::mean(xs);
    (m, (crate::numerics::variance(&means) / BATCHES as f64).sqrt())
}

/// One row of a ray table: `q(r, 1)` on the ray of ratio `r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QRayRow {
    pub ratio: f64,
    pub sector: usize,
    pub values: QValues,
}

/// `q(r, 1)` for every ratio of a sorted grid inside `[1, lambda_N]`.
pub fn q_ray_table(s: &Spectrum, ratios: &[f64], method: QMethod) -> Result<Vec<QRayRow>> {
    let max = s.lambda_max();
    for w in ratios.windows(2) {
        if !(w[0] <= w[1]) {
            return Err(Error::InvalidParameter {
                field: "ratios",
                reason: "grid must be sorted ascending".into(),
            });
        }
    }
    ratios
        .iter()
        .enumerate()
        .map(|(k, &r)| {
            if !(1.0..=max).contains(&r) {
                return Err(Error::RatioOutOfRange { ratio: r, max });
            }
            let w = ConePoint::new(r, 1.0);
            let method = match method {
                QMethod::MonteCarlo { samples, seed } => {
                    QMethod::MonteCarlo { samples, seed: rng::derive_seed(seed, k as u64) }
                }
                m => m,
            };
            Ok(QRayRow { ratio: r, sector: w.sector(s), values: q_values(w, s, method)? })
        })
        .collect()
}

/// Uniform ratio grid `1 = r_0 < .. < r_{m-1} = lambda_N`.
pub fn uniform_ratio_grid(s: &Spectrum, points: usize) -> Vec<f64> {
    let max = s.lambda_max();
    let m = points.max(2);
    (0..m)
        .map(|k| if k == m - 1 { max } else { 1.0 + (max - 1.0) * k as f64 / (m - 1) as f64 })
        .collect()
}

/// Dense ray table with linear interpolation in the ratio and exact
/// homogeneous scaling `q(u, v) = v q(u/v, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RayTable {
    ratios: Vec<f64>,
    rows: Vec<Vec<f64>>,
    lambda_max: f64,
}

impl RayTable {
    pub const DEFAULT_POINTS: usize = 2048;

    pub fn build(s: &Spectrum, points: usize) -> Result<Self> {
        let ratios = uniform_ratio_grid(s, points);
        let rows = q_ray_table(s, &ratios, QMethod::Exact)?
            .into_iter()
            .map(|r| r.values.q)
            .collect();
        Ok(Self { ratios, rows, lambda_max: s.lambda_max() })
    }

    pub fn len(&self) -> usize {
        self.ratios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ratios.is_empty()
    }

    pub fn ratios(&self) -> &[f64] {
        &self.ratios
    }

    /// Writes `q(w)` into `out`.
    pub fn eval_into(&self, w: ConePoint, out: &mut [f64]) -> Result<()> {
        if !(w.v > 0.0) || !w.u.is_finite() {
            return Err(Error::OutsideCone { u: w.u, v: w.v });
        }
        let r = w.ratio();
        let tol = crate::spectrum::BOUNDARY_RTOL * r;
        if r < 1.0 - tol || r > self.lambda_max + tol {
            return Err(Error::OutsideCone { u: w.u, v: w.v });
        }
        let r = r.clamp(1.0, self.lambda_max);
        let m = self.ratios.len();
        let step = (self.lambda_max - 1.0) / (m - 1) as f64;
        let k = (((r - 1.0) / step).floor() as usize).min(m - 2);
        let (r0, r1) = (self.ratios[k], self.ratios[k + 1]);
        let t = ((r - r0) / (r1 - r0)).clamp(0.0, 1.0);
        for ((o, a), b) in out.iter_mut().zip(&self.rows[k]).zip(&self.rows[k + 1]) {
            *o = w.v * ((1.0 - t) * a + t * b);
        }
        Ok(())
    }

    pub fn eval(&self, w: ConePoint) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.rows[0].len()];
        self.eval_into(w, &mut out)?;
        Ok(out)
    }
}

/// Relative residuals of `sum q = u` and `sum q / lambda = v`.
pub fn identity_residuals(q: &[f64], w: ConePoint, s: &Spectrum) -> (f64, f64) {
    let obs_sum: CompensatedSum = q.iter().copied().collect();
    let inv_sum: CompensatedSum = q.iter().zip(s.lambda()).map(|(q, l)| q / l).collect();
    ((obs_sum.value() - w.u).abs() / w.u, (inv_sum.value() - w.v).abs() / w.v)
}

/// Observables of a lifted state, used to audit [`lift_sample`].
pub fn lifted_observables(x: &[f64], s: &Spectrum) -> ConePoint {
    observables_unchecked(x, s.lambda()).cone_point()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn spectrum() -> Spectrum {
        Spectrum::torus(0.7, &[(0, 1), (1, 0), (1, 1), (0, 2)]).unwrap()
    }

    #[test]
    fn boundary_points_are_dirac() {
        let s = spectrum();
        let p = build_polytope(ConePoint::new(3.0, 3.0), &s).unwrap();
        assert_eq!(p.dirac_point(), Some(vec![0.0, 0.0]));
        let q = q_values(ConePoint::new(3.0, 3.0), &s, QMethod::Exact).unwrap();
        assert_eq!(q.q, vec![1.5, 1.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let p = build_polytope(ConePoint::new(4.0, 1.0), &s).unwrap();
        assert_eq!(p.dirac_point(), Some(vec![0.0, 4.0]));
        let q = q_values(ConePoint::new(4.0, 1.0), &s, QMethod::Exact).unwrap();
        assert_eq!(q.q[6..], [2.0, 2.0]);
        assert_eq!(volume_centroid(&p), Err(Error::DegeneratePolytope));
        assert!(matches!(
            build_polytope(ConePoint::new(1.0, 2.0), &s),
            Err(Error::OutsideCone { .. })
        ));
    }

    #[test]
    fn simplex_case_matches_closed_form() {
        let s = spectrum();
        let w = ConePoint::new(2.0, 1.0);
        let p = build_polytope(w, &s).unwrap();
        assert!(p.ell2_bound() < 0.0);
        let c3 = 1.0 - 1.0 / s.mu()[2];
        let c4 = 0.75;
        let (vol, c) = volume_centroid(&p).unwrap();
        assert!((vol - 1.0 / (2.0 * c3 * c4)).abs() < 1e-12);
        assert!((c[0] - 1.0 / (3.0 * c3)).abs() < 1e-12);
        assert!((c[1] - 1.0 / (3.0 * c4)).abs() < 1e-12);
        let q = q_values(w, &s, QMethod::Exact).unwrap();
        assert!((q.q[4] - 1.0 / (6.0 * c3)).abs() < 1e-12);
        assert!((q.q[6] - 1.0 / (6.0 * c4)).abs() < 1e-12);
        let (ru, rv) = identity_residuals(&q.q, w, &s);
        assert!(ru < 1e-12 && rv < 1e-12);
    }

    #[test]
    fn homogeneity_and_positivity() {
        let s = spectrum();
        let mut r = rng::stream(4, 0);
        for _ in 0..50 {
            let ratio = r.random_range(1.01..3.99);
            let v = r.random_range(0.1..3.0);
            let w = ConePoint::new(ratio * v, v);
            let q = q_values(w, &s, QMethod::Exact).unwrap();
            let q2 = q_values(w.scaled(2.0), &s, QMethod::Exact).unwrap();
            assert!(q.q.iter().all(|&x| x > 0.0));
            for (a, b) in q.q.iter().zip(&q2.q) {
                assert!((2.0 * a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
            let (ru, rv) = identity_residuals(&q.q, w, &s);
            assert!(ru < 1e-9 && rv < 1e-9);
            assert!((q2.volume - 4.0 * q.volume).abs() <= 1e-10 * q2.volume);
        }
    }

    #[test]
    fn lift_lands_on_fibre() {
        let s = spectrum();
        let w = ConePoint::new(2.0, 1.0);
        let x = lift_sample(&[0.3, 0.2], &[0.1, 1.0, 2.0, 3.0], w, &s).unwrap();
        let back = lifted_observables(&x, &s);
        assert!((back.u - 2.0).abs() < 8.0 * f64::EPSILON * 2.0);
        assert!((back.v - 1.0).abs() < 8.0 * f64::EPSILON);
        let x0 = lift_sample(&[0.3, 0.2], &[0.0; 4], w, &s).unwrap();
        assert!(x0.iter().skip(1).step_by(2).all(|&v| v == 0.0));
        let x = lift_sample(&[0.0, 0.0], &[0.5; 4], ConePoint::new(3.0, 3.0), &s).unwrap();
        assert!((x[0] * x[0] + x[1] * x[1] - 3.0).abs() < 1e-15);
        assert!(matches!(
            lift_sample(&[5.0, 0.0], &[0.0; 4], w, &s),
            Err(Error::NegativeRadial(_))
        ));
    }

    #[test]
    fn ray_table_interpolation_keeps_identities() {
        let s = spectrum();
        let table = RayTable::build(&s, 64).unwrap();
        let w = ConePoint::new(2.7 * 1.3, 1.3);
        let q = table.eval(w).unwrap();
        let (ru, rv) = identity_residuals(&q, w, &s);
        assert!(ru < 1e-12 && rv < 1e-12);
        let exact = q_values(w, &s, QMethod::Exact).unwrap();
        for (a, b) in q.iter().zip(&exact.q) {
            assert!((a - b).abs() < 5e-3);
        }
        assert!(matches!(
            q_ray_table(&s, &[0.5], QMethod::Exact),
            Err(Error::RatioOutOfRange { .. })
        ));
    }

    #[test]
    fn higher_dimensional_polytopes() {
        let s = Spectrum::explicit(vec![1.0, 1.7, 2.3, 3.1, 4.4, 5.0]).unwrap();
        let mut r = rng::stream(5, 1);
        for _ in 0..10 {
            let ratio = r.random_range(1.05..4.95);
            let w = ConePoint::new(ratio, 1.0);
            let q = q_values(w, &s, QMethod::Exact).unwrap();
            let (ru, rv) = identity_residuals(&q.q, w, &s);
            assert!(ru < 1e-9 && rv < 1e-9, "{ratio}: {ru} {rv}");
            assert!(q.q.iter().all(|&x| x > 0.0));
        }
    }
}
