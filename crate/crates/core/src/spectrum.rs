//! Spectral model, parameters, state observables and cone geometry.
//!
//! Indices are zero-based throughout the crate: mode `l` here is mode `l + 1`
//! in one-based mathematical notation, and the eigenvalue pair `i` covers
//! modes `2i` and `2i + 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::CompensatedSum;

/// Relative tolerance used to decide that two raw eigenvalues coincide.
const EIGEN_COLLISION_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorusMode {
    pub kx: i64,
    pub ky: i64,
    /// Raw Laplacian eigenvalue `(kx / aspect)^2 + ky^2`.
    pub raw_eigenvalue: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SpectrumSource {
    Torus { aspect: f64, modes: Vec<TorusMode> },
    Explicit,
}

/// Paired eigenvalue ladder `1 = mu_0 < mu_1 < ... < mu_{n-1}` expanded to
/// `lambda_{2i} = lambda_{2i+1} = mu_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    mu: Vec<f64>,
    lambda: Vec<f64>,
    source: SpectrumSource,
}

impl Spectrum {
    /// Builds the spectrum of the Laplacian on the torus
    /// `[0, 2 pi aspect) x [0, 2 pi)` restricted to the given wavevectors,
    /// normalised so that the smallest eigenvalue is exactly one.
    pub fn torus(aspect: f64, wavevectors: &[(i64, i64)]) -> Result<Self> {
        if !(aspect > 0.0 && aspect <= 1.0) {
            return Err(Error::BadAspect(aspect));
        }
        if wavevectors.len() < 4 {
            return Err(Error::DegenerateSpectrum(format!(
                "need at least 4 wavevectors, got {}",
                wavevectors.len()
            )));
        }
        let mut modes = Vec::with_capacity(wavevectors.len());
        for (idx, &(kx, ky)) in wavevectors.iter().enumerate() {
            if kx == 0 && ky == 0 {
                return Err(Error::DegenerateSpectrum(format!("wavevector {idx} is zero")));
            }
            if wavevectors[..idx].contains(&(kx, ky)) {
                return Err(Error::DegenerateSpectrum(format!(
                    "wavevector ({kx}, {ky}) repeated"
                )));
            }
            let kxs = kx as f64 / aspect;
            modes.push(TorusMode { kx, ky, raw_eigenvalue: kxs * kxs + (ky * ky) as f64 });
        }
        modes.sort_by(|a, b| a.raw_eigenvalue.total_cmp(&b.raw_eigenvalue));
        for w in modes.windows(2) {
            if (w[1].raw_eigenvalue - w[0].raw_eigenvalue).abs()
                <= EIGEN_COLLISION_RTOL * w[1].raw_eigenvalue
            {
                return Err(Error::DegenerateSpectrum(format!(
                    "wavevectors ({}, {}) and ({}, {}) share the eigenvalue {}",
                    w[0].kx, w[0].ky, w[1].kx, w[1].ky, w[0].raw_eigenvalue
                )));
            }
        }
        let min = modes[0].raw_eigenvalue;
        let mut mu: Vec<f64> = modes.iter().map(|m| m.raw_eigenvalue / min).collect();
        mu[0] = 1.0;
        Ok(Self::from_mu(mu, SpectrumSource::Torus { aspect, modes }))
    }

    /// Spectrum from an explicit list of pair eigenvalues.
    pub fn explicit(mu: Vec<f64>) -> Result<Self> {
        if mu.len() < 4 {
            return Err(Error::DegenerateSpectrum(format!(
                "need at least 4 eigenvalue pairs, got {}",
                mu.len()
            )));
        }
        if (mu[0] - 1.0).abs() > 1e-12 {
            return Err(Error::DegenerateSpectrum(format!("mu_1 must equal 1, got {}", mu[0])));
        }
        if mu.iter().any(|m| !m.is_finite()) {
            return Err(Error::DegenerateSpectrum("non-finite eigenvalue".into()));
        }
        for (i, w) in mu.windows(2).enumerate() {
            if w[1] <= w[0] {
                return Err(Error::DegenerateSpectrum(format!(
                    "eigenvalues must increase strictly: mu[{}] = {} >= mu[{}] = {}",
                    i,
                    w[0],
                    i + 1,
                    w[1]
                )));
            }
        }
        let mut mu = mu;
        mu[0] = 1.0;
        Ok(Self::from_mu(mu, SpectrumSource::Explicit))
    }

    fn from_mu(mu: Vec<f64>, source: SpectrumSource) -> Self {
        let lambda = mu.iter().flat_map(|&m| [m, m]).collect();
        Self { mu, lambda, source }
    }

    /// Number of eigenvalue pairs `n`.
    pub fn n_pairs(&self) -> usize {
        self.mu.len()
    }

    /// Ambient dimension `N = 2n`.
    pub fn dim(&self) -> usize {
        self.lambda.len()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn lambda_max(&self) -> f64 {
        *self.mu.last().expect("spectrum has at least four pairs")
    }

    pub fn source(&self) -> &SpectrumSource {
        &self.source
    }

    pub fn torus_modes(&self) -> Option<(f64, &[TorusMode])> {
        match &self.source {
            SpectrumSource::Torus { aspect, modes } => Some((*aspect, modes)),
            SpectrumSource::Explicit => None,
        }
    }

    pub fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: len });
        }
        Ok(())
    }
}

/// Free function form of [`Spectrum::torus`].
pub fn build_torus_spectrum(aspect: f64, wavevectors: &[(i64, i64)]) -> Result<Spectrum> {
    Spectrum::torus(aspect, wavevectors)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Gaussian variance scale `a > 0`.
    pub a: f64,
    /// One damping perturbation per eigenvalue pair, each in `(-1, 0]`.
    pub delta: Vec<f64>,
    /// Stirring strength in `(0, 1]`.
    pub kappa: f64,
    /// Time-scale separation `eps > 0`.
    pub eps: f64,
}

impl ModelParams {
    pub fn new(a: f64, delta: Vec<f64>, kappa: f64, eps: f64) -> Result<Self> {
        let p = Self { a, delta, kappa, eps };
        p.validate()?;
        Ok(p)
    }

    /// `delta = 0` on every pair.
    pub fn gaussian(n_pairs: usize, a: f64, kappa: f64, eps: f64) -> Result<Self> {
        Self::new(a, vec![0.0; n_pairs], kappa, eps)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.a.is_finite()) {
            return Err(Error::InvalidParameter {
                field: "a",
                reason: format!("the forcing variance scale must be positive, got {}", self.a),
            });
        }
        if let Some(d) = self.delta.iter().find(|d| !(**d > -1.0 && **d <= 0.0)) {
            return Err(Error::InvalidParameter {
                field: "delta",
                reason: format!("delta must lie in (-1, 0], got {d}"),
            });
        }
        if !(self.kappa > 0.0 && self.kappa <= 1.0) {
            return Err(Error::InvalidParameter {
                field: "kappa",
                reason: format!("kappa must lie in (0, 1], got {}", self.kappa),
            });
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::InvalidParameter {
                field: "eps",
                reason: format!("eps must be positive and finite, got {}", self.eps),
            });
        }
        Ok(())
    }

    pub fn check_spectrum(&self, s: &Spectrum) -> Result<()> {
        if self.delta.len() != s.n_pairs() {
            return Err(Error::DimensionMismatch { expected: s.n_pairs(), got: self.delta.len() });
        }
        Ok(())
    }

    /// `delta_l` for mode `l` (pairwise expanded).
    #[inline]
    pub fn delta_mode(&self, l: usize) -> f64 {
        self.delta[l / 2]
    }

    /// Per-mode forcing weight `a (1 + delta_l)`.
    pub fn forcing_weights(&self, s: &Spectrum) -> Vec<f64> {
        (0..s.dim()).map(|l| self.a * (1.0 + self.delta_mode(l))).collect()
    }

    pub fn with_eps(&self, eps: f64) -> Self {
        Self { eps, ..self.clone() }
    }

    pub fn with_kappa(&self, kappa: f64) -> Self {
        Self { kappa, ..self.clone() }
    }

    pub fn with_a(&self, a: f64) -> Self {
        Self { a, ..self.clone() }
    }
}

/// A point of `R^N` (the mode amplitudes `x_l`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector(Vec<f64>);

impl StateVector {
    pub fn new(x: Vec<f64>) -> Result<Self> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter {
                field: "x",
                reason: "state entries must be finite".into(),
            });
        }
        Ok(Self(x))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    /// Unit vector along mode `l`.
    pub fn unit(dim: usize, l: usize) -> Self {
        let mut x = vec![0.0; dim];
        x[l] = 1.0;
        Self(x)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Deref for StateVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for StateVector {
    fn from(x: Vec<f64>) -> Self {
        Self(x)
    }
}

/// Enstrophy `u = |x|^2`, energy `v = |x|^2_{-1}` and `t = sum lambda_l x_l^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observables {
    pub u: f64,
    pub v: f64,
    pub t: f64,
}

impl Observables {
    pub fn ratio(&self) -> f64 {
        self.u / self.v
    }

    pub fn cone_point(&self) -> ConePoint {
        ConePoint { u: self.u, v: self.v }
    }
}

pub fn compute_observables(x: &[f64], s: &Spectrum) -> Result<Observables> {
    s.check_dim(x.len())?;
    Ok(observables_unchecked(x, s.lambda()))
}

#[inline]
pub(crate) fn observables_unchecked(x: &[f64], lambda: &[f64]) -> Observables {
    let mut u = CompensatedSum::new();
    let mut v = CompensatedSum::new();
    let mut t = CompensatedSum::new();
    for (&xl, &lam) in x.iter().zip(lambda) {
        let sq = xl * xl;
        u.add(sq);
        v.add(sq / lam);
        t.add(lam * sq);
    }
    Observables { u: u.value(), v: v.value(), t: t.value() }
}

/// A point `(u, v)` of the plane; cone membership is checked against a spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConePoint {
    pub u: f64,
    pub v: f64,
}

/// Relative width of the boundary layer treated as the cone boundary.
pub const BOUNDARY_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeLocation {
    /// `u = v` (all mass on the lowest pair).
    LowerRay,
    /// `u = lambda_N v` (all mass on the top pair).
    UpperRay,
    Interior,
}

impl ConePoint {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn ratio(&self) -> f64 {
        self.u / self.v
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { u: c * self.u, v: c * self.v }
    }

    /// Membership in the closed cone `0 <= v <= u <= lambda_N v`, with the
    /// boundary tolerance applied.
    pub fn in_cone(&self, s: &Spectrum) -> bool {
        let tol = BOUNDARY_RTOL * self.u.abs().max(f64::MIN_POSITIVE);
        self.u.is_finite()
            && self.v.is_finite()
            && self.v >= 0.0
            && self.u >= self.v - tol
            && self.u <= s.lambda_max() * self.v + tol
    }

    /// Strict interior of the cone (no boundary tolerance).
    pub fn is_interior(&self, s: &Spectrum) -> bool {
        self.v > 0.0 && self.u > self.v && self.u < s.lambda_max() * self.v
    }

    pub fn locate(&self, s: &Spectrum) -> Result<ConeLocation> {
        if !self.in_cone(s) {
            return Err(Error::OutsideCone { u: self.u, v: self.v });
        }
        let tol = BOUNDARY_RTOL * self.u;
        if self.u - self.v <= tol {
            Ok(ConeLocation::LowerRay)
        } else if s.lambda_max() * self.v - self.u <= tol {
            Ok(ConeLocation::UpperRay)
        } else {
            Ok(ConeLocation::Interior)
        }
    }

    /// Sector index `i` (zero-based pair index) with `mu_{i-1} v < u <= mu_i v`.
    pub fn sector(&self, s: &Spectrum) -> usize {
        let r = self.ratio();
        s.mu().iter().position(|&m| r <= m).unwrap_or(s.n_pairs() - 1).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForcingBudgets {
    pub b0: f64,
    pub b0_prime: f64,
    pub b1: f64,
    pub b1_prime: f64,
    pub b_minus1: f64,
}

pub fn forcing_budgets(p: &ModelParams, s: &Spectrum) -> ForcingBudgets {
    let mut b0 = CompensatedSum::new();
    let mut b1 = CompensatedSum::new();
    let mut bm1 = CompensatedSum::new();
    let mut b0p = 0.0f64;
    let mut b1p = 0.0f64;
    for (l, &lam) in s.lambda().iter().enumerate() {
        let w = p.a * (1.0 + p.delta_mode(l));
        b0.add(w);
        b1.add(lam * w);
        bm1.add(w / lam);
        b0p = b0p.max(w);
        b1p = b1p.max(lam * w);
    }
    ForcingBudgets {
        b0: b0.value(),
        b0_prime: b0p,
        b1: b1.value(),
        b1_prime: b1p,
        b_minus1: bm1.value(),
    }
}

/// Good/untamed classification of a state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StateClass {
    Good,
    Untamed,
}

/// Bounds defining the good set: enstrophy in `[u_min, u_max]` and the ratio
/// `|x|^2 / |x|^2_{-1}` at least `eta` away from every eigenvalue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoodSet {
    pub u_min: f64,
    pub u_max: f64,
    pub eta: f64,
}

impl GoodSet {
    pub fn classify_observables(&self, obs: &Observables, s: &Spectrum) -> StateClass {
        let r = obs.ratio();
        let in_band = obs.u >= self.u_min && obs.u <= self.u_max;
        let separated = s.mu().iter().all(|&m| (r - m).abs() >= self.eta);
        if in_band && separated {
            StateClass::Good
        } else {
            StateClass::Untamed
        }
    }
}

pub fn classify_state(
    x: &[f64],
    s: &Spectrum,
    u_min: f64,
    u_max: f64,
    eta: f64,
) -> Result<StateClass> {
    let obs = compute_observables(x, s)?;
    if obs.u == 0.0 {
        return Err(Error::ZeroState);
    }
    Ok(GoodSet { u_min, u_max, eta }.classify_observables(&obs, s))
}

const PHI_REL_TOL: f64 = 1e-16;
const PHI_MAX_TERMS: usize = 1_000_000;

/// Series bound `Phi(z, b, b')` controlling the exponential moments of the
/// stationary enstrophy and energy.
pub fn phi_bound(z: f64, b: f64, b_prime: f64) -> Result<f64> {
    if z * b_prime >= 1.0 {
        return Err(Error::DivergentSeries(z * b_prime));
    }
    if !(z >= 0.0 && b > 0.0 && b_prime > 0.0) {
        return Err(Error::InvalidParameter {
            field: "phi_bound",
            reason: format!("need z >= 0, b > 0, b' > 0 (z = {z}, b = {b}, b' = {b_prime})"),
        });
    }
    // g_m = z^m / m! * prod_{p<m} (p b' + b/2)
    let mut g = 1.0f64;
    let mut sum = CompensatedSum::new();
    for m in 0..PHI_MAX_TERMS {
        let mf = m as f64;
        let term = g * (1.0 + mf * b_prime + 0.5 * b);
        sum.add(term);
        let growth = z * (mf * b_prime + 0.5 * b) / (mf + 1.0);
        if term <= PHI_REL_TOL * sum.value() && growth < 1.0 {
            break;
        }
        g *= growth;
        if g == 0.0 {
            break;
        }
    }
    Ok(sum.value())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn default_spectrum() -> Spectrum {
        Spectrum::torus(0.7, &[(0, 1), (1, 0), (1, 1), (0, 2)]).unwrap()
    }

    #[test]
    fn torus_spectrum_examples() {
        let s = default_spectrum();
        // (1/0.7)^2 = 2.0408163..., normalised by the minimum raw value 1
        let expected = [1.0, 1.0 / 0.49, 1.0 + 1.0 / 0.49, 4.0];
        for (m, e) in s.mu().iter().zip(expected) {
            assert_relative_eq!(*m, e, max_relative = 1e-14);
        }
        assert_eq!(s.lambda().len(), 8);
        assert_eq!(s.lambda()[2], s.lambda()[3]);

        let s2 = Spectrum::torus(0.7, &[(0, 1), (1, 0), (0, 2), (2, 0)]).unwrap();
        let expected = [1.0, 1.0 / 0.49, 4.0, 4.0 / 0.49];
        for (m, e) in s2.mu().iter().zip(expected) {
            assert_relative_eq!(*m, e, max_relative = 1e-14);
        }
    }

    #[test]
    fn torus_spectrum_rejects_collisions_and_bad_aspect() {
        let err = Spectrum::torus(1.0, &[(0, 1), (1, 0), (1, 1), (0, 2)]).unwrap_err();
        assert!(matches!(err, Error::DegenerateSpectrum(_)));
        assert_eq!(
            Spectrum::torus(1.5, &[(0, 1), (1, 0), (1, 1), (0, 2)]).unwrap_err(),
            Error::BadAspect(1.5)
        );
        assert!(Spectrum::torus(0.7, &[(0, 1), (0, -1), (1, 1), (0, 2)]).is_err());
        assert!(Spectrum::torus(0.7, &[(0, 0), (1, 0), (1, 1), (0, 2)]).is_err());
    }

    #[test]
    fn explicit_spectrum_validation() {
        assert!(Spectrum::explicit(vec![1.0, 2.0, 3.0, 4.0]).is_ok());
        assert!(Spectrum::explicit(vec![1.0, 2.0, 2.0, 4.0]).is_err());
        assert!(Spectrum::explicit(vec![1.5, 2.0, 3.0, 4.0]).is_err());
        assert!(Spectrum::explicit(vec![1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn observables_examples() {
        let s = Spectrum::explicit(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let o = compute_observables(&StateVector::unit(8, 0), &s).unwrap();
        assert_eq!((o.u, o.v, o.t), (1.0, 1.0, 1.0));
        let o = compute_observables(&StateVector::unit(8, 7), &s).unwrap();
        assert_eq!((o.u, o.v, o.t), (1.0, 0.25, 4.0));
        let mut x = vec![0.0; 8];
        x[0] = 1.0;
        x[7] = 1.0;
        let o = compute_observables(&x, &s).unwrap();
        assert_eq!((o.u, o.v, o.t), (2.0, 1.25, 5.0));
        assert!(matches!(
            compute_observables(&[1.0, 2.0], &s),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn classify_examples() {
        let s = default_spectrum();
        let e1 = StateVector::unit(8, 0);
        assert_eq!(classify_state(&e1, &s, 0.5, 10.0, 1e-9).unwrap(), StateClass::Untamed);
        let mut x = vec![0.0; 8];
        x[0] = 1.0;
        x[7] = 1.0;
        // ratio 2 / 1.25 = 1.6; nearest eigenvalue 2.0408 at distance 0.4408
        assert_eq!(classify_state(&x, &s, 0.5, 10.0, 0.4).unwrap(), StateClass::Good);
        assert_eq!(classify_state(&x, &s, 0.5, 10.0, 0.5).unwrap(), StateClass::Untamed);
        assert_eq!(classify_state(&[0.0; 8], &s, 0.5, 10.0, 0.4), Err(Error::ZeroState));
    }

    #[test]
    fn budgets_examples() {
        let s = default_spectrum();
        let p = ModelParams::gaussian(4, 1.0, 0.5, 0.5).unwrap();
        let b = forcing_budgets(&p, &s);
        assert_relative_eq!(b.b0, 8.0);
        assert_relative_eq!(b.b0_prime, 1.0);
        let mu_sum: f64 = s.mu().iter().sum();
        assert_relative_eq!(b.b1, 2.0 * mu_sum, max_relative = 1e-15);
        assert_relative_eq!(b.b1, 20.163_265_306_122_45, max_relative = 1e-12);
        assert_relative_eq!(b.b1_prime, 4.0);

        let half = ModelParams::new(1.0, vec![-0.5; 4], 0.5, 0.5).unwrap();
        let bh = forcing_budgets(&half, &s);
        assert_relative_eq!(bh.b0, b.b0 / 2.0);
        assert_relative_eq!(bh.b1, b.b1 / 2.0, max_relative = 1e-15);
        assert_relative_eq!(bh.b_minus1, b.b_minus1 / 2.0, max_relative = 1e-15);
        assert!(b.b0_prime <= b.b0 && b.b0 < b.b1 && b.b1_prime <= b.b1);
    }

    #[test]
    fn params_validation() {
        assert!(ModelParams::new(1.0, vec![0.1, 0.0, 0.0, 0.0], 0.5, 0.5).is_err());
        assert!(ModelParams::new(1.0, vec![-1.0, 0.0, 0.0, 0.0], 0.5, 0.5).is_err());
        assert!(ModelParams::new(1.0, vec![0.0; 4], 0.0, 0.5).is_err());
        assert!(ModelParams::new(0.0, vec![0.0; 4], 0.5, 0.5).is_err());
        assert!(ModelParams::new(1.0, vec![0.0; 4], 0.5, 0.0).is_err());
    }

    #[test]
    fn phi_edge_cases() {
        assert_eq!(phi_bound(0.0, 8.0, 1.0).unwrap(), 5.0);
        assert!(matches!(phi_bound(1.0, 8.0, 1.0), Err(Error::DivergentSeries(_))));
        assert!(phi_bound(0.2, 8.0, 1.0).unwrap() <= phi_bound(0.3, 8.0, 1.0).unwrap());
    }

    #[test]
    fn cone_sector_and_location() {
        let s = default_spectrum();
        assert_eq!(ConePoint::new(3.0, 3.0).locate(&s).unwrap(), ConeLocation::LowerRay);
        assert_eq!(ConePoint::new(4.0, 1.0).locate(&s).unwrap(), ConeLocation::UpperRay);
        assert_eq!(ConePoint::new(2.0, 1.0).locate(&s).unwrap(), ConeLocation::Interior);
        assert_eq!(ConePoint::new(2.0, 1.0).sector(&s), 1);
        assert_eq!(ConePoint::new(2.5, 1.0).sector(&s), 2);
        assert_eq!(ConePoint::new(3.5, 1.0).sector(&s), 3);
        assert!(ConePoint::new(5.0, 1.0).locate(&s).is_err());
    }
}
