use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::QuadTerm;
use crate::error::{Error, Result};
use crate::rng;
use crate::spectrum::Spectrum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeKind {
    Cos,
    Sin,
}

/// Eigenfunction attached to a mode index: `sqrt(2 / area) * cos(k . x)` or
/// `sin`, with `k = (kx / aspect, ky)`. Each wavevector contributes the cos
/// mode first, then the sin mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeBasis {
    pub kx: i64,
    pub ky: i64,
    pub kind: ModeKind,
}

/// Fully antisymmetric triad coefficients `t_{a,b,c}`.
///
/// Only one value per unordered triple `a < b < c` is stored; every other
/// ordering is recovered from it by the permutation sign, so antisymmetry in
/// the first two slots and cyclic invariance hold exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct TriadTensor {
    dim: usize,
    canonical: Vec<([usize; 3], f64)>,
    basis: Option<Vec<ModeBasis>>,
    terms: Vec<QuadTerm>,
}

fn permutation_sign(a: usize, b: usize, c: usize) -> ([usize; 3], f64) {
    let mut idx = [a, b, c];
    let mut sign = 1.0;
    // three-element bubble sort tracking transpositions
    for (p, q) in [(0, 1), (1, 2), (0, 1)] {
        if idx[p] > idx[q] {
            idx.swap(p, q);
            sign = -sign;
        }
    }
    (idx, sign)
}

impl TriadTensor {
    fn from_canonical(
        dim: usize,
        mut canonical: Vec<([usize; 3], f64)>,
        basis: Option<Vec<ModeBasis>>,
        s: &Spectrum,
    ) -> Self {
        canonical.retain(|(_, t)| *t != 0.0);
        canonical.sort_by(|a, b| a.0.cmp(&b.0));
        let inv: Vec<f64> = s.lambda().iter().map(|l| 1.0 / l).collect();
        let mut terms = Vec::with_capacity(3 * canonical.len());
        for &([i, j, k], tau) in &canonical {
            let candidates = [
                QuadTerm { i, j, out: k, coef: 2.0 * (inv[i] - inv[j]) * tau },
                QuadTerm { i: j, j: k, out: i, coef: 2.0 * (inv[j] - inv[k]) * tau },
                QuadTerm { i, j: k, out: j, coef: -2.0 * (inv[i] - inv[k]) * tau },
            ];
            terms.extend(candidates.into_iter().filter(|t| t.coef != 0.0));
        }
        Self { dim, canonical, basis, terms }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `t_{a,b,c}` for arbitrary (zero-based) indices.
    pub fn get(&self, a: usize, b: usize, c: usize) -> f64 {
        if a == b || b == c || a == c {
            return 0.0;
        }
        let (key, sign) = permutation_sign(a, b, c);
        match self.canonical.binary_search_by(|(k, _)| k.cmp(&key)) {
            Ok(pos) => sign * self.canonical[pos].1,
            Err(_) => 0.0,
        }
    }

    /// Nonzero values for sorted triples `a < b < c`.
    pub fn canonical_entries(&self) -> &[([usize; 3], f64)] {
        &self.canonical
    }

    /// All nonzero `(a, b, c, t)` with `a < b` (and `c` distinct from both).
    pub fn entries_a_lt_b(&self) -> Vec<(usize, usize, usize, f64)> {
        let mut out = Vec::with_capacity(3 * self.canonical.len());
        for &([i, j, k], _) in &self.canonical {
            for (a, b, c) in [(i, j, k), (i, k, j), (j, k, i)] {
                out.push((a, b, c, self.get(a, b, c)));
            }
        }
        out.sort_by(|x, y| (x.0, x.1, x.2).cmp(&(y.0, y.1, y.2)));
        out
    }

    pub fn basis(&self) -> Option<&[ModeBasis]> {
        self.basis.as_deref()
    }

    pub fn terms(&self) -> &[QuadTerm] {
        &self.terms
    }

    /// Adds `scale * b(x)` into `out`.
    #[inline]
    pub fn accumulate(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        for t in &self.terms {
            t.apply(x, scale, out);
        }
    }

    /// Returns a copy with every coefficient multiplied by `factor`.
    pub fn scaled(&self, factor: f64, s: &Spectrum) -> Self {
        let canonical = self.canonical.iter().map(|&(k, t)| (k, factor * t)).collect();
        Self::from_canonical(self.dim, canonical, self.basis.clone(), s)
    }

    /// Tensor with no interactions (`b = 0`).
    pub fn zero(s: &Spectrum) -> Self {
        Self::from_canonical(s.dim(), Vec::new(), None, s)
    }
}

fn mode_basis(s: &Spectrum) -> Result<(f64, Vec<ModeBasis>)> {
    let (aspect, modes) = s.torus_modes().ok_or(Error::NotTorusSourced)?;
    let basis = modes
        .iter()
        .flat_map(|m| {
            [
                ModeBasis { kx: m.kx, ky: m.ky, kind: ModeKind::Cos },
                ModeBasis { kx: m.kx, ky: m.ky, kind: ModeKind::Sin },
            ]
        })
        .collect();
    Ok((aspect, basis))
}

/// Fourier coefficients `(alpha_+, alpha_-)` of `h(theta) = alpha_+ e^{i theta} + alpha_- e^{-i theta}`.
fn fourier_pair(kind: ModeKind, differentiated: bool) -> (Complex64, Complex64) {
    let half = 0.5;
    match (kind, differentiated) {
        // cos
        (ModeKind::Cos, false) => (Complex64::new(half, 0.0), Complex64::new(half, 0.0)),
        // sin
        (ModeKind::Sin, false) => (Complex64::new(0.0, -half), Complex64::new(0.0, half)),
        // d/dtheta cos = -sin
        (ModeKind::Cos, true) => (Complex64::new(0.0, half), Complex64::new(0.0, -half)),
        // d/dtheta sin = cos
        (ModeKind::Sin, true) => (Complex64::new(half, 0.0), Complex64::new(half, 0.0)),
    }
}

/// Analytic `t_{a,b,c} = 1/2 <det(grad phi_a, grad phi_b), phi_c>` on the torus.
fn analytic_triad(aspect: f64, a: &ModeBasis, b: &ModeBasis, c: &ModeBasis) -> f64 {
    let area = 4.0 * std::f64::consts::PI * std::f64::consts::PI * aspect;
    let ka = (a.kx as f64 / aspect, a.ky as f64);
    let kb = (b.kx as f64 / aspect, b.ky as f64);
    let cross = ka.0 * kb.1 - ka.1 * kb.0;
    if cross == 0.0 {
        return 0.0;
    }
    let fa = fourier_pair(a.kind, true);
    let fb = fourier_pair(b.kind, true);
    let fc = fourier_pair(c.kind, false);
    let mut total = Complex64::new(0.0, 0.0);
    for sa in [1i64, -1] {
        for sb in [1i64, -1] {
            for sc in [1i64, -1] {
                let resonant = sa * a.kx + sb * b.kx + sc * c.kx == 0
                    && sa * a.ky + sb * b.ky + sc * c.ky == 0;
                if resonant {
                    let pick = |f: (Complex64, Complex64), sign: i64| if sign > 0 { f.0 } else { f.1 };
                    total += pick(fa, sa) * pick(fb, sb) * pick(fc, sc);
                }
            }
        }
    }
    // normalisation c^3 * area with c = sqrt(2 / area)
    let norm = (2.0 / area).powf(1.5) * area;
    0.5 * cross * norm * total.re
}

/// Galerkin-projected triad tensor over the retained torus modes.
pub fn galerkin_triads(s: &Spectrum) -> Result<TriadTensor> {
    let (aspect, basis) = mode_basis(s)?;
    let dim = s.dim();
    let mut canonical = Vec::new();
    for i in 0..dim {
        for j in (i + 1)..dim {
            for k in (j + 1)..dim {
                let t = analytic_triad(aspect, &basis[i], &basis[j], &basis[k]);
                if t.abs() > 1e-15 {
                    canonical.push(([i, j, k], t));
                }
            }
        }
    }
    Ok(TriadTensor::from_canonical(dim, canonical, Some(basis), s))
}

/// Random antisymmetric tensor over triples of modes in three distinct
/// eigenvalue pairs. Each triple is active with probability `density` and
/// gets a coefficient uniform in `[-magnitude, magnitude]`.
pub fn synthetic_triads(seed: u64, density: f64, magnitude: f64, s: &Spectrum) -> Result<TriadTensor> {
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::InvalidParameter {
            field: "density",
            reason: format!("density must lie in (0, 1], got {density}"),
        });
    }
    if !(magnitude > 0.0 && magnitude.is_finite()) {
        return Err(Error::InvalidParameter {
            field: "magnitude",
            reason: format!("magnitude must be positive, got {magnitude}"),
        });
    }
    let mut rng = rng::stream(seed, 0);
    let dim = s.dim();
    let mut canonical = Vec::new();
    for i in 0..dim {
        for j in (i + 1)..dim {
            for k in (j + 1)..dim {
                if i / 2 == j / 2 || j / 2 == k / 2 {
                    continue;
                }
                // draw both numbers unconditionally to keep the stream layout fixed
                let keep: f64 = rng.random();
                let value: f64 = rng.random_range(-1.0..=1.0);
                if keep < density {
                    canonical.push(([i, j, k], magnitude * value));
                }
            }
        }
    }
    Ok(TriadTensor::from_canonical(dim, canonical, None, s))
}

/// `b(x)`.
pub fn eval_drift(t: &TriadTensor, x: &[f64], s: &Spectrum) -> Result<Vec<f64>> {
    s.check_dim(x.len())?;
    if t.dim() != s.dim() {
        return Err(Error::DimensionMismatch { expected: s.dim(), got: t.dim() });
    }
    let mut out = vec![0.0; x.len()];
    t.accumulate(x, 1.0, &mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::dot;

    fn spectrum() -> Spectrum {
        Spectrum::torus(0.7, &[(0, 1), (1, 0), (1, 1), (0, 2)]).unwrap()
    }

    /// Naive `b_l = sum_{a,b} x_a x_b (1/lambda_a - 1/lambda_b) t_{a,b,l}`.
    fn dense_drift(t: &TriadTensor, x: &[f64], s: &Spectrum) -> Vec<f64> {
        let lam = s.lambda();
        let n = x.len();
        (0..n)
            .map(|l| {
                let mut acc = 0.0;
                for a in 0..n {
                    for b in 0..n {
                        acc += x[a] * x[b] * (1.0 / lam[a] - 1.0 / lam[b]) * t.get(a, b, l);
                    }
                }
                acc
            })
            .collect()
    }

    #[test]
    fn permutation_symmetries_are_exact() {
        let s = spectrum();
        let t = galerkin_triads(&s).unwrap();
        assert!(!t.canonical_entries().is_empty());
        for a in 0..8 {
            for b in 0..8 {
                for c in 0..8 {
                    assert_eq!(t.get(a, b, c), -t.get(b, a, c));
                    assert_eq!(t.get(a, b, c), t.get(c, a, b));
                }
                assert_eq!(t.get(a, a, b), 0.0);
            }
        }
    }

    #[test]
    fn selection_rule_activates_only_resonant_wavevectors() {
        let s = spectrum();
        let t = galerkin_triads(&s).unwrap();
        let basis = t.basis().unwrap();
        for &([i, j, k], _) in t.canonical_entries() {
            let mut ks: Vec<(i64, i64)> =
                [i, j, k].iter().map(|&m| (basis[m].kx, basis[m].ky)).collect();
            ks.sort();
            assert_eq!(ks, vec![(0, 1), (1, 0), (1, 1)]);
        }
    }

    #[test]
    fn drift_matches_dense_loop_and_conserves() {
        let s = spectrum();
        let t = galerkin_triads(&s).unwrap();
        let mut r = rng::stream(3, 0);
        for _ in 0..50 {
            let x: Vec<f64> = (0..8).map(|_| r.random_range(-2.0..2.0)).collect();
            let b = eval_drift(&t, &x, &s).unwrap();
            let dense = dense_drift(&t, &x, &s);
            for (p, q) in b.iter().zip(&dense) {
                assert!((p - q).abs() <= 1e-12 * (1.0 + q.abs()));
            }
            let inv: Vec<f64> = x.iter().zip(s.lambda()).map(|(a, l)| a / l).collect();
            let scale = 1.0 + dot(&x, &x).powf(1.5);
            assert!(dot(&x, &b).abs() <= 1e-12 * scale);
            assert!(dot(&inv, &b).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn drift_vanishes_on_single_modes() {
        let s = spectrum();
        let t = galerkin_triads(&s).unwrap();
        assert!(eval_drift(&t, &[0.0; 8], &s).unwrap().iter().all(|v| *v == 0.0));
        for l in 0..8 {
            let mut x = vec![0.0; 8];
            x[l] = 1.7;
            assert!(eval_drift(&t, &x, &s).unwrap().iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn synthetic_tensor_is_deterministic_and_linear() {
        let s = spectrum();
        let a = synthetic_triads(11, 0.5, 1.0, &s).unwrap();
        let b = synthetic_triads(11, 0.5, 1.0, &s).unwrap();
        assert_eq!(a, b);
        let c = synthetic_triads(11, 0.5, 2.0, &s).unwrap();
        let x = [0.3, -1.0, 0.7, 0.2, 1.1, -0.4, 0.9, 0.5];
        let ba = eval_drift(&a, &x, &s).unwrap();
        let bc = eval_drift(&c, &x, &s).unwrap();
        for (p, q) in ba.iter().zip(&bc) {
            assert!((2.0 * p - q).abs() <= 1e-14 * (1.0 + q.abs()));
        }
        assert!(synthetic_triads(1, 0.0, 1.0, &s).is_err());
        let sparse = synthetic_triads(5, 1e-3, 1.0, &s).unwrap();
        let bs = eval_drift(&sparse, &x, &s).unwrap();
        assert!(dot(&x, &bs).abs() < 1e-12);
    }

    #[test]
    fn explicit_spectrum_is_rejected() {
        let s = Spectrum::explicit(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(galerkin_triads(&s).unwrap_err(), Error::NotTorusSourced);
    }
}
