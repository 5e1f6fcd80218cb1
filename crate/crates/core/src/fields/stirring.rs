use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::QuadTerm;
use crate::error::{Error, Result};
use crate::numerics::{dot, norm_sq};
use crate::spectrum::Spectrum;

/// The stirring fields `Z_m`: the triple fields `T_J` for every triple of
/// modes with strictly increasing eigenvalues (lexicographic order), followed
/// by one rotation `R_i` per eigenvalue pair.
#[derive(Debug, Clone, PartialEq)]
pub struct StirringFamily {
    dim: usize,
    triples: Vec<[usize; 3]>,
    /// Three cyclic terms per triple, flattened.
    terms: Vec<QuadTerm>,
}

pub fn enumerate_stirring(s: &Spectrum) -> StirringFamily {
    let dim = s.dim();
    let inv: Vec<f64> = s.lambda().iter().map(|l| 1.0 / l).collect();
    let mut triples = Vec::new();
    let mut terms = Vec::new();
    for k in 0..dim {
        for l in (k + 1)..dim {
            if l / 2 == k / 2 {
                continue;
            }
            for m in (l + 1)..dim {
                if m / 2 == l / 2 {
                    continue;
                }
                triples.push([k, l, m]);
                for (a, b, c) in [(k, l, m), (l, m, k), (m, k, l)] {
                    terms.push(QuadTerm { i: a, j: b, out: c, coef: inv[a] - inv[b] });
                }
            }
        }
    }
    StirringFamily { dim, triples, terms }
}

impl StirringFamily {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn triples(&self) -> &[[usize; 3]] {
        &self.triples
    }

    pub fn n_triples(&self) -> usize {
        self.triples.len()
    }

    pub fn n_rotations(&self) -> usize {
        self.dim / 2
    }

    /// Total number of fields `M = |J| + n`.
    pub fn len(&self) -> usize {
        self.triples.len() + self.n_rotations()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Adds `scale * Z_m(x)` into `out` (zero-based `m`).
    #[inline]
    pub fn accumulate_field(&self, m: usize, x: &[f64], scale: f64, out: &mut [f64]) {
        let nt = self.triples.len();
        if m < nt {
            for t in &self.terms[3 * m..3 * m + 3] {
                t.apply(x, scale, out);
            }
        } else {
            let i = m - nt;
            out[2 * i] += scale * x[2 * i + 1];
            out[2 * i + 1] -= scale * x[2 * i];
        }
    }

    /// Adds `sum_m weights[m] * Z_m(x)` into `out`.
    #[inline]
    pub fn accumulate_weighted(&self, x: &[f64], weights: &[f64], out: &mut [f64]) {
        let nt = self.triples.len();
        for (chunk, &w) in self.terms.chunks_exact(3).zip(&weights[..nt]) {
            for t in chunk {
                t.apply(x, w, out);
            }
        }
        for (i, &w) in weights[nt..].iter().enumerate() {
            out[2 * i] += w * x[2 * i + 1];
            out[2 * i + 1] -= w * x[2 * i];
        }
    }

    /// `Z_m(x)`, or `None` for an out-of-range index.
    pub fn field(&self, m: usize, x: &[f64]) -> Option<Vec<f64>> {
        (m < self.len()).then(|| {
            let mut out = vec![0.0; x.len()];
            self.accumulate_field(m, x, 1.0, &mut out);
            out
        })
    }

    /// `sum_m (DZ_m(x)) Z_m(x)`.
    pub fn second_order_drift(&self, x: &[f64], out: &mut [f64]) {
        let nt = self.triples.len();
        let mut z = [0.0f64; 3];
        for chunk in self.terms.chunks_exact(3) {
            // Z_J(x) only has the three `out` components
            for (zc, t) in z.iter_mut().zip(chunk) {
                *zc = t.coef * x[t.i] * x[t.j];
            }
            let zval = |idx: usize| -> f64 {
                chunk.iter().zip(&z).filter(|(t, _)| t.out == idx).map(|(_, v)| *v).sum()
            };
            for t in chunk {
                out[t.out] += t.coef * (x[t.j] * zval(t.i) + x[t.i] * zval(t.j));
            }
        }
        for i in 0..(self.len() - nt) {
            out[2 * i] -= x[2 * i];
            out[2 * i + 1] -= x[2 * i + 1];
        }
    }
}

/// `Z_m(x)` with a zero-based field index.
pub fn eval_stirring(f: &StirringFamily, m: usize, x: &[f64], s: &Spectrum) -> Result<Vec<f64>> {
    s.check_dim(x.len())?;
    f.field(m, x).ok_or(Error::IndexOutOfRange { index: m, len: f.len() })
}

/// Stratonovich-to-Ito drift correction `(kappa / 2 eps) sum_m (DZ_m) Z_m`.
pub fn ito_correction(
    f: &StirringFamily,
    x: &[f64],
    kappa: f64,
    eps: f64,
    s: &Spectrum,
) -> Result<Vec<f64>> {
    s.check_dim(x.len())?;
    let mut out = vec![0.0; x.len()];
    f.second_order_drift(x, &mut out);
    let scale = kappa / (2.0 * eps);
    out.iter_mut().for_each(|v| *v *= scale);
    Ok(out)
}

/// Result of the projected full-rank diagnostic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinRank {
    /// Smallest eigenvalue of the normalised stirring Gram form on the complement.
    pub value: f64,
    /// Dimension of the complement the minimum was taken over.
    pub complement_dim: usize,
    /// Set when `x` and `Lambda^{-1} x` are colinear so only `x` was projected out.
    pub degenerate_complement: bool,
}

/// Minimum over unit `z` orthogonal to `x` in both inner products of
/// `sum_J <T_J(x), z>^2 / |x|^4 + sum_i <R_i(x), z>^2 / |x|^2`.
pub fn stirring_min_rank(f: &StirringFamily, x: &[f64], s: &Spectrum) -> Result<MinRank> {
    s.check_dim(x.len())?;
    let n = x.len();
    let u = norm_sq(x);
    if u == 0.0 {
        return Err(Error::ZeroState);
    }
    // Orthonormal basis of span{x, Lambda^{-1} x}^perp by Gram-Schmidt.
    let inv_x: Vec<f64> = x.iter().zip(s.lambda()).map(|(a, l)| a / l).collect();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    let push = |v: &[f64], basis: &mut Vec<Vec<f64>>| -> bool {
        let mut w = v.to_vec();
        for _ in 0..2 {
            for b in basis.iter() {
                let c = dot(&w, b);
                w.iter_mut().zip(b).for_each(|(wi, bi)| *wi -= c * bi);
            }
        }
        let nw = norm_sq(&w).sqrt();
        let nv = norm_sq(v).sqrt();
        if nw > 1e-10 * nv.max(1e-300) {
            w.iter_mut().for_each(|wi| *wi /= nw);
            basis.push(w);
            true
        } else {
            false
        }
    };
    push(x, &mut basis);
    let degenerate = !push(&inv_x, &mut basis);
    let n_excluded = basis.len();
    for l in 0..n {
        let mut e = vec![0.0; n];
        e[l] = 1.0;
        push(&e, &mut basis);
        if basis.len() == n {
            break;
        }
    }
    let comp = &basis[n_excluded..];
    let k = comp.len();
    let mut gram = DMatrix::<f64>::zeros(k, k);
    let mut add_row = |row: &[f64], weight: f64| {
        let p = DVector::from_iterator(k, comp.iter().map(|b| dot(b, row)));
        gram += weight * &p * p.transpose();
    };
    let nt = f.n_triples();
    for m in 0..f.len() {
        let field = f.field(m, x).expect("index in range");
        let w = if m < nt { 1.0 / (u * u) } else { 1.0 / u };
        add_row(&field, w);
    }
    let eig = SymmetricEigen::new(gram);
    let value = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(MinRank { value: value.max(0.0), complement_dim: k, degenerate_complement: degenerate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn spectrum() -> Spectrum {
        Spectrum::torus(0.7, &[(0, 1), (1, 0), (1, 1), (0, 2)]).unwrap()
    }

    #[test]
    fn family_counts_and_order() {
        let s = spectrum();
        let f = enumerate_stirring(&s);
        assert_eq!(f.n_triples(), 32);
        assert_eq!(f.len(), 36);
        // (1, 3, 5) in one-based notation
        assert_eq!(f.triples()[0], [0, 2, 4]);
        let s5 = Spectrum::explicit(vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let f5 = enumerate_stirring(&s5);
        assert_eq!(f5.n_triples(), 80);
        assert_eq!(f5.len(), 85);
        for w in f5.triples().windows(2) {
            assert!(w[0] < w[1]);
        }
    }

    #[test]
    fn rotation_and_triple_examples() {
        let s = spectrum();
        let f = enumerate_stirring(&s);
        let e1 = crate::StateVector::unit(8, 0);
        let r1 = eval_stirring(&f, f.n_triples(), &e1, &s).unwrap();
        assert_eq!(r1, vec![0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);

        let mut x = vec![0.0; 8];
        x[0] = 1.0;
        x[2] = 1.0;
        let t = eval_stirring(&f, 0, &x, &s).unwrap();
        let mut expected = vec![0.0; 8];
        expected[4] = 1.0 - 0.49;
        for (a, b) in t.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(dot(&t, &x), 0.0);
        assert!(matches!(
            eval_stirring(&f, 36, &x, &s),
            Err(Error::IndexOutOfRange { index: 36, len: 36 })
        ));
    }

    #[test]
    fn ito_correction_rotation_block_and_zero_state() {
        let s = spectrum();
        let f = enumerate_stirring(&s);
        let zero = ito_correction(&f, &[0.0; 8], 0.5, 0.25, &s).unwrap();
        assert!(zero.iter().all(|v| *v == 0.0));
        // on a single pair, T_J contributions vanish and only -x remains
        let x = [0.0, 0.0, 0.3, -0.8, 0.0, 0.0, 0.0, 0.0];
        let c = ito_correction(&f, &x, 0.5, 0.25, &s).unwrap();
        let scale = 0.5 / (2.0 * 0.25);
        for (ci, xi) in c.iter().zip(&x) {
            assert!((ci + scale * xi).abs() < 1e-15);
        }
    }

    #[test]
    fn ito_correction_matches_finite_difference_jacobians() {
        let s = spectrum();
        let f = enumerate_stirring(&s);
        let mut r = rng::stream(9, 0);
        let hstep = 1e-5;
        for _ in 0..10 {
            let x: Vec<f64> = (0..8).map(|_| r.random_range(-1.5..1.5)).collect();
            let analytic = ito_correction(&f, &x, 1.0, 0.5, &s).unwrap();
            let mut fd = vec![0.0; 8];
            for m in 0..f.len() {
                let z = f.field(m, &x).unwrap();
                // directional derivative of Z_m along Z_m(x)
                let xp: Vec<f64> = x.iter().zip(&z).map(|(a, b)| a + hstep * b).collect();
                let xm: Vec<f64> = x.iter().zip(&z).map(|(a, b)| a - hstep * b).collect();
                let zp = f.field(m, &xp).unwrap();
                let zm = f.field(m, &xm).unwrap();
                for l in 0..8 {
                    fd[l] += (zp[l] - zm[l]) / (2.0 * hstep);
                }
            }
            let scale = 1.0 / (2.0 * 0.5);
            let norm: f64 = analytic.iter().map(|v| v * v).sum::<f64>().sqrt();
            for (a, b) in analytic.iter().zip(&fd) {
                assert!((a - scale * b).abs() <= 1e-6 * norm.max(1.0));
            }
        }
    }

    #[test]
    fn min_rank_examples() {
        let s = spectrum();
        let f = enumerate_stirring(&s);
        let single = crate::StateVector::unit(8, 0);
        let r = stirring_min_rank(&f, &single, &s).unwrap();
        assert!(r.degenerate_complement);
        assert_eq!(r.complement_dim, 7);

        let mut x = vec![0.0; 8];
        x[0] = 1.0;
        x[7] = 1.0;
        let r = stirring_min_rank(&f, &x, &s).unwrap();
        assert!(!r.degenerate_complement);
        assert_eq!(r.complement_dim, 6);
        assert!(r.value > 0.0);
        let x2: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let r2 = stirring_min_rank(&f, &x2, &s).unwrap();
        assert!((r.value - r2.value).abs() <= 1e-12 * r.value.max(1.0));
        assert_eq!(stirring_min_rank(&f, &[0.0; 8], &s), Err(Error::ZeroState));
    }
}
