//! Quadratic Galerkin drift `b(x)` and the stirring vector fields.
//!
//! Both the drift and the triple fields `T_J` are sums of monomials
//! `coef * x_i * x_j` feeding a third coordinate, so they share the
//! [`QuadTerm`] representation. Every term has `out` distinct from `i` and
//! `j`, which makes the divergence vanish structurally.

mod stirring;
mod triads;

pub use stirring::{
    enumerate_stirring, eval_stirring, ito_correction, stirring_min_rank, MinRank,
    StirringFamily,
};
pub use triads::{eval_drift, galerkin_triads, synthetic_triads, ModeBasis, ModeKind, TriadTensor};

/// `coef * x[i] * x[j]` added to component `out`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadTerm {
    pub i: usize,
    pub j: usize,
    pub out: usize,
    pub coef: f64,
}

impl QuadTerm {
    #[inline]
    pub fn apply(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        out[self.out] += scale * self.coef * x[self.i] * x[self.j];
    }
}
