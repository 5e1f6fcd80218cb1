//! Independent reference computations checked against the library.

use galerkin_core::experiments::energy_distance;
use galerkin_core::polytope::{q_values, QMethod};
use galerkin_core::rng;
use galerkin_core::spectrum::phi_bound;
use galerkin_core::{ConePoint, Spectrum};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use rand::Rng;
use rand_distr::StandardNormal;

fn rational(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Exact partial sum of the series with rational `z`, `b`, `b'`.
fn phi_exact(z: BigRational, b: BigRational, b_prime: BigRational, terms: usize) -> f64 {
    let half = rational(1, 2);
    let one = rational(1, 1);
    let mut g = one.clone();
    let mut sum = rational(0, 1);
    for m in 0..terms {
        let mf = rational(m as i64, 1);
        sum += &g * (&one + &mf * &b_prime + &half * &b);
        g = g * &z * (&mf * &b_prime + &half * &b) / (&mf + &one);
    }
    sum.to_f64().unwrap()
}

#[test]
fn phi_matches_exact_rational_series() {
    // ratio of consecutive terms tends to z b' = 1/4; 400 terms leave < 1e-200
    let cases = [((1, 4), (8, 1), (1, 1)), ((1, 10), (3, 1), (2, 1)), ((1, 3), (1, 2), (1, 2))];
    for ((zn, zd), (bn, bd), (pn, pd)) in cases {
        let exact = phi_exact(rational(zn, zd), rational(bn, bd), rational(pn, pd), 400);
        let fast = phi_bound(zn as f64 / zd as f64, bn as f64 / bd as f64, pn as f64 / pd as f64).unwrap();
        assert!(((fast - exact) / exact).abs() < 1e-13, "{fast} vs {exact}");
    }
}

/// Modified Bessel functions of the first kind by their power series.
fn bessel_i(order: u32, x: f64) -> f64 {
    let half = 0.5 * x;
    let mut term = half.powi(order as i32) / (1..=order).map(f64::from).product::<f64>();
    let mut sum = term;
    for k in 1..200 {
        term *= half * half / (k as f64 * (k + order) as f64);
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum
}

/// `E|Z|` for a planar Gaussian `Z ~ N(m, s^2 I)` (Rice mean).
fn rice_mean(m: f64, s: f64) -> f64 {
    let x = -m * m / (2.0 * s * s);
    let laguerre = (x / 2.0).exp() * ((1.0 - x) * bessel_i(0, -x / 2.0) - x * bessel_i(1, -x / 2.0));
    s * (std::f64::consts::PI / 2.0).sqrt() * laguerre
}

#[test]
fn energy_distance_matches_gaussian_closed_form() {
    let n = 1000;
    for (k, shift) in [0.0, 0.3, 1.0].into_iter().enumerate() {
        let mut r = rng::stream(77, k as u64);
        let mut cloud = |dx: f64| -> Vec<[f64; 2]> {
            (0..n).map(|_| [dx + r.sample::<f64, _>(StandardNormal), r.sample::<f64, _>(StandardNormal)]).collect()
        };
        let a = cloud(0.0);
        let b = cloud(shift);
        let d = energy_distance(&a, &b, 5).unwrap();
        let sq2 = 2f64.sqrt();
        let exact = 2.0 * rice_mean(shift, sq2) - 2.0 * rice_mean(0.0, sq2);
        // V-statistic diagonal bias is E|X - X'| / n in expectation
        let bias = rice_mean(0.0, sq2) / n as f64;
        assert!((d.value - exact - bias).abs() < 4.0 * d.se + 1e-3, "shift {shift}: {} vs {exact} (se {})", d.value, d.se);
    }
}

#[test]
fn rice_mean_reduces_to_known_values() {
    // E|N(0, I_2)| = sqrt(pi / 2); far from the origin E|Z| ~ |m| + s^2 / (2 |m|)
    assert!((rice_mean(0.0, 1.0) - (std::f64::consts::PI / 2.0).sqrt()).abs() < 1e-14);
    assert!((rice_mean(20.0, 1.0) - (20.0 + 1.0 / 40.0)).abs() < 1e-4);
}

#[test]
fn q_matches_grid_centroid_of_fibre() {
    // the fibre is a planar polygon parametrised by (r_3, r_4); midpoint grid quadrature
    let s = Spectrum::explicit(vec![1.0, 2.0, 3.0, 5.0]).unwrap();
    let mu = s.mu().to_vec();
    let (u, v) = (2.5, 1.2);
    let box3 = (u - v) / (1.0 - 1.0 / mu[2]);
    let box4 = (u - v) / (1.0 - 1.0 / mu[3]);
    const G: usize = 3000;
    let mut sums = [0.0f64; 4];
    let mut count = 0usize;
    for i in 0..G {
        let r3 = box3 * (i as f64 + 0.5) / G as f64;
        for j in 0..G {
            let r4 = box4 * (j as f64 + 0.5) / G as f64;
            let a = u - r3 - r4;
            let b = v - r3 / mu[2] - r4 / mu[3];
            let r2 = (a - b) / (1.0 - 1.0 / mu[1]);
            let r1 = a - r2;
            if r1 >= 0.0 && r2 >= 0.0 {
                count += 1;
                for (k, r) in [r1, r2, r3, r4].into_iter().enumerate() {
                    sums[k] += r;
                }
            }
        }
    }
    let q = q_values(ConePoint::new(u, v), &s, QMethod::Exact).unwrap().q;
    for k in 0..4 {
        let grid = 0.5 * sums[k] / count as f64;
        assert!((q[2 * k] - grid).abs() < 2e-3 * u, "pair {k}: {} vs {grid}", q[2 * k]);
        assert_eq!(q[2 * k], q[2 * k + 1]);
    }
}
