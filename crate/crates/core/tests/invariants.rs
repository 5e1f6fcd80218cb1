use galerkin_core::exec::{self, Execution};
use galerkin_core::experiments::energy_distance;
use galerkin_core::fields::{enumerate_stirring, eval_drift, galerkin_triads};
use galerkin_core::polytope::{q_values, QMethod};
use galerkin_core::spectrum::phi_bound;
use galerkin_core::{ConePoint, Spectrum};
use proptest::prelude::*;

fn torus() -> Spectrum {
    Spectrum::torus(0.7, &[(0, 1), (1, 0), (1, 1), (0, 2)]).unwrap()
}

fn state() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, 8)
}

fn cloud() -> impl Strategy<Value = Vec<[f64; 2]>> {
    prop::collection::vec(prop::array::uniform2(-5.0f64..5.0), 100..140)
}

fn inner(x: &[f64], y: &[f64], w: &[f64]) -> f64 {
    x.iter().zip(y).zip(w).map(|((a, b), w)| a * b * w).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn drift_conserves_energy_and_enstrophy(x in state()) {
        let s = torus();
        let t = galerkin_triads(&s).unwrap();
        let b = eval_drift(&t, &x, &s).unwrap();
        let norm2: f64 = x.iter().map(|v| v * v).sum();
        let ones = vec![1.0; 8];
        let inv: Vec<f64> = s.lambda().iter().map(|l| 1.0 / l).collect();
        let scale = 1e-12 * (1.0 + norm2.powf(1.5));
        prop_assert!(inner(&x, &b, &ones).abs() <= scale);
        prop_assert!(inner(&x, &b, &inv).abs() <= scale);
    }

    #[test]
    fn stirring_fields_are_tangent_to_both_level_sets(x in state(), m in 0usize..36) {
        let s = torus();
        let f = enumerate_stirring(&s);
        let z = f.field(m % f.len(), &x).unwrap();
        let ones = vec![1.0; 8];
        let inv: Vec<f64> = s.lambda().iter().map(|l| 1.0 / l).collect();
        let norm2: f64 = x.iter().map(|v| v * v).sum();
        prop_assert!(inner(&x, &z, &ones).abs() <= 1e-12 * (1.0 + norm2));
        prop_assert!(inner(&x, &z, &inv).abs() <= 1e-12 * (1.0 + norm2));
    }

    #[test]
    fn q_satisfies_identities_and_is_homogeneous(t in 1e-5f64..(1.0 - 1e-5), v in 0.05f64..20.0, c in 0.1f64..10.0) {
        let s = torus();
        let ratio = 1.0 + t * (s.lambda_max() - 1.0);
        let w = ConePoint::new(ratio * v, v);
        let q = q_values(w, &s, QMethod::Exact).unwrap().q;
        prop_assert!(q.iter().all(|&x| x >= 0.0));
        let su: f64 = q.iter().sum();
        let sv: f64 = q.iter().zip(s.lambda()).map(|(q, l)| q / l).sum();
        prop_assert!((su / w.u - 1.0).abs() <= 1e-9);
        prop_assert!((sv / w.v - 1.0).abs() <= 1e-9);
        let scaled = q_values(ConePoint::new(c * w.u, c * w.v), &s, QMethod::Exact).unwrap().q;
        for (a, b) in scaled.iter().zip(&q) {
            prop_assert!((a - c * b).abs() <= 1e-11 * c * su);
        }
    }

    #[test]
    fn phi_is_increasing_in_z(z in 0.0f64..0.45, dz in 1e-3f64..0.04, b in 0.1f64..10.0, bp in 0.5f64..2.0) {
        let lo = phi_bound(z, b, bp).unwrap();
        let hi = phi_bound(z + dz, b, bp).unwrap();
        prop_assert!(lo >= 1.0 + 0.5 * b - 1e-12);
        prop_assert!(hi > lo);
    }

    #[test]
    fn energy_distance_is_symmetric_and_nonnegative(a in cloud(), b in cloud()) {
        let ab = energy_distance(&a, &b, 1).unwrap();
        let ba = energy_distance(&b, &a, 1).unwrap();
        prop_assert_eq!(ab.value, ba.value);
        prop_assert!(ab.value >= -1e-12);
        prop_assert!(energy_distance(&a, &a, 1).unwrap().value.abs() <= 1e-12);
    }

    #[test]
    fn execution_modes_agree(n in 0usize..200) {
        let job = |i: usize| (i as f64).sqrt().sin();
        prop_assert_eq!(exec::map_indexed(Execution::Sequential, n, job), exec::map_indexed(Execution::Parallel, n, job));
    }
}
