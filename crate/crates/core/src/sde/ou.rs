use rand::Rng;
use rand_distr::StandardNormal;

use crate::rng::StreamRng;
use crate::spectrum::{ModelParams, Spectrum, StateVector};

/// Exact transition of the forcing/damping part over a fixed time `tau`:
/// `x_l <- exp(-lambda_l tau) x_l + sd_l xi_l`.
#[derive(Debug, Clone, PartialEq)]
pub struct OuPropagator {
    pub tau: f64,
    decay: Vec<f64>,
    sd: Vec<f64>,
}

impl OuPropagator {
    pub fn new(tau: f64, p: &ModelParams, s: &Spectrum) -> Self {
        let (decay, sd) = s
            .lambda()
            .iter()
            .enumerate()
            .map(|(l, &lam)| {
                let var = 0.5 * p.a * (1.0 + p.delta_mode(l));
                // 1 - exp(-2 lambda tau) without cancellation for small tau
                let spread = -(-2.0 * lam * tau).exp_m1();
                ((-lam * tau).exp(), (var * spread).sqrt())
            })
            .unzip();
        Self { tau, decay, sd }
    }

    #[inline]
    pub fn apply(&self, x: &mut [f64], rng: &mut StreamRng) {
        for ((xl, d), sd) in x.iter_mut().zip(&self.decay).zip(&self.sd) {
            let xi: f64 = rng.sample(StandardNormal);
            *xl = d * *xl + sd * xi;
        }
    }

    /// Applies the map with externally supplied standard normals.
    #[inline]
    pub fn apply_with(&self, x: &mut [f64], xi: &[f64]) {
        for (((xl, d), sd), z) in x.iter_mut().zip(&self.decay).zip(&self.sd).zip(xi) {
            *xl = d * *xl + sd * z;
        }
    }
}

pub fn ou_step(
    x: &StateVector,
    tau: f64,
    p: &ModelParams,
    s: &Spectrum,
    rng: &mut StreamRng,
) -> StateVector {
    let mut out = x.as_slice().to_vec();
    OuPropagator::new(tau, p, s).apply(&mut out, rng);
    StateVector::from(out)
}
