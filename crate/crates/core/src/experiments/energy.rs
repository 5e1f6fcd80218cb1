//! Two-sample energy distance between planar point sets.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Pair budget above which both sets are thinned by a deterministic stride.
pub const PAIR_BUDGET: usize = 1_000_000;
const THINNED_SIZE: usize = 1000;
pub const MIN_SAMPLES: usize = 100;
pub const BOOTSTRAP_RESAMPLES: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyDistance {
    pub value: f64,
    pub se: f64,
    pub n_a: usize,
    pub n_b: usize,
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn thin_to(xs: &[[f64; 2]], target: usize) -> Vec<[f64; 2]> {
    let stride = xs.len().div_ceil(target).max(1);
    xs.iter().step_by(stride).copied().collect()
}

fn canonical_cmp(a: &[[f64; 2]], b: &[[f64; 2]]) -> std::cmp::Ordering {
    a.len().cmp(&b.len()).then_with(|| {
        let key = |p: &[f64; 2]| (p[0].to_bits(), p[1].to_bits());
        a.iter().map(key).cmp(b.iter().map(key))
    })
}

struct Distances {
    ab: Vec<f64>,
    aa: Vec<f64>,
    bb: Vec<f64>,
    na: usize,
    nb: usize,
}

impl Distances {
    fn new(a: &[[f64; 2]], b: &[[f64; 2]]) -> Self {
        let block = |x: &[[f64; 2]], y: &[[f64; 2]]| {
            x.iter().flat_map(|p| y.iter().map(move |q| dist(*p, *q))).collect::<Vec<_>>()
        };
        Self { ab: block(a, b), aa: block(a, a), bb: block(b, b), na: a.len(), nb: b.len() }
    }

    fn weighted_mean(d: &[f64], wx: &[f64], wy: &[f64]) -> f64 {
        let ny = wy.len();
        let mut s = 0.0;
        for (i, &w) in wx.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let row = &d[i * ny..(i + 1) * ny];
            s += w * row.iter().zip(wy).map(|(d, w)| d * w).sum::<f64>();
        }
        s
    }

    fn plain_mean(d: &[f64]) -> f64 {
        d.iter().sum::<f64>() / d.len() as f64
    }

    fn plain_statistic(&self) -> f64 {
        2.0 * Self::plain_mean(&self.ab) - Self::plain_mean(&self.aa) - Self::plain_mean(&self.bb)
    }

    /// V-statistic with point weights summing to one on each side.
    fn statistic(&self, wa: &[f64], wb: &[f64]) -> f64 {
        2.0 * Self::weighted_mean(&self.ab, wa, wb)
            - Self::weighted_mean(&self.aa, wa, wa)
            - Self::weighted_mean(&self.bb, wb, wb)
    }
}

/// `2 E|a - b| - E|a - a'| - E|b - b'|` by V-statistics, with a bootstrap
/// standard error. Symmetric in its arguments and zero on identical inputs.
pub fn energy_distance(a: &[[f64; 2]], b: &[[f64; 2]], seed: u64) -> Result<EnergyDistance> {
    for set in [a, b] {
        if set.len() < MIN_SAMPLES {
            return Err(Error::TooFewSamples { needed: MIN_SAMPLES, got: set.len() });
        }
    }
    let (a, b) = if canonical_cmp(a, b) == std::cmp::Ordering::Greater { (b, a) } else { (a, b) };
    let (a, b) = if a.len() * b.len() > PAIR_BUDGET {
        (thin_to(a, THINNED_SIZE), thin_to(b, THINNED_SIZE))
    } else {
        (a.to_vec(), b.to_vec())
    };
    let d = Distances::new(&a, &b);
    let value = d.plain_statistic();
    let mut r = rng::stream(seed, 0);
    let counts = |r: &mut rng::StreamRng, n: usize| {
        let mut w = vec![0.0; n];
        for _ in 0..n {
            w[r.random_range(0..n)] += 1.0 / n as f64;
        }
        w
    };
    let boot: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| {
            let wa = counts(&mut r, d.na);
            let wb = counts(&mut r, d.nb);
            d.statistic(&wa, &wb)
        })
        .collect();
    Ok(EnergyDistance { value, se: crate::numerics::variance(&boot).sqrt(), n_a: d.na, n_b: d.nb })
}
