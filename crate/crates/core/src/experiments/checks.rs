use rand::Rng;
use serde::{Deserialize, Serialize};

use super::stats::{batch_means, integrated_autocorrelation_time, MeanEstimate, BATCHES, BATCH_TO_TAU};
use crate::error::{Error, Result};
use crate::rng;
use crate::sde::PathRecorder;
use crate::spectrum::{phi_bound, ForcingBudgets, GoodSet, Observables, Spectrum, StateClass};

/// Acceptance threshold in standard errors.
pub const Z_THRESHOLD: f64 = 3.0;

/// A single auditable pass/fail check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub check: String,
    pub inputs_hash: String,
    pub estimate: f64,
    pub se: f64,
    pub bound: f64,
    pub z: f64,
    pub pass: bool,
}

fn z_score(estimate: f64, bound: f64, se: f64) -> f64 {
    let diff = estimate - bound;
    if diff == 0.0 {
        0.0
    } else if se > 0.0 {
        diff / se
    } else {
        diff.signum() * f64::INFINITY
    }
}

impl CheckReport {
    /// Two-sided: `|estimate - bound| <= 3 se`.
    pub fn equality(check: &str, hash: &str, estimate: f64, se: f64, bound: f64) -> Self {
        let z = z_score(estimate, bound, se);
        Self {
            check: check.into(),
            inputs_hash: hash.into(),
            estimate,
            se,
            bound,
            z,
            pass: z.abs() <= Z_THRESHOLD,
        }
    }

    /// One-sided: `estimate <= bound + 3 se`.
    pub fn upper(check: &str, hash: &str, estimate: f64, se: f64, bound: f64) -> Self {
        let z = z_score(estimate, bound, se);
        Self {
            check: check.into(),
            inputs_hash: hash.into(),
            estimate,
            se,
            bound,
            z,
            pass: z <= Z_THRESHOLD,
        }
    }

    /// Exact predicate with the raw numbers attached.
    pub fn predicate(check: &str, hash: &str, estimate: f64, bound: f64, pass: bool) -> Self {
        Self {
            check: check.into(),
            inputs_hash: hash.into(),
            estimate,
            se: 0.0,
            bound,
            z: z_score(estimate, bound, 0.0),
            pass,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpMomentCheck {
    pub z: f64,
    pub empirical: f64,
    pub se: f64,
    pub phi_bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarySummary {
    pub mean_u: MeanEstimate,
    pub mean_v: MeanEstimate,
    pub mean_t: MeanEstimate,
    pub mean_u_minus_v: MeanEstimate,
    pub exp_moment_checks: Vec<ExpMomentCheck>,
    pub untamed_fraction: Option<MeanEstimate>,
    pub n_samples: usize,
    pub burn_in: f64,
    /// Integrated autocorrelation time of `U`, in samples.
    pub tau_int_u: f64,
    /// Set when batches are shorter than 50 autocorrelation times.
    pub autocorrelation_warning: bool,
    pub config_hash: String,
}

/// Batch-means summary of the post-burn-in part of a recorded path.
pub fn estimate_stationary(rec: &PathRecorder, burn_in: f64) -> Result<StationarySummary> {
    let start = rec.times.partition_point(|&t| t < burn_in);
    let obs: &[Observables] = &rec.observables[start..];
    if obs.len() < 2 * BATCHES {
        return Err(Error::TooShort(format!(
            "{} post-burn-in records, need at least {}",
            obs.len(),
            2 * BATCHES
        )));
    }
    let col = |f: fn(&Observables) -> f64| obs.iter().map(f).collect::<Vec<_>>();
    let u = col(|o| o.u);
    let tau = integrated_autocorrelation_time(&u);
    let batch_len = obs.len() / BATCHES;
    Ok(StationarySummary {
        mean_u: batch_means(&u)?,
        mean_v: batch_means(&col(|o| o.v))?,
        mean_t: batch_means(&col(|o| o.t))?,
        mean_u_minus_v: batch_means(&col(|o| o.u - o.v))?,
        exp_moment_checks: Vec::new(),
        untamed_fraction: None,
        n_samples: obs.len(),
        burn_in,
        tau_int_u: tau,
        autocorrelation_warning: (batch_len as f64) < BATCH_TO_TAU * tau,
        config_hash: String::new(),
    })
}

/// `2 E[U] = B_0` and `2 E[T] = B_1`.
pub fn check_moment_identities(sum: &StationarySummary, budgets: &ForcingBudgets) -> Vec<CheckReport> {
    let h = &sum.config_hash;
    let u = sum.mean_u.scaled(2.0);
    let t = sum.mean_t.scaled(2.0);
    vec![
        CheckReport::equality("moment_identity_u", h, u.mean, u.se, budgets.b0),
        CheckReport::equality("moment_identity_t", h, t.mean, t.se, budgets.b1),
    ]
}

/// Which exponential moment is bounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpBound {
    /// `E[exp(zV)(1 + U)] <= Phi(z, B_0, B_0')`.
    VBound,
    /// `E[exp(zU)(1 + T)] <= Phi(z, B_1, B_1')`.
    UBound,
}

/// Resamples of the moving-block bootstrap.
pub const BOOTSTRAP_RESAMPLES: usize = 200;

/// Block-bootstrap SE of the mean of a correlated series, using
/// [`BATCHES`] blocks per resample.
pub fn block_bootstrap_se(xs: &[f64], seed: u64) -> f64 {
    let block = (xs.len() / BATCHES).max(1);
    let starts = xs.len() - block + 1;
    let mut r = rng::stream(seed, 0);
    let means: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| {
            let mut s = 0.0;
            for _ in 0..BATCHES {
                let k = r.random_range(0..starts);
                s += xs[k..k + block].iter().sum::<f64>();
            }
            s / (BATCHES * block) as f64
        })
        .collect();
    crate::numerics::variance(&means).sqrt()
}

pub fn check_exponential_bound(
    samples: &[Observables],
    z: f64,
    budgets: &ForcingBudgets,
    which: ExpBound,
    inputs_hash: &str,
) -> Result<CheckReport> {
    let (b, bp, name) = match which {
        ExpBound::VBound => (budgets.b0, budgets.b0_prime, "exp_bound_v"),
        ExpBound::UBound => (budgets.b1, budgets.b1_prime, "exp_bound_u"),
    };
    let bound = phi_bound(z, b, bp)?;
    if samples.len() < 2 * BATCHES {
        return Err(Error::TooFewSamples { needed: 2 * BATCHES, got: samples.len() });
    }
    let values: Vec<f64> = samples
        .iter()
        .map(|o| match which {
            ExpBound::VBound => (z * o.v).exp() * (1.0 + o.u),
            ExpBound::UBound => (z * o.u).exp() * (1.0 + o.t),
        })
        .collect();
    let mean = crate::numerics::mean(&values);
    let se = block_bootstrap_se(&values, 0x0b00_7000 ^ z.to_bits());
    Ok(CheckReport::upper(name, inputs_hash, mean, se, bound))
}

impl StationarySummary {
    /// Runs both exponential checks at `z = 0.5 / B'` and stores them.
    pub fn attach_exp_checks(&mut self, samples: &[Observables], budgets: &ForcingBudgets) -> Result<Vec<CheckReport>> {
        let mut out = Vec::new();
        for (which, bp) in [(ExpBound::VBound, budgets.b0_prime), (ExpBound::UBound, budgets.b1_prime)] {
            let z = 0.5 / bp;
            let r = check_exponential_bound(samples, z, budgets, which, &self.config_hash)?;
            self.exp_moment_checks.push(ExpMomentCheck {
                z,
                empirical: r.estimate,
                se: r.se,
                phi_bound: r.bound,
                pass: r.pass,
            });
            out.push(r);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CondensationRow {
    /// One-based mode index.
    pub ell0: usize,
    pub i0: usize,
    pub middle: f64,
    /// Infinite for `ell0 = N`.
    pub loose: f64,
    pub middle_le_loose: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CondensationReport {
    pub rows: Vec<CondensationRow>,
    /// Empirical `2 E[U - V]`.
    pub estimate: f64,
    pub se: f64,
    pub min_middle: f64,
    /// `B_0 - B_{-1}`, the value without drift and stirring.
    pub eps_infinity_reference: f64,
    pub check: CheckReport,
    pub pass: bool,
}

/// Middle and loose condensation bounds for every `ell0` in `3..=N`.
pub fn condensation_bounds(budgets: &ForcingBudgets, s: &Spectrum) -> Vec<CondensationRow> {
    let lam = s.lambda();
    let n = s.n_pairs();
    let big_n = s.dim();
    let l3 = lam[2];
    let pref = l3 / (l3 - 1.0);
    (3..=big_n)
        .map(|ell0| {
            let i0 = ell0.div_ceil(2);
            let head = (budgets.b1 - budgets.b0) / (lam[ell0 - 1] - 1.0);
            let tail: f64 = (1..i0.saturating_sub(1)).map(|k| budgets.b0 / (n - k) as f64).sum();
            let middle = head + pref * tail;
            let loose = if ell0 == big_n {
                f64::INFINITY
            } else {
                head + pref * ell0 as f64 / (big_n - ell0) as f64 * budgets.b0
            };
            CondensationRow { ell0, i0, middle, loose, middle_le_loose: middle <= loose }
        })
        .collect()
}

pub fn condensation_report(
    sum_eff: &StationarySummary,
    budgets: &ForcingBudgets,
    s: &Spectrum,
) -> CondensationReport {
    let rows = condensation_bounds(budgets, s);
    let est = sum_eff.mean_u_minus_v.scaled(2.0);
    let min_middle = rows.iter().map(|r| r.middle).fold(f64::INFINITY, f64::min);
    let check = CheckReport::upper("condensation_bound", &sum_eff.config_hash, est.mean, est.se, min_middle);
    let pass = check.pass && rows.iter().all(|r| r.middle_le_loose);
    CondensationReport {
        rows,
        estimate: est.mean,
        se: est.se,
        min_middle,
        eps_infinity_reference: budgets.b0 - budgets.b_minus1,
        check,
        pass,
    }
}

/// Fraction of untamed states with its binomial standard error.
pub fn untamed_fraction(states: &[Vec<f64>], s: &Spectrum, good: GoodSet) -> Result<MeanEstimate> {
    if states.len() < 1000 {
        return Err(Error::TooFewSamples { needed: 1000, got: states.len() });
    }
    let untamed = states
        .iter()
        .filter(|x| {
            let obs = crate::spectrum::observables_unchecked(x, s.lambda());
            obs.u == 0.0 || good.classify_observables(&obs, s) == StateClass::Untamed
        })
        .count();
    let n = states.len() as f64;
    let p = untamed as f64 / n;
    Ok(MeanEstimate { mean: p, se: (p * (1.0 - p) / n).sqrt() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::{forcing_budgets, ModelParams};

    fn setup() -> (Spectrum, ForcingBudgets) {
        let s = Spectrum::torus(0.7, &[(0, 1), (1, 0), (1, 1), (0, 2)]).unwrap();
        let p = ModelParams::gaussian(4, 1.0, 0.5, 0.5).unwrap();
        let b = forcing_budgets(&p, &s);
        (s, b)
    }

    fn summary(mean_u: f64, se: f64, mean_t: f64) -> StationarySummary {
        let e = |m| MeanEstimate { mean: m, se };
        StationarySummary {
            mean_u: e(mean_u),
            mean_v: e(0.0),
            mean_t: e(mean_t),
            mean_u_minus_v: e(0.0),
            exp_moment_checks: vec![],
            untamed_fraction: None,
            n_samples: 100,
            burn_in: 0.0,
            tau_int_u: 1.0,
            autocorrelation_warning: false,
            config_hash: "h".into(),
        }
    }

    #[test]
    fn moment_identity_pass_and_fail() {
        let (_, b) = setup();
        let ok = check_moment_identities(&summary(b.b0 / 2.0, 0.01, b.b1 / 2.0), &b);
        assert!(ok.iter().all(|r| r.pass && r.z == 0.0));
        let shifted = check_moment_identities(&summary(b.b0 / 2.0 + 0.1, 0.01, b.b1 / 2.0), &b);
        assert!(!shifted[0].pass);
        assert!((shifted[0].z - 10.0).abs() < 1e-9);
    }

    #[test]
    fn zero_z_reduces_to_moment_identity() {
        let (_, b) = setup();
        let samples = vec![Observables { u: b.b0 / 2.0, v: 1.0, t: 3.0 }; 100];
        let r = check_exponential_bound(&samples, 0.0, &b, ExpBound::VBound, "").unwrap();
        assert_eq!(r.estimate, 1.0 + b.b0 / 2.0);
        assert!((r.bound - (1.0 + b.b0 / 2.0)).abs() < 1e-12);
        let heavy = vec![Observables { u: 50.0, v: 40.0, t: 100.0 }; 100];
        let r = check_exponential_bound(&heavy, 0.25, &b, ExpBound::VBound, "").unwrap();
        assert!(!r.pass);
        assert!(matches!(
            check_exponential_bound(&samples, 1.0, &b, ExpBound::VBound, ""),
            Err(Error::DivergentSeries(_))
        ));
    }

    #[test]
    fn condensation_examples() {
        let (s, b) = setup();
        let rows = condensation_bounds(&b, &s);
        assert_eq!(rows.len(), 6);
        assert_eq!(rows[0].ell0, 3);
        assert!((rows[0].middle - 11.686).abs() < 1e-3);
        assert!(rows.iter().all(|r| r.middle <= r.loose));
        let mut sum = summary(0.0, 0.05, 0.0);
        sum.mean_u_minus_v = MeanEstimate { mean: 1.9, se: 0.05 };
        let rep = condensation_report(&sum, &b, &s);
        assert!(rep.pass);
        let direct: f64 = s.lambda().iter().map(|l| 1.0 - 1.0 / l).sum();
        assert!((rep.eps_infinity_reference - direct).abs() < 1e-12);
        assert!((rep.eps_infinity_reference - 3.8622).abs() < 1e-4);
    }

    #[test]
    fn untamed_fraction_extremes() {
        let (s, _) = setup();
        let states: Vec<Vec<f64>> = (0..1000)
            .map(|k| (0..8).map(|l| ((k * 8 + l) as f64 * 0.37).sin()).collect())
            .collect();
        let all_good = untamed_fraction(&states, &s, GoodSet { u_min: 0.0, u_max: 1e9, eta: 0.0 }).unwrap();
        assert_eq!(all_good.mean, 0.0);
        let none = untamed_fraction(&states, &s, GoodSet { u_min: 0.0, u_max: 1e-9, eta: 0.0 }).unwrap();
        assert_eq!(none.mean, 1.0);
        assert!(untamed_fraction(&states[..10], &s, GoodSet { u_min: 0.0, u_max: 1.0, eta: 0.0 }).is_err());
    }
}
