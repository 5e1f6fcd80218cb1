//! Stationary estimation and the pass/fail checks built on it.

mod checks;
mod energy;
mod equilibration;
mod inviscid;
pub mod stats;

pub use checks::{
    block_bootstrap_se, check_exponential_bound, check_moment_identities, condensation_bounds,
    condensation_report, estimate_stationary, untamed_fraction, CheckReport, CondensationReport,
    CondensationRow, ExpBound, ExpMomentCheck, StationarySummary, Z_THRESHOLD,
};
pub use energy::{energy_distance, EnergyDistance};
pub use equilibration::{equilibration_test, EquilibrationReport, FINAL_REL_TOL};
pub use inviscid::{
    inviscid_sweep, stationary_sample, InviscidConfig, InviscidReport, InviscidRow,
    StationarySample, THINNING_TAU_MULTIPLE,
};
pub use stats::{batch_means, integrated_autocorrelation_time, mode_moments, MeanEstimate, ModeMoments};
