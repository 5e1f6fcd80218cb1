//! Time integration of the full fast-slow system, the fast-only flow and a
//! Heun reference scheme.
//!
//! The full dynamics is split as exact Ornstein-Uhlenbeck forcing over
//! `h/2`, a run of Stratonovich implicit-midpoint substeps of the fast part
//! (drift `b / eps` and stirring of strength `sqrt(kappa / eps)`), and
//! another exact forcing half step. Midpoint substeps preserve `|x|^2` and
//! `|x|^2_{-1}` up to the fixed-point tolerance.

mod fast;
mod integrate;
mod io;
mod ou;
mod recorder;

pub use fast::{fast_midpoint_step, FastStats, MAX_HALVINGS};
pub use integrate::{
    draw_stationary_gaussian, heun_reference_step, heun_step, run_ensemble, simulate,
    simulate_fast_heun, simulate_fast_only, simulate_full, simulate_reference, strang_step, Stepper,
};
pub use io::{read_snapshots, write_observables_csv, write_snapshots, SnapshotHeader};
pub use ou::{ou_step, OuPropagator};
pub use recorder::{FlagKind, PathRecorder, RunStats};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{enumerate_stirring, galerkin_triads, StirringFamily, TriadTensor};
use crate::spectrum::{GoodSet, ModelParams, Spectrum};

/// Which dynamics a simulation integrates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Forcing, damping, drift and stirring via Strang splitting.
    Full,
    /// Drift and stirring only; stays on the initial fibre.
    FastOnly,
    /// Full dynamics with the Heun predictor-corrector.
    Reference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Outer step.
    pub h: f64,
    /// Fast substep is `fast_substep_factor * eps`, capped by `h`.
    pub fast_substep_factor: f64,
    pub t_end: f64,
    pub burn_in: f64,
    pub seed: u64,
    pub midpoint_tol: f64,
    pub midpoint_max_iter: usize,
    /// Observables are recorded every `record_stride` outer steps.
    pub record_stride: usize,
    /// Full states are kept every `state_stride` outer steps when set.
    pub state_stride: Option<usize>,
    pub mode: Mode,
    /// Classification used for the `good_flag` column.
    pub good_set: GoodSet,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            h: 0.01,
            fast_substep_factor: 0.05,
            t_end: 100.0,
            burn_in: 10.0,
            seed: 0,
            midpoint_tol: 1e-12,
            midpoint_max_iter: 50,
            record_stride: 1,
            state_stride: None,
            mode: Mode::Full,
            good_set: GoodSet { u_min: 0.0, u_max: f64::INFINITY, eta: 0.1 },
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &'static str, reason: String| Err(Error::InvalidParameter { field, reason });
        if !(self.h > 0.0 && self.h.is_finite()) {
            return bad("h", format!("step must be positive, got {}", self.h));
        }
        if !(self.fast_substep_factor > 0.0 && self.fast_substep_factor.is_finite()) {
            return bad(
                "fast_substep_factor",
                format!("must be positive, got {}", self.fast_substep_factor),
            );
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad("t_end", format!("must be positive, got {}", self.t_end));
        }
        if !(self.burn_in >= 0.0 && self.burn_in < self.t_end) {
            return bad("burn_in", format!("must lie in [0, t_end), got {}", self.burn_in));
        }
        if !(self.midpoint_tol > 0.0) {
            return bad("midpoint_tol", format!("must be positive, got {}", self.midpoint_tol));
        }
        if self.midpoint_max_iter == 0 {
            return bad("midpoint_max_iter", "must be at least 1".into());
        }
        if self.record_stride == 0 {
            return bad("record_stride", "must be at least 1".into());
        }
        if self.state_stride == Some(0) {
            return bad("state_stride", "must be at least 1".into());
        }
        Ok(())
    }

    /// Number of outer steps covering `[0, t_end]`.
    pub fn n_steps(&self) -> usize {
        (self.t_end / self.h).round().max(1.0) as usize
    }

    /// Number of fast substeps per outer step of length `h`.
    pub fn fast_substeps(&self, h: f64, eps: f64) -> usize {
        (h / (self.fast_substep_factor * eps)).ceil().max(1.0) as usize
    }
}

/// Everything that defines the vector fields of the system.
#[derive(Debug, Clone)]
pub struct Model {
    pub spectrum: Spectrum,
    pub params: ModelParams,
    pub triads: TriadTensor,
    pub fields: StirringFamily,
}

impl Model {
    pub fn new(spectrum: Spectrum, params: ModelParams, triads: TriadTensor) -> Result<Self> {
        params.check_spectrum(&spectrum)?;
        if triads.dim() != spectrum.dim() {
            return Err(Error::DimensionMismatch { expected: spectrum.dim(), got: triads.dim() });
        }
        let fields = enumerate_stirring(&spectrum);
        Ok(Self { spectrum, params, triads, fields })
    }

    /// Model with the analytic torus triads.
    pub fn torus(spectrum: Spectrum, params: ModelParams) -> Result<Self> {
        let triads = galerkin_triads(&spectrum)?;
        Self::new(spectrum, params, triads)
    }

    pub fn with_params(&self, params: ModelParams) -> Result<Self> {
        params.check_spectrum(&self.spectrum)?;
        Ok(Self { params, ..self.clone() })
    }

    pub fn dim(&self) -> usize {
        self.spectrum.dim()
    }
}
