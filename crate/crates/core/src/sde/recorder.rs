use serde::{Deserialize, Serialize};

use super::fast::FastStats;
use crate::spectrum::Observables;

/// Meaning of the per-record boolean column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlagKind {
    /// The state lies in the good set.
    Good,
    /// The effective step that produced this point was reflected.
    Reflected,
}

impl FlagKind {
    pub fn column(&self) -> &'static str {
        match self {
            FlagKind::Good => "good_flag",
            FlagKind::Reflected => "reflected_flag",
        }
    }
}

/// Per-run counters.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunStats {
    pub steps: u64,
    pub fast: FastStats,
    pub reflected_steps: u64,
    pub halved_steps: u64,
}

/// Time series of `(U, V, T)` with an optional subsampled state history.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PathRecorder {
    pub times: Vec<f64>,
    pub observables: Vec<Observables>,
    pub flags: Vec<bool>,
    pub flag_kind: Option<FlagKind>,
    pub state_times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Records with `t < burn_in` belong to the transient.
    pub burn_in: f64,
    pub stats: RunStats,
}

impl PathRecorder {
    pub fn new(flag_kind: FlagKind, burn_in: f64) -> Self {
        Self { flag_kind: Some(flag_kind), burn_in, ..Default::default() }
    }

    pub fn push(&mut self, t: f64, obs: Observables, flag: bool) {
        debug_assert!(self.times.last().is_none_or(|&last| t > last));
        self.times.push(t);
        self.observables.push(obs);
        self.flags.push(flag);
    }

    pub fn push_state(&mut self, t: f64, x: &[f64]) {
        self.state_times.push(t);
        self.states.push(x.to_vec());
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Index of the first record at or after the burn-in time.
    pub fn first_stationary(&self) -> usize {
        self.times.partition_point(|&t| t < self.burn_in)
    }

    fn column(&self, f: impl Fn(&Observables) -> f64) -> Vec<f64> {
        self.observables[self.first_stationary()..].iter().map(f).collect()
    }

    /// Post-burn-in `U` series.
    pub fn u_series(&self) -> Vec<f64> {
        self.column(|o| o.u)
    }

    pub fn v_series(&self) -> Vec<f64> {
        self.column(|o| o.v)
    }

    pub fn t_series(&self) -> Vec<f64> {
        self.column(|o| o.t)
    }

    /// Post-burn-in states.
    pub fn stationary_states(&self) -> &[Vec<f64>] {
        let start = self.state_times.partition_point(|&t| t < self.burn_in);
        &self.states[start..]
    }

    /// Post-burn-in flag fraction.
    pub fn flag_fraction(&self) -> f64 {
        let flags = &self.flags[self.first_stationary()..];
        if flags.is_empty() {
            return 0.0;
        }
        flags.iter().filter(|&&f| f).count() as f64 / flags.len() as f64
    }
}
