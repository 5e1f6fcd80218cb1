//! Run configuration: a single JSON document with five blocks.

use std::fmt;

use galerkin_core::effective::QSource;
use galerkin_core::polytope::QMethod;
use galerkin_core::sde::{Mode, Model, SimConfig};
use galerkin_core::spectrum::GoodSet;
use galerkin_core::fields::{galerkin_triads, TriadTensor};
use galerkin_core::{ModelParams, Spectrum, SpectrumSource};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const DEFAULT_WAVEVECTORS: [[i64; 2]; 4] = [[0, 1], [1, 0], [1, 1], [0, 2]];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumBlock {
    /// Torus side ratio in `(0, 1]`; excludes `mu`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aspect: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wavevectors: Option<Vec<[i64; 2]>>,
    /// Explicit eigenvalue pairs `1 = mu_1 < mu_2 < ...`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<f64>>,
}

impl Default for SpectrumBlock {
    fn default() -> Self {
        Self { aspect: Some(0.7), wavevectors: Some(DEFAULT_WAVEVECTORS.to_vec()), mu: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamsBlock {
    pub a: f64,
    /// One value per eigenvalue pair; all zeros when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<Vec<f64>>,
    pub kappa: f64,
    pub eps: f64,
}

impl Default for ParamsBlock {
    fn default() -> Self {
        Self { a: 1.0, delta: None, kappa: 0.5, eps: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimBlock {
    pub h: f64,
    pub fast_substep_factor: f64,
    /// Model time, unitless.
    pub t_end: f64,
    pub burn_in: f64,
    pub seed: u64,
    pub record_stride: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub state_stride: Option<usize>,
    pub midpoint_tol: f64,
    pub midpoint_max_iter: usize,
    /// Step of the effective cone diffusion.
    pub effective_h: f64,
}

impl Default for SimBlock {
    fn default() -> Self {
        let d = SimConfig::default();
        Self {
            h: d.h,
            fast_substep_factor: d.fast_substep_factor,
            t_end: 2000.0,
            burn_in: 100.0,
            seed: 0,
            record_stride: d.record_stride,
            state_stride: None,
            midpoint_tol: d.midpoint_tol,
            midpoint_max_iter: d.midpoint_max_iter,
            effective_h: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QMethodName {
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentBlock {
    pub eps_grid: Vec<f64>,
    /// `[eps, kappa]` of the extra inviscid run; reported, not gated.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa_probe: Option<[f64; 2]>,
    pub eta: f64,
    pub u_min: f64,
    /// Unbounded when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u_max: Option<f64>,
    /// Exponents for the exponential-moment checks; `0.5 / B'` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z_values: Option<Vec<f64>>,
    /// One-based `ell0` values reported by `condensation`; all of `3..=N` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ell0: Option<Vec<usize>>,
    /// Ray-table resolution of the interpolated `q`.
    pub q_grid_points: usize,
    pub qtable_ratios: usize,
    pub q_method: QMethodName,
    pub q_samples: usize,
    pub t_grid: Vec<f64>,
    pub members: usize,
    /// Starting `(u, v)` of `equilibrate` when `x0` is absent.
    pub start: [f64; 2],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    /// Steps of the fast-only conservation check run by `check`.
    pub conservation_steps: usize,
}

impl Default for ExperimentBlock {
    fn default() -> Self {
        Self {
            eps_grid: vec![0.4, 0.1, 0.025],
            kappa_probe: Some([0.1, 0.25]),
            eta: 0.02,
            u_min: 0.0,
            u_max: None,
            z_values: None,
            ell0: None,
            q_grid_points: galerkin_core::polytope::RayTable::DEFAULT_POINTS,
            qtable_ratios: 64,
            q_method: QMethodName::Exact,
            q_samples: 200_000,
            t_grid: vec![0.0, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0],
            members: 512,
            start: [2.0, 1.0],
            x0: None,
            conservation_steps: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputBlock {
    pub directory: String,
    /// JSON reports and the manifest are always written; `csv` enables tables.
    pub formats: Vec<Format>,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self { directory: "out".into(), formats: vec![Format::Csv, Format::Json] }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub spectrum: SpectrumBlock,
    pub params: ParamsBlock,
    pub sim: SimBlock,
    pub experiment: ExperimentBlock,
    pub output: OutputBlock,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    Parse(String),
    Validation { path: String, reason: String },
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Parse(m) => write!(f, "cannot parse configuration: {m}"),
            ConfigError::Validation { path, reason } => write!(f, "{path}: {reason}"),
        }
    }
}

impl std::error::Error for ConfigError {}

fn invalid(path: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError::Validation { path: path.into(), reason: reason.into() }
}

fn positive(path: &str, x: f64) -> Result<(), ConfigError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(invalid(path, format!("must be positive and finite, got {x}")))
    }
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Pretty JSON with every default written out.
pub fn emit_config(cfg: &RunConfig) -> String {
    let mut s = serde_json::to_string_pretty(cfg).expect("configuration serialises");
    s.push('\n');
    s
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let s = self.build_spectrum()?;
        self.build_params(&s)?;
        self.validate_sim()?;
        self.validate_experiment(&s)
    }

    pub fn build_spectrum(&self) -> Result<Spectrum, ConfigError> {
        let b = &self.spectrum;
        match (&b.mu, b.aspect, &b.wavevectors) {
            (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
                Err(invalid("spectrum", "give either `mu` or `aspect` with `wavevectors`, not both"))
            }
            (Some(mu), None, None) => {
                Spectrum::explicit(mu.clone()).map_err(|e| invalid("spectrum.mu", e.to_string()))
            }
            (None, aspect, wv) => {
                let aspect = aspect.unwrap_or(0.7);
                if !(aspect > 0.0 && aspect <= 1.0) {
                    return Err(invalid("spectrum.aspect", format!("must lie in (0, 1], got {aspect}")));
                }
                let wv = wv.clone().unwrap_or_else(|| DEFAULT_WAVEVECTORS.to_vec());
                let pairs: Vec<(i64, i64)> = wv.iter().map(|k| (k[0], k[1])).collect();
                Spectrum::torus(aspect, &pairs).map_err(|e| invalid("spectrum.wavevectors", e.to_string()))
            }
        }
    }

    pub fn build_params(&self, s: &Spectrum) -> Result<ModelParams, ConfigError> {
        let p = &self.params;
        if !(p.a > 0.0 && p.a.is_finite()) {
            return Err(invalid("params.a", format!("forcing variance scale must be positive, got {}", p.a)));
        }
        let delta = p.delta.clone().unwrap_or_else(|| vec![0.0; s.n_pairs()]);
        if delta.len() != s.n_pairs() {
            return Err(invalid(
                "params.delta",
                format!("needs one value per eigenvalue pair ({}), got {}", s.n_pairs(), delta.len()),
            ));
        }
        for (i, d) in delta.iter().enumerate() {
            if !(*d > -1.0 && *d <= 0.0) {
                return Err(invalid(
                    format!("params.delta[{i}]"),
                    format!("damping perturbation must lie in (-1, 0], got {d}"),
                ));
            }
        }
        if !(p.kappa > 0.0 && p.kappa <= 1.0) {
            return Err(invalid("params.kappa", format!("stirring strength must lie in (0, 1], got {}", p.kappa)));
        }
        positive("params.eps", p.eps)?;
        ModelParams::new(p.a, delta, p.kappa, p.eps).map_err(|e| invalid("params", e.to_string()))
    }

    fn validate_sim(&self) -> Result<(), ConfigError> {
        let b = &self.sim;
        positive("sim.h", b.h)?;
        positive("sim.fast_substep_factor", b.fast_substep_factor)?;
        positive("sim.t_end", b.t_end)?;
        positive("sim.effective_h", b.effective_h)?;
        positive("sim.midpoint_tol", b.midpoint_tol)?;
        if !(b.burn_in >= 0.0 && b.burn_in < b.t_end) {
            return Err(invalid("sim.burn_in", format!("must lie in [0, t_end), got {}", b.burn_in)));
        }
        if b.record_stride == 0 {
            return Err(invalid("sim.record_stride", "must be at least 1"));
        }
        if b.state_stride == Some(0) {
            return Err(invalid("sim.state_stride", "must be at least 1"));
        }
        if b.midpoint_max_iter == 0 {
            return Err(invalid("sim.midpoint_max_iter", "must be at least 1"));
        }
        if b.h > b.t_end || b.effective_h > b.t_end {
            return Err(invalid("sim.h", "step exceeds t_end"));
        }
        Ok(())
    }

    fn validate_experiment(&self, s: &Spectrum) -> Result<(), ConfigError> {
        let e = &self.experiment;
        validate_eps_grid(&e.eps_grid)?;
        if let Some([eps, kappa]) = e.kappa_probe {
            positive("experiment.kappa_probe[0]", eps)?;
            if !(kappa > 0.0 && kappa <= 1.0) {
                return Err(invalid("experiment.kappa_probe[1]", format!("kappa must lie in (0, 1], got {kappa}")));
            }
        }
        if !(e.eta >= 0.0 && e.eta.is_finite()) {
            return Err(invalid("experiment.eta", format!("must be nonnegative, got {}", e.eta)));
        }
        if !(e.u_min >= 0.0 && e.u_min.is_finite()) {
            return Err(invalid("experiment.u_min", format!("must be nonnegative, got {}", e.u_min)));
        }
        if let Some(u_max) = e.u_max {
            if !(u_max > e.u_min) {
                return Err(invalid("experiment.u_max", format!("must exceed u_min, got {u_max}")));
            }
        }
        if let Some(zs) = &e.z_values {
            for (i, z) in zs.iter().enumerate() {
                if !(*z >= 0.0 && z.is_finite()) {
                    return Err(invalid(format!("experiment.z_values[{i}]"), format!("must be nonnegative, got {z}")));
                }
            }
        }
        if let Some(ells) = &e.ell0 {
            for (i, l) in ells.iter().enumerate() {
                if !(3..=s.dim()).contains(l) {
                    return Err(invalid(format!("experiment.ell0[{i}]"), format!("must lie in 3..={}, got {l}", s.dim())));
                }
            }
        }
        if e.q_grid_points < 2 {
            return Err(invalid("experiment.q_grid_points", "needs at least 2 points"));
        }
        if e.qtable_ratios < 2 {
            return Err(invalid("experiment.qtable_ratios", "needs at least 2 ratios"));
        }
        if e.q_samples < 100 {
            return Err(invalid("experiment.q_samples", "needs at least 100 samples"));
        }
        validate_t_grid(&e.t_grid)?;
        if e.members < 2 {
            return Err(invalid("experiment.members", "needs at least 2 members"));
        }
        if let Some(x0) = &e.x0 {
            if x0.len() != s.dim() {
                return Err(invalid("experiment.x0", format!("needs {} entries, got {}", s.dim(), x0.len())));
            }
            if x0.iter().any(|x| !x.is_finite()) || x0.iter().all(|x| *x == 0.0) {
                return Err(invalid("experiment.x0", "must be finite and nonzero"));
            }
        } else {
            let w = galerkin_core::ConePoint::new(e.start[0], e.start[1]);
            if !w.is_interior(s) {
                return Err(invalid("experiment.start", format!("({}, {}) is not inside the cone", w.u, w.v)));
            }
        }
        if e.conservation_steps == 0 {
            return Err(invalid("experiment.conservation_steps", "must be at least 1"));
        }
        if self.output.directory.is_empty() {
            return Err(invalid("output.directory", "must not be empty"));
        }
        Ok(())
    }

    /// Explicit spectra carry no Galerkin drift.
    pub fn model(&self) -> Result<Model, ConfigError> {
        let s = self.build_spectrum()?;
        let p = self.build_params(&s)?;
        let triads = match s.source() {
            SpectrumSource::Torus { .. } => galerkin_triads(&s),
            SpectrumSource::Explicit => Ok(TriadTensor::zero(&s)),
        }
        .map_err(|e| invalid("spectrum", e.to_string()))?;
        Model::new(s, p, triads).map_err(|e| invalid("spectrum", e.to_string()))
    }

    pub fn good_set(&self) -> GoodSet {
        let e = &self.experiment;
        GoodSet { u_min: e.u_min, u_max: e.u_max.unwrap_or(f64::INFINITY), eta: e.eta }
    }

    pub fn sim_config(&self, mode: Mode) -> SimConfig {
        let b = &self.sim;
        SimConfig {
            h: b.h,
            fast_substep_factor: b.fast_substep_factor,
            t_end: b.t_end,
            burn_in: b.burn_in,
            seed: b.seed,
            midpoint_tol: b.midpoint_tol,
            midpoint_max_iter: b.midpoint_max_iter,
            record_stride: b.record_stride,
            state_stride: b.state_stride,
            mode,
            good_set: self.good_set(),
        }
    }

    /// Same run parameters with the effective-diffusion step.
    pub fn effective_sim_config(&self) -> SimConfig {
        SimConfig { h: self.sim.effective_h, ..self.sim_config(Mode::Full) }
    }

    pub fn q_method(&self) -> QMethod {
        match self.experiment.q_method {
            QMethodName::Exact => QMethod::Exact,
            QMethodName::MonteCarlo => QMethod::MonteCarlo { samples: self.experiment.q_samples, seed: self.sim.seed },
        }
    }

    pub fn q_source(&self, s: &Spectrum) -> Result<QSource, galerkin_core::Error> {
        Ok(QSource::Table(galerkin_core::polytope::RayTable::build(s, self.experiment.q_grid_points)?))
    }

    pub fn csv_enabled(&self) -> bool {
        self.output.formats.contains(&Format::Csv)
    }

    /// SHA-256 of the canonical serialisation, output block excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = OutputBlock::default();
        let text = serde_json::to_string(&c).expect("configuration serialises");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

pub fn validate_eps_grid(grid: &[f64]) -> Result<(), ConfigError> {
    if grid.len() < 3 {
        return Err(invalid("experiment.eps_grid", format!("needs at least 3 values, got {}", grid.len())));
    }
    for (i, e) in grid.iter().enumerate() {
        positive(&format!("experiment.eps_grid[{i}]"), *e)?;
    }
    if grid.windows(2).any(|w| w[0] < w[1]) {
        return Err(invalid("experiment.eps_grid", "must be sorted descending"));
    }
    Ok(())
}

pub fn validate_t_grid(grid: &[f64]) -> Result<(), ConfigError> {
    if grid.is_empty() {
        return Err(invalid("experiment.t_grid", "must not be empty"));
    }
    for (i, t) in grid.iter().enumerate() {
        if !(*t >= 0.0 && t.is_finite()) {
            return Err(invalid(format!("experiment.t_grid[{i}]"), format!("must be nonnegative, got {t}")));
        }
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("experiment.t_grid", "must be strictly increasing"));
    }
    Ok(())
}
