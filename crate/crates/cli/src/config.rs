//! Run configuration files.
//!
//! A run is one JSON document. Every section rejects unknown keys, and
//! [`RunConfig::validate`] checks everything that can be checked before any
//! propagation starts.

use std::path::Path;

use lz3_core::analysis::{Axis, FitOptions, SweepGrid, DEFAULT_PEAK_FLOOR};
use lz3_core::bath::{self, BathModes, SpectralParams};
use lz3_core::eom::DEFAULT_REG;
use lz3_core::integrator::{DEFAULT_NORM_GUARD, DEFAULT_STARTUP_SUBSTEPS};
use lz3_core::{DriveSpec, ModelConfig, PropagationConfig, Solver, Spin, C64};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub bath: BathSection,
    pub propagation: PropagationSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<LevelsSection>,
    /// Free text, ignored by every command.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(rename = "D")]
    pub anisotropy: f64,
    pub drive: DriveSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum DriveSection {
    Linear {
        v: f64,
        #[serde(rename = "Delta")]
        delta: f64,
    },
    Periodic {
        #[serde(rename = "A_z")]
        a_z: f64,
        omega_z: f64,
        #[serde(rename = "A_x")]
        a_x: f64,
        omega_x: f64,
    },
}

/// A real number or an `[re, im]` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ComplexValue {
    Real(f64),
    Pair([f64; 2]),
}

impl Default for ComplexValue {
    fn default() -> Self {
        ComplexValue::Real(0.0)
    }
}

impl ComplexValue {
    pub fn value(self) -> C64 {
        match self {
            ComplexValue::Real(x) => C64::new(x, 0.0),
            ComplexValue::Pair([re, im]) => C64::new(re, im),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum BathSection {
    Single {
        omega_p: f64,
        #[serde(default)]
        eta_z: f64,
        #[serde(default)]
        eta_x: f64,
        #[serde(default)]
        f0: ComplexValue,
    },
    Spectral {
        alpha: f64,
        s: f64,
        omega_c: f64,
        omega_m: f64,
        #[serde(rename = "N_b")]
        n_modes: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverName {
    Gram,
    Stacked,
}

fn default_record_every() -> usize {
    10
}
fn default_noise() -> f64 {
    lz3_core::ansatz::DEFAULT_NOISE
}
fn default_tolerance() -> f64 {
    1e-6
}
fn default_reg() -> f64 {
    DEFAULT_REG
}
fn default_substeps() -> usize {
    DEFAULT_STARTUP_SUBSTEPS
}
fn default_norm_guard() -> f64 {
    DEFAULT_NORM_GUARD
}
fn default_solver() -> SolverName {
    SolverName::Gram
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropagationSection {
    #[serde(rename = "M")]
    pub multiplicity: usize,
    pub dt: f64,
    pub t_start: f64,
    pub t_end: f64,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default = "default_noise")]
    pub noise: f64,
    pub seed: u64,
    #[serde(default = "default_tolerance")]
    pub norm_tolerance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    #[serde(default)]
    pub record_energy: bool,
    /// Spin projection of the occupied level at `t_start`.
    #[serde(default)]
    pub initial_spin: i32,
    #[serde(default = "default_solver")]
    pub solver: SolverName,
    #[serde(default = "default_reg")]
    pub reg: f64,
    #[serde(default = "default_substeps")]
    pub startup_substeps: usize,
    #[serde(default = "default_norm_guard")]
    pub norm_guard: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSection {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl From<AxisSection> for Axis {
    fn from(a: AxisSection) -> Self {
        Axis {
            min: a.min,
            max: a.max,
            count: a.count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(rename = "D", default, skip_serializing_if = "Option::is_none")]
    pub anisotropy: Option<AxisSection>,
    #[serde(rename = "A_z", default, skip_serializing_if = "Option::is_none")]
    pub a_z: Option<AxisSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_obs: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub frames: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peak_floor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strip: Option<StripSection>,
}

fn default_offset() -> f64 {
    -1.0
}

/// Points on the line `D = D_offset + A_z`, each propagated over the whole
/// window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StripSection {
    #[serde(rename = "A_z")]
    pub a_z: Vec<f64>,
    #[serde(rename = "D_offset", default = "default_offset")]
    pub d_offset: f64,
}

fn default_smoothing() -> usize {
    1
}
fn default_spans() -> f64 {
    1.0
}
fn default_fit_spin() -> i32 {
    -1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    /// Bath couplings to run; defaults to the bath section's own `alpha`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub alphas: Vec<f64>,
    /// `[t_from, t_to]`; defaults to the propagation window.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<[f64; 2]>,
    #[serde(default = "default_smoothing")]
    pub smoothing: usize,
    #[serde(default = "default_spans")]
    pub max_period_spans: f64,
    #[serde(default = "default_fit_spin")]
    pub spin: i32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelsSection {
    pub n_max: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub count: usize,
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn core_invalid(e: lz3_core::Error) -> CliError {
    CliError::Validation(e.to_string())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Parses and validates.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| invalid(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.model()?;
        self.bath()?;
        let prop = self.propagation()?;
        if prop.n_max.is_some() && !matches!(self.bath, BathSection::Single { .. }) {
            return Err(invalid("propagation.n_max needs a single-mode bath"));
        }
        if let Some(sweep) = &self.sweep {
            self.validate_sweep(sweep, &prop)?;
        }
        if let Some(fit) = &self.fit {
            self.validate_fit(fit, &prop)?;
        }
        if let Some(levels) = &self.levels {
            if levels.count < 1 || !(levels.t_end >= levels.t_start) {
                return Err(invalid("levels needs count >= 1 and t_end >= t_start"));
            }
            if levels.count > 1 && levels.t_end == levels.t_start {
                return Err(invalid("levels with count > 1 needs t_end > t_start"));
            }
        }
        Ok(())
    }

    fn validate_sweep(&self, sweep: &SweepSection, prop: &PropagationConfig) -> Result<(), CliError> {
        if !self.model.drive_is_periodic() {
            return Err(invalid("sweeps need a periodic drive"));
        }
        if let Some(floor) = sweep.peak_floor {
            if !(floor >= 0.0) {
                return Err(invalid("sweep.peak_floor must be >= 0"));
            }
        }
        match (&sweep.strip, sweep.anisotropy.is_some() || sweep.a_z.is_some()) {
            (Some(_), true) => Err(invalid("sweep takes either axes or a strip, not both")),
            (Some(strip), false) => {
                if strip.a_z.is_empty() {
                    return Err(invalid("sweep.strip.A_z is empty"));
                }
                if strip.a_z.iter().any(|x| !x.is_finite()) || !strip.d_offset.is_finite() {
                    return Err(invalid("sweep.strip values must be finite"));
                }
                if sweep.t_obs.is_some() || !sweep.frames.is_empty() {
                    return Err(invalid("a strip records whole trajectories; drop t_obs and frames"));
                }
                Ok(())
            }
            (None, _) => self.grid()?.validate(prop).map_err(core_invalid),
        }
    }

    fn validate_fit(&self, fit: &FitSection, prop: &PropagationConfig) -> Result<(), CliError> {
        if fit.smoothing == 0 {
            return Err(invalid("fit.smoothing must be >= 1"));
        }
        if !(fit.max_period_spans > 0.0) {
            return Err(invalid("fit.max_period_spans must be > 0"));
        }
        Spin::from_projection(fit.spin).ok_or_else(|| invalid("fit.spin must be -1, 0 or 1"))?;
        if let Some([a, b]) = fit.window {
            if !(b > a && a >= prop.t_start && b <= prop.t_end) {
                return Err(invalid("fit.window must lie inside the propagation window"));
            }
        }
        for &alpha in &self.fit_alphas()? {
            self.bath_with_alpha(alpha)?;
        }
        Ok(())
    }

    pub fn model(&self) -> Result<ModelConfig, CliError> {
        let drive = match self.model.drive {
            DriveSection::Linear { v, delta } => DriveSpec::Linear { v, delta },
            DriveSection::Periodic {
                a_z,
                omega_z,
                a_x,
                omega_x,
            } => DriveSpec::Periodic {
                a_z,
                omega_z,
                a_x,
                omega_x,
            },
        };
        ModelConfig::new(self.model.anisotropy, drive).map_err(core_invalid)
    }

    pub fn bath(&self) -> Result<BathModes, CliError> {
        match self.bath {
            BathSection::Single {
                omega_p,
                eta_z,
                eta_x,
                f0,
            } => bath::single_mode(omega_p, eta_z, eta_x, f0.value()).map_err(core_invalid),
            BathSection::Spectral { .. } => {
                let p = self.spectral()?.expect("spectral bath");
                bath::discretize(&p).map_err(|e| match e {
                    lz3_core::Error::InvalidParameter(_) => core_invalid(e),
                    other => CliError::Numerical(other.to_string()),
                })
            }
        }
    }

    pub fn spectral(&self) -> Result<Option<SpectralParams>, CliError> {
        match self.bath {
            BathSection::Single { .. } => Ok(None),
            BathSection::Spectral {
                alpha,
                s,
                omega_c,
                omega_m,
                n_modes,
            } => {
                let p = SpectralParams {
                    alpha,
                    s,
                    omega_c,
                    omega_max: omega_m,
                    n_modes,
                };
                p.validate().map_err(core_invalid)?;
                Ok(Some(p))
            }
        }
    }

    /// The spectral bath regenerated at another coupling strength.
    pub fn bath_with_alpha(&self, alpha: f64) -> Result<BathModes, CliError> {
        let mut p = self.spectral()?.ok_or_else(|| invalid("fit needs a spectral bath"))?;
        p.alpha = alpha;
        p.validate().map_err(core_invalid)?;
        bath::discretize(&p).map_err(|e| CliError::Numerical(e.to_string()))
    }

    pub fn fit_alphas(&self) -> Result<Vec<f64>, CliError> {
        let fit = self.fit.as_ref().ok_or_else(|| invalid("config has no fit section"))?;
        if !fit.alphas.is_empty() {
            return Ok(fit.alphas.clone());
        }
        match self.spectral()? {
            Some(p) => Ok(vec![p.alpha]),
            None => Err(invalid("fit needs a spectral bath")),
        }
    }

    pub fn fit_options(&self) -> Result<FitOptions, CliError> {
        let fit = self.fit.as_ref().ok_or_else(|| invalid("config has no fit section"))?;
        Ok(FitOptions {
            smoothing: fit.smoothing,
            max_period_spans: fit.max_period_spans,
        })
    }

    pub fn propagation(&self) -> Result<PropagationConfig, CliError> {
        let p = &self.propagation;
        let initial_spin = Spin::from_projection(p.initial_spin)
            .ok_or_else(|| invalid("propagation.initial_spin must be -1, 0 or 1"))?;
        let cfg = PropagationConfig {
            t_start: p.t_start,
            t_end: p.t_end,
            dt: p.dt,
            record_every: p.record_every,
            reg: p.reg,
            noise: p.noise,
            seed: p.seed,
            multiplicity: p.multiplicity,
            norm_tolerance: p.norm_tolerance,
            n_max: p.n_max,
            record_energy: p.record_energy,
            initial_spin,
            solver: match p.solver {
                SolverName::Gram => Solver::Gram,
                SolverName::Stacked => Solver::Stacked,
            },
            startup_substeps: p.startup_substeps,
            norm_guard: p.norm_guard,
        };
        cfg.validate().map_err(core_invalid)?;
        Ok(cfg)
    }

    /// Observation times of a grid sweep: `frames`, then `t_obs` if it is not
    /// already one of them.
    pub fn frames(&self) -> Vec<f64> {
        let Some(sweep) = &self.sweep else { return Vec::new() };
        let mut frames = sweep.frames.clone();
        if let Some(t) = sweep.t_obs {
            if !frames.contains(&t) {
                frames.push(t);
            }
        }
        frames
    }

    pub fn grid(&self) -> Result<SweepGrid, CliError> {
        let sweep = self
            .sweep
            .as_ref()
            .ok_or_else(|| invalid("config has no sweep section"))?;
        let (Some(d), Some(a)) = (sweep.anisotropy, sweep.a_z) else {
            return Err(invalid("grid sweep needs both D and A_z axes"));
        };
        Ok(SweepGrid {
            anisotropy: d.into(),
            a_z: a.into(),
            frames: self.frames(),
            base_seed: self.propagation.seed,
        })
    }

    pub fn peak_floor(&self) -> f64 {
        self.sweep
            .as_ref()
            .and_then(|s| s.peak_floor)
            .unwrap_or(DEFAULT_PEAK_FLOOR)
    }
}

impl ModelSection {
    fn drive_is_periodic(&self) -> bool {
        matches!(self.drive, DriveSection::Periodic { .. })
    }
}
