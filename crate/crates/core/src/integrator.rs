//! Fixed-step RK4 propagation with norm monitoring.

use alloc::vec::Vec;

use libm::{fabs, round};

use crate::ansatz::{
    fock_populations, hamiltonian_expectation, initial_state, populations, MultiD2State, ObservableRecord, Spin,
};
use crate::bath::BathModes;
use crate::eom::{derivative, DEFAULT_REG};
use crate::model::ModelConfig;
use crate::{Error, Result, C64};

pub use crate::eom::Solver;

pub const DEFAULT_STARTUP_SUBSTEPS: usize = 16;

pub const DEFAULT_NORM_GUARD: f64 = 1e-9;

/// At most `2^NORM_GUARD_DEPTH` pieces per step.
pub const NORM_GUARD_DEPTH: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct PropagationConfig {
    pub t_start: f64,
    pub t_end: f64,
    pub dt: f64,
    /// Record every this many steps; the first and last step are always kept.
    pub record_every: usize,
    /// Relative regularisation of the linear solve.
    pub reg: f64,
    /// Uniform initial noise amplitude.
    pub noise: f64,
    pub seed: u64,
    pub multiplicity: usize,
    pub norm_tolerance: f64,
    /// Record `P_{k,n}` up to this phonon number (single mode only).
    pub n_max: Option<usize>,
    pub record_energy: bool,
    pub initial_spin: Spin,
    pub solver: Solver,
    /// The first step is taken as this many equal RK4 substeps. Noise-seeded
    /// branches relax on a time scale far below `dt` right after the start.
    pub startup_substeps: usize,
    /// Largest norm change one step may make before it is split; 0 disables.
    pub norm_guard: f64,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self {
            t_start: 0.0,
            t_end: 5.0,
            dt: 1e-3,
            record_every: 10,
            reg: DEFAULT_REG,
            noise: crate::ansatz::DEFAULT_NOISE,
            seed: 0,
            multiplicity: 6,
            norm_tolerance: 1e-6,
            n_max: None,
            record_energy: false,
            initial_spin: Spin::Zero,
            solver: Solver::Gram,
            startup_substeps: DEFAULT_STARTUP_SUBSTEPS,
            norm_guard: DEFAULT_NORM_GUARD,
        }
    }
}

impl PropagationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_start.is_finite() && self.t_end.is_finite()) || !(self.t_end > self.t_start) {
            return Err(Error::InvalidParameter("need t_end > t_start"));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidParameter("dt must be > 0"));
        }
        if self.startup_substeps == 0 {
            return Err(Error::InvalidParameter("startup_substeps must be >= 1"));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidParameter("record_every must be >= 1"));
        }
        if !(self.reg >= 0.0) || !self.reg.is_finite() {
            return Err(Error::InvalidParameter("reg must be >= 0"));
        }
        if !(self.noise >= 0.0) || !self.noise.is_finite() {
            return Err(Error::InvalidParameter("noise must be >= 0"));
        }
        if self.multiplicity == 0 {
            return Err(Error::InvalidParameter("multiplicity must be >= 1"));
        }
        if !(self.norm_tolerance > 0.0) {
            return Err(Error::InvalidParameter("norm_tolerance must be > 0"));
        }
        if !(self.norm_guard >= 0.0) || !self.norm_guard.is_finite() {
            return Err(Error::InvalidParameter("norm_guard must be >= 0"));
        }
        self.steps().map(|_| ())
    }

    /// Number of steps; the window must be an integer multiple of `dt`.
    pub fn steps(&self) -> Result<usize> {
        let span = self.t_end - self.t_start;
        let n = round(span / self.dt);
        if !(n >= 1.0) || fabs(n * self.dt - span) > 1e-9 * span {
            return Err(Error::InvalidParameter("t_end - t_start must be a multiple of dt"));
        }
        Ok(n as usize)
    }

    #[inline]
    pub fn time(&self, step: usize) -> f64 {
        self.t_start + step as f64 * self.dt
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub records: Vec<ObservableRecord>,
    pub final_state: MultiD2State,
    /// `max_t |N(t) - N(t_start)|` over every step.
    pub max_norm_drift: f64,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    pub fn series(&self, spin: Spin) -> Vec<f64> {
        self.records.iter().map(|r| r.population(spin)).collect()
    }

    /// `max_t |P_k(t)|` over the records.
    pub fn max_population(&self, spin: Spin) -> f64 {
        self.series(spin).into_iter().fold(f64::NEG_INFINITY, f64::max)
    }
}

fn axpy(out: &mut [C64], base: &[C64], h: f64, k: &[C64]) {
    for ((o, b), k) in out.iter_mut().zip(base).zip(k) {
        *o = b + h * k;
    }
}

/// One classical RK4 step of size `dt` (which may be negative).
pub fn step(
    state: &MultiD2State,
    model: &ModelConfig,
    bath: &BathModes,
    dt: f64,
    solver: Solver,
    reg: f64,
) -> Result<MultiD2State> {
    let t = state.t;
    let base = state.params();
    let mut probe = state.clone();

    let k1 = derivative(solver, &probe, model, bath, t, reg)?;
    axpy(probe.params_mut(), base, 0.5 * dt, &k1);
    let k2 = derivative(solver, &probe, model, bath, t + 0.5 * dt, reg)?;
    axpy(probe.params_mut(), base, 0.5 * dt, &k2);
    let k3 = derivative(solver, &probe, model, bath, t + 0.5 * dt, reg)?;
    axpy(probe.params_mut(), base, dt, &k3);
    let k4 = derivative(solver, &probe, model, bath, t + dt, reg)?;

    let w = dt / 6.0;
    for (i, p) in probe.params_mut().iter_mut().enumerate() {
        *p = base[i] + w * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    probe.t = t + dt;
    if !probe.is_finite() {
        return Err(Error::NonFinite { t: probe.t });
    }
    Ok(probe)
}

fn norm_of(state: &MultiD2State) -> Result<f64> {
    let p = populations(state)?;
    Ok(p[0] + p[1] + p[2])
}

/// RK4 step that is retaken as two half steps, recursively up to
/// [`NORM_GUARD_DEPTH`] times, while it moves the norm by more than
/// `cfg.norm_guard`.
fn guarded_step(
    state: &MultiD2State,
    model: &ModelConfig,
    bath: &BathModes,
    cfg: &PropagationConfig,
    h: f64,
    depth: usize,
) -> Result<MultiD2State> {
    let next = step(state, model, bath, h, cfg.solver, cfg.reg)?;
    if depth == 0 || !(cfg.norm_guard > 0.0) || fabs(norm_of(&next)? - norm_of(state)?) <= cfg.norm_guard {
        return Ok(next);
    }
    let mid = guarded_step(state, model, bath, cfg, 0.5 * h, depth - 1)?;
    guarded_step(&mid, model, bath, cfg, 0.5 * h, depth - 1)
}

/// Builds the initial state from the config and propagates it.
pub fn propagate(cfg: &PropagationConfig, model: &ModelConfig, bath: &BathModes) -> Result<Trajectory> {
    cfg.validate()?;
    let mut init = initial_state(cfg.initial_spin, bath, cfg.multiplicity, cfg.noise, cfg.seed)?;
    init.t = cfg.t_start;
    propagate_from(init, cfg, model, bath)
}

/// Propagates a given state over the config's window. `initial`'s own time is
/// overwritten by `t_start`; noise, seed, multiplicity and initial spin in the
/// config are ignored.
pub fn propagate_from(
    initial: MultiD2State,
    cfg: &PropagationConfig,
    model: &ModelConfig,
    bath: &BathModes,
) -> Result<Trajectory> {
    propagate_observed(initial, cfg, model, bath, |_| {})
}

/// As [`propagate_from`], also handing every accepted state to `observer`.
pub fn propagate_observed(
    mut state: MultiD2State,
    cfg: &PropagationConfig,
    model: &ModelConfig,
    bath: &BathModes,
    mut observer: impl FnMut(&MultiD2State),
) -> Result<Trajectory> {
    cfg.validate()?;
    model.validate()?;
    bath.validate()?;
    let n_steps = cfg.steps()?;
    state.t = cfg.t_start;

    let mut records = Vec::with_capacity(n_steps / cfg.record_every + 2);
    let first = record(&state, cfg, model, bath)?;
    let n0 = first.norm;
    records.push(first);
    observer(&state);

    let mut max_drift = 0.0f64;
    for i in 1..=n_steps {
        let mut next = if i == 1 && cfg.startup_substeps > 1 {
            let h = cfg.dt / cfg.startup_substeps as f64;
            let mut s = state.clone();
            for _ in 0..cfg.startup_substeps {
                s = guarded_step(&s, model, bath, cfg, h, NORM_GUARD_DEPTH)?;
            }
            s
        } else {
            guarded_step(&state, model, bath, cfg, cfg.dt, NORM_GUARD_DEPTH)?
        };
        // Times are set from the step index, not accumulated.
        next.t = cfg.time(i);
        state = next;

        let p = populations(&state)?;
        let n = p[0] + p[1] + p[2];
        let drift = fabs(n - n0);
        if !(drift <= cfg.norm_tolerance) {
            return Err(Error::NormDrift {
                t: state.t,
                drift,
                tolerance: cfg.norm_tolerance,
            });
        }
        max_drift = max_drift.max(drift);
        observer(&state);

        if i % cfg.record_every == 0 || i == n_steps {
            records.push(record(&state, cfg, model, bath)?);
        }
    }

    Ok(Trajectory {
        records,
        final_state: state,
        max_norm_drift: max_drift,
    })
}

fn record(
    state: &MultiD2State,
    cfg: &PropagationConfig,
    model: &ModelConfig,
    bath: &BathModes,
) -> Result<ObservableRecord> {
    let populations = populations(state)?;
    let norm = populations[0] + populations[1] + populations[2];
    let fock = match cfg.n_max {
        Some(n_max) if state.n_modes() == 1 => Some(fock_populations(state, n_max)?),
        _ => None,
    };
    let energy = if cfg.record_energy {
        Some(hamiltonian_expectation(state, model, bath, state.t)?)
    } else {
        None
    };
    Ok(ObservableRecord {
        t: state.t,
        populations,
        norm,
        fock,
        energy,
    })
}
