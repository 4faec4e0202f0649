//! Contour sweeps, peak extraction and Rabi-cycle fitting.

use alloc::vec;
use alloc::vec::Vec;

use core::f64::consts::PI;

use libm::{atan2, cos, exp, fabs, log, sin, sqrt};

use crate::ansatz::{populations, Spin};
use crate::bath::BathModes;
use crate::integrator::{propagate_observed, PropagationConfig};
use crate::linalg::{tikhonov_lstsq, RMatrix};
use crate::model::{DriveSpec, ModelConfig};
use crate::{Error, Result};

/// Evenly spaced closed interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Axis {
    pub fn validate(&self) -> Result<()> {
        if self.count < 2 {
            return Err(Error::InvalidParameter("axis needs at least two points"));
        }
        if !(self.min.is_finite() && self.max.is_finite()) || !(self.max > self.min) {
            return Err(Error::InvalidParameter("axis needs max > min"));
        }
        Ok(())
    }

    #[inline]
    pub fn step(&self) -> f64 {
        (self.max - self.min) / (self.count - 1) as f64
    }

    #[inline]
    pub fn value(&self, i: usize) -> f64 {
        if i + 1 == self.count {
            self.max
        } else {
            self.min + i as f64 * self.step()
        }
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.value(i)).collect()
    }
}

/// `(D, A_z)` grid with observation times.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub anisotropy: Axis,
    pub a_z: Axis,
    /// Observation times, one output matrix each.
    pub frames: Vec<f64>,
    pub base_seed: u64,
}

impl SweepGrid {
    pub fn validate(&self, cfg: &PropagationConfig) -> Result<()> {
        self.anisotropy.validate()?;
        self.a_z.validate()?;
        if self.frames.is_empty() {
            return Err(Error::InvalidParameter("sweep needs at least one observation time"));
        }
        for &t in &self.frames {
            if !(t >= cfg.t_start && t <= cfg.t_end) {
                return Err(Error::InvalidParameter(
                    "observation time outside the propagation window",
                ));
            }
            frame_step(cfg, t)?;
        }
        Ok(())
    }

    pub fn points(&self) -> usize {
        self.anisotropy.count * self.a_z.count
    }
}

fn frame_step(cfg: &PropagationConfig, t: f64) -> Result<usize> {
    let x = (t - cfg.t_start) / cfg.dt;
    let n = libm::round(x);
    if fabs(x - n) > 1e-6 {
        return Err(Error::InvalidParameter("observation time is not on the step grid"));
    }
    Ok(n as usize)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of grid point `(i, j)`.
pub fn point_seed(base: u64, i: usize, j: usize) -> u64 {
    splitmix64(base ^ splitmix64(((i as u64) << 32) | j as u64))
}

/// Model at grid point `(D, A_z)`; the template must be periodic.
pub fn point_model(template: &ModelConfig, d: f64, a_z: f64) -> Result<ModelConfig> {
    match template.drive {
        DriveSpec::Periodic {
            omega_z, a_x, omega_x, ..
        } => ModelConfig::new(
            d,
            DriveSpec::Periodic {
                a_z,
                omega_z,
                a_x,
                omega_x,
            },
        ),
        DriveSpec::Linear { .. } => Err(Error::InvalidParameter("sweeps need a periodic drive")),
    }
}

/// Propagates one `(D, A_z)` point from the template's initial spin and
/// returns `P_-1` at every frame time.
pub fn sweep_point(
    grid: &SweepGrid,
    i: usize,
    j: usize,
    template: &ModelConfig,
    bath: &BathModes,
    cfg: &PropagationConfig,
) -> Result<Vec<f64>> {
    let model = point_model(template, grid.anisotropy.value(i), grid.a_z.value(j))?;
    let t_last = grid.frames.iter().copied().fold(cfg.t_start, f64::max);
    let steps: Vec<usize> = grid.frames.iter().map(|&t| frame_step(cfg, t)).collect::<Result<_>>()?;
    let mut cfg = cfg.clone();
    cfg.seed = point_seed(grid.base_seed, i, j);
    let n_last = steps.iter().copied().max().unwrap_or(0);
    if n_last == 0 {
        return Err(Error::InvalidParameter("observation times must be after t_start"));
    }
    cfg.t_end = t_last;
    cfg.record_every = n_last;

    let init = crate::ansatz::initial_state(cfg.initial_spin, bath, cfg.multiplicity, cfg.noise, cfg.seed)?;
    let mut out = vec![f64::NAN; grid.frames.len()];
    let mut first_err = None;
    let mut step = 0usize;
    propagate_observed(init, &cfg, &model, bath, |s| {
        for (slot, &want) in out.iter_mut().zip(&steps) {
            if want == step {
                match populations(s) {
                    Ok(p) => *slot = p[Spin::Minus.index()],
                    Err(e) => first_err = first_err.take().or(Some(e)),
                }
            }
        }
        step += 1;
    })?;
    if let Some(e) = first_err {
        return Err(e);
    }
    Ok(out)
}

/// One matrix of `P_-1(t_obs)`, row `i` along `D`, column `j` along `A_z`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepFrame {
    pub t_obs: f64,
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub anisotropy: Vec<f64>,
    pub a_z: Vec<f64>,
    pub frames: Vec<SweepFrame>,
    /// Failed points `(i, j, error)`.
    pub failures: Vec<(usize, usize, Error)>,
}

impl SweepResult {
    /// Collects per-point outcomes given in row-major point order.
    pub fn collect(grid: &SweepGrid, outcomes: Vec<Result<Vec<f64>>>) -> Self {
        let nj = grid.a_z.count;
        let mut frames: Vec<SweepFrame> = grid
            .frames
            .iter()
            .map(|&t_obs| SweepFrame {
                t_obs,
                values: vec![None; grid.points()],
            })
            .collect();
        let mut failures = Vec::new();
        for (p, outcome) in outcomes.into_iter().enumerate() {
            match outcome {
                Ok(v) => {
                    for (frame, x) in frames.iter_mut().zip(v) {
                        frame.values[p] = Some(x);
                    }
                }
                Err(e) => failures.push((p / nj, p % nj, e)),
            }
        }
        SweepResult {
            anisotropy: grid.anisotropy.values(),
            a_z: grid.a_z.values(),
            frames,
            failures,
        }
    }

    pub fn missing(&self) -> usize {
        self.failures.len()
    }
}

/// Runs every grid point in order on the calling thread.
pub fn sweep(
    grid: &SweepGrid,
    template: &ModelConfig,
    bath: &BathModes,
    cfg: &PropagationConfig,
) -> Result<SweepResult> {
    grid.validate(cfg)?;
    let mut outcomes = Vec::with_capacity(grid.points());
    for i in 0..grid.anisotropy.count {
        for j in 0..grid.a_z.count {
            outcomes.push(sweep_point(grid, i, j, template, bath, cfg));
        }
    }
    Ok(SweepResult::collect(grid, outcomes))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub i: usize,
    pub j: usize,
    /// Row-axis coordinate (`D`).
    pub x: f64,
    /// Column-axis coordinate (`A_z`).
    pub y: f64,
    pub height: f64,
}

/// Peaks below this are ignored by default.
pub const DEFAULT_PEAK_FLOOR: f64 = 0.01;

/// Local maxima of a row-major `rows x cols` matrix over 8-neighbourhoods.
///
/// A cell qualifies if it is above `floor`, no lower than any neighbour and
/// strictly higher than at least one. Non-finite cells are skipped. Maxima
/// within one cell of a higher one are merged into it. Sorted by height,
/// highest first.
pub fn find_peaks(values: &[f64], xs: &[f64], ys: &[f64], floor: f64) -> Vec<Peak> {
    let (rows, cols) = (xs.len(), ys.len());
    debug_assert_eq!(values.len(), rows * cols);
    let at = |i: usize, j: usize| values[i * cols + j];
    let mut found = Vec::new();
    for i in 0..rows {
        for j in 0..cols {
            let v = at(i, j);
            if !v.is_finite() || !(v > floor) {
                continue;
            }
            let mut is_max = true;
            let mut strictly = false;
            for di in -1i64..=1 {
                for dj in -1i64..=1 {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let (ni, nj) = (i as i64 + di, j as i64 + dj);
                    if ni < 0 || nj < 0 || ni >= rows as i64 || nj >= cols as i64 {
                        continue;
                    }
                    let w = at(ni as usize, nj as usize);
                    if !w.is_finite() {
                        continue;
                    }
                    if w > v {
                        is_max = false;
                    } else if w < v {
                        strictly = true;
                    }
                }
            }
            if is_max && strictly {
                found.push(Peak {
                    i,
                    j,
                    x: xs[i],
                    y: ys[j],
                    height: v,
                });
            }
        }
    }
    found.sort_by(|a, b| b.height.total_cmp(&a.height).then(a.i.cmp(&b.i)).then(a.j.cmp(&b.j)));
    let mut kept: Vec<Peak> = Vec::new();
    for p in found {
        let near = kept.iter().any(|q| p.i.abs_diff(q.i) <= 1 && p.j.abs_diff(q.j) <= 1);
        if !near {
            kept.push(p);
        }
    }
    kept
}

/// `max - min` of a series.
pub fn oscillation_amplitude(values: &[f64]) -> f64 {
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    hi - lo
}

/// `P(t) = c + (a / 2) (1 - cos(2 pi t / T + phi))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RabiFit {
    pub period: f64,
    pub amplitude: f64,
    pub phase: f64,
    pub offset: f64,
    /// RMS residual against the smoothed series that was fitted.
    pub rms: f64,
    /// RMS residual against the raw series.
    pub rms_raw: f64,
    /// Period read off the spectrum before refinement.
    pub period_guess: f64,
}

impl RabiFit {
    pub fn eval(&self, t: f64) -> f64 {
        self.offset + 0.5 * self.amplitude * (1.0 - cos(2.0 * PI * t / self.period + self.phase))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Moving-average width in samples; 1 disables smoothing.
    pub smoothing: usize,
    /// Largest accepted period as a multiple of the series span.
    pub max_period_spans: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            smoothing: 1,
            max_period_spans: 1.0,
        }
    }
}

/// Centred moving average; the window shrinks symmetrically at the ends.
pub fn moving_average(values: &[f64], width: usize) -> Vec<f64> {
    let half = width.max(1) / 2;
    let n = values.len();
    (0..n)
        .map(|i| {
            let h = half.min(i).min(n - 1 - i);
            let s = &values[i - h..=i + h];
            s.iter().sum::<f64>() / s.len() as f64
        })
        .collect()
}

const ZERO_PAD: usize = 8;
const SPECTRUM_POINTS: usize = 4096;

/// Period of the strongest nonzero frequency of the zero-padded spectrum.
pub fn dominant_period(times: &[f64], values: &[f64]) -> f64 {
    let stride = values.len().div_ceil(SPECTRUM_POINTS).max(1);
    let ts: Vec<f64> = times.iter().step_by(stride).copied().collect();
    let vs: Vec<f64> = values.iter().step_by(stride).copied().collect();
    let n = vs.len();
    let mean = vs.iter().sum::<f64>() / n as f64;
    let dt = ts[1] - ts[0];
    let padded = n * ZERO_PAD;
    let mut best = (0.0, f64::INFINITY);
    for k in 1..=padded / 2 {
        let w = 2.0 * PI * k as f64 / (padded as f64 * dt);
        let (c, s) = (cos(w * dt), sin(w * dt));
        let (mut pr, mut pi) = (1.0, 0.0);
        let (mut re, mut im) = (0.0, 0.0);
        for &v in &vs {
            let x = v - mean;
            re += x * pr;
            im -= x * pi;
            let r = pr * c - pi * s;
            pi = pr * s + pi * c;
            pr = r;
        }
        let power = re * re + im * im;
        if power > best.0 {
            best = (power, 2.0 * PI / w);
        }
    }
    best.1
}

/// Fits `c, a, phi` linearly at fixed angular frequency `w` (times shifted
/// to start at zero).
fn linear_start(tau: &[f64], y: &[f64], w: f64) -> Result<[f64; 4]> {
    let a = RMatrix::from_fn(tau.len(), 3, |i, j| match j {
        0 => 1.0,
        1 => cos(w * tau[i]),
        _ => sin(w * tau[i]),
    });
    let (x, _) = tikhonov_lstsq(&a, y, 0.0)?;
    let half = sqrt(x[1] * x[1] + x[2] * x[2]);
    let phi = atan2(x[2], -x[1]);
    Ok([x[0] - half, 2.0 * half, w, phi])
}

#[inline]
fn sq(x: f64) -> f64 {
    x * x
}

fn model(p: &[f64; 4], tau: f64) -> f64 {
    p[0] + 0.5 * p[1] * (1.0 - cos(p[2] * tau + p[3]))
}

fn sse(p: &[f64; 4], tau: &[f64], y: &[f64]) -> f64 {
    tau.iter().zip(y).map(|(&t, &v)| sq(model(p, t) - v)).sum()
}

const LM_ITERATIONS: usize = 500;

fn levenberg_marquardt(mut p: [f64; 4], tau: &[f64], y: &[f64]) -> Result<[f64; 4]> {
    let n = tau.len();
    let mut cost = sse(&p, tau, y);
    let mut mu = 1e-3;
    for _ in 0..LM_ITERATIONS {
        let jac = RMatrix::from_fn(n, 4, |i, j| {
            let th = p[2] * tau[i] + p[3];
            match j {
                0 => 1.0,
                1 => 0.5 * (1.0 - cos(th)),
                2 => 0.5 * p[1] * tau[i] * sin(th),
                _ => 0.5 * p[1] * sin(th),
            }
        });
        let r: Vec<f64> = tau.iter().zip(y).map(|(&t, &v)| v - model(&p, t)).collect();
        let scale = jac.inf_norm().max(1.0);
        let mut accepted = false;
        while mu < 1e12 {
            let (delta, _) = tikhonov_lstsq(&jac, &r, sqrt(mu) * scale)?;
            let trial = [p[0] + delta[0], p[1] + delta[1], p[2] + delta[2], p[3] + delta[3]];
            let c = sse(&trial, tau, y);
            if c <= cost {
                let small = delta.iter().zip(&p).all(|(d, x)| fabs(*d) <= 1e-14 * (1.0 + fabs(*x)));
                let flat = cost - c <= 1e-16 * cost;
                p = trial;
                cost = c;
                mu = (mu * 0.3).max(1e-15);
                accepted = true;
                if small || flat {
                    return Ok(p);
                }
                break;
            }
            mu *= 10.0;
        }
        if !accepted {
            return Ok(p);
        }
    }
    Err(Error::Fit {
        reason: "Levenberg-Marquardt did not converge",
        period_guess: 2.0 * PI / p[2],
    })
}

fn wrap_phase(x: f64) -> f64 {
    let y = x - 2.0 * PI * libm::floor((x + PI) / (2.0 * PI));
    if y <= -PI {
        y + 2.0 * PI
    } else {
        y
    }
}

/// Sinusoidal Rabi fit of a uniformly sampled series.
pub fn fit_rabi(times: &[f64], values: &[f64], opts: &FitOptions) -> Result<RabiFit> {
    if times.len() != values.len() || times.len() < 8 {
        return Err(Error::Fit {
            reason: "need at least 8 samples",
            period_guess: f64::NAN,
        });
    }
    let dt = times[1] - times[0];
    if !(dt > 0.0) || times.windows(2).any(|w| fabs(w[1] - w[0] - dt) > 1e-6 * dt) {
        return Err(Error::Fit {
            reason: "samples must be uniformly spaced",
            period_guess: f64::NAN,
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Fit {
            reason: "non-finite sample",
            period_guess: f64::NAN,
        });
    }
    let smooth = moving_average(values, opts.smoothing);
    let t0 = times[0];
    let span = times[times.len() - 1] - t0;
    let tau: Vec<f64> = times.iter().map(|t| t - t0).collect();

    let guess = dominant_period(times, &smooth);
    let start = linear_start(&tau, &smooth, 2.0 * PI / guess)?;
    let p = levenberg_marquardt(start, &tau, &smooth)?;

    let (mut offset, mut amplitude, mut w, mut phi) = (p[0], p[1], p[2], p[3]);
    if w < 0.0 {
        w = -w;
        phi = -phi;
    }
    if amplitude < 0.0 {
        offset += amplitude;
        amplitude = -amplitude;
        phi += PI;
    }
    let period = 2.0 * PI / w;
    if !period.is_finite() || period < 2.0 * dt || period > opts.max_period_spans * span {
        return Err(Error::Fit {
            reason: "period outside the sampled window",
            period_guess: guess,
        });
    }
    let fit = RabiFit {
        period,
        amplitude,
        phase: wrap_phase(phi - w * t0),
        offset,
        rms: 0.0,
        rms_raw: 0.0,
        period_guess: guess,
    };
    let rms =
        |ys: &[f64]| sqrt(times.iter().zip(ys).map(|(&t, &v)| sq(fit.eval(t) - v)).sum::<f64>() / ys.len() as f64);
    Ok(RabiFit {
        rms: rms(&smooth),
        rms_raw: rms(values),
        ..fit
    })
}

/// `y = A exp(-k x)` by log-linear least squares; returns `(A, k, R^2)` of the
/// log fit. All `y` must be positive.
pub fn exponential_decay(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 || ys.iter().any(|&y| !(y > 0.0)) {
        return Err(Error::InvalidParameter("exponential fit needs >= 2 positive samples"));
    }
    let n = xs.len() as f64;
    let ly: Vec<f64> = ys.iter().map(|&y| log(y)).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| sq(x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ly.iter().map(|y| sq(y - my)).sum();
    if !(sxx > 0.0) {
        return Err(Error::InvalidParameter("exponential fit needs distinct x"));
    }
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Ok((exp(my - slope * mx), -slope, r2))
}
