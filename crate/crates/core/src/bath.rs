//! Phonon environment: explicit modes or a discretised continuum.

use alloc::vec::Vec;

use libm::{exp, fabs, pow, sqrt};

use crate::{Error, Result, C64};

/// Parameters of `J(w) = 2 alpha w_c^(1-s) w^s exp(-w / w_c)` and of its
/// discretisation onto `n_modes` modes below `omega_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralParams {
    pub alpha: f64,
    pub s: f64,
    pub omega_c: f64,
    pub omega_max: f64,
    pub n_modes: usize,
}

impl SpectralParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidParameter("alpha must be >= 0"));
        }
        if !(self.s > 0.0) || !self.s.is_finite() {
            return Err(Error::InvalidParameter("spectral exponent s must be > 0"));
        }
        if !(self.omega_c > 0.0) || !self.omega_c.is_finite() {
            return Err(Error::InvalidParameter("cutoff omega_c must be > 0"));
        }
        if !(self.omega_max > 0.0) || !self.omega_max.is_finite() {
            return Err(Error::InvalidParameter("omega_m must be > 0"));
        }
        if self.n_modes == 0 {
            return Err(Error::InvalidParameter("N_b must be >= 1"));
        }
        Ok(())
    }
}

/// One bosonic mode with its diagonal (`eta_z`) and off-diagonal (`eta_x`)
/// couplings and the initial coherent displacement `f0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode {
    pub omega: f64,
    pub eta_z: f64,
    pub eta_x: f64,
    pub f0: C64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BathModes {
    pub modes: Vec<Mode>,
    /// Normalisation of the mode density, present for discretised baths.
    pub normalization: Option<f64>,
    pub spectral: Option<SpectralParams>,
}

impl BathModes {
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn from_modes(modes: Vec<Mode>) -> Result<Self> {
        let bath = Self {
            modes,
            normalization: None,
            spectral: None,
        };
        bath.validate()?;
        Ok(bath)
    }

    pub fn validate(&self) -> Result<()> {
        if self.modes.is_empty() {
            return Err(Error::InvalidParameter("bath needs at least one mode"));
        }
        let mut prev = 0.0;
        for m in &self.modes {
            if !(m.omega > prev) || !m.omega.is_finite() {
                return Err(Error::InvalidParameter(
                    "mode frequencies must be positive and increasing",
                ));
            }
            if !(m.eta_z.is_finite() && m.eta_x.is_finite() && m.f0.re.is_finite() && m.f0.im.is_finite()) {
                return Err(Error::InvalidParameter("mode couplings must be finite"));
            }
            prev = m.omega;
        }
        Ok(())
    }

    /// Returns a copy with every coupling multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for m in &mut out.modes {
            m.eta_z *= factor;
            m.eta_x *= factor;
        }
        out
    }

    /// Reorganisation energy `sum_k eta_z^2 / omega_k`.
    pub fn reorganization_energy(&self) -> f64 {
        self.modes.iter().map(|m| m.eta_z * m.eta_z / m.omega).sum()
    }
}

/// `J(omega)`.
pub fn spectral_density(omega: f64, p: &SpectralParams) -> Result<f64> {
    if !(omega >= 0.0) {
        return Err(Error::InvalidParameter("spectral density needs omega >= 0"));
    }
    Ok(density_unchecked(omega, p))
}

fn density_unchecked(omega: f64, p: &SpectralParams) -> f64 {
    2.0 * p.alpha * pow(p.omega_c, 1.0 - p.s) * pow(omega, p.s) * exp(-omega / p.omega_c)
}

/// `int_0^x J(w) / w dw`.
///
/// Closed form for `s = 3`; otherwise the substitution `v = w^s` removes the
/// endpoint singularity and adaptive Simpson does the rest.
pub fn cumulative_density(x: f64, p: &SpectralParams) -> f64 {
    if p.s == 3.0 {
        let u = x / p.omega_c;
        2.0 * p.alpha * p.omega_c * (2.0 - exp(-u) * (u * u + 2.0 * u + 2.0))
    } else {
        cumulative_by_quadrature(x, p)
    }
}

/// General-`s` route of [`cumulative_density`], also used to cross-check the
/// closed form.
pub fn cumulative_by_quadrature(x: f64, p: &SpectralParams) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let inv_s = 1.0 / p.s;
    let wc = p.omega_c;
    let f = move |v: f64| exp(-pow(v, inv_s) / wc);
    let upper = pow(x, p.s);
    let integral = adaptive_simpson(&f, 0.0, upper, 1e-13 * upper.max(1e-300), 48);
    2.0 * p.alpha * pow(p.omega_c, 1.0 - p.s) * integral * inv_s
}

fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let (fa, fb) = (f(a), f(b));
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, depth)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || fabs(delta) <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
}

/// Absolute tolerance on the cumulative mode count when locating `omega_k`.
pub const ROOT_TOLERANCE: f64 = 1e-10;

/// Discretises the spectral density into modes with equal weight under the
/// density `J(w) / (N w)`.
///
/// Mode `k` sits where the cumulative density reaches `k`, the last one at
/// `omega_max`, and couples with `eta_z = sqrt(N omega_k)`. `eta_x` is zero.
pub fn discretize(p: &SpectralParams) -> Result<BathModes> {
    p.validate()?;
    let nb = p.n_modes;

    if p.alpha == 0.0 {
        let modes = (1..=nb)
            .map(|k| Mode {
                omega: p.omega_max * k as f64 / nb as f64,
                eta_z: 0.0,
                eta_x: 0.0,
                f0: C64::new(0.0, 0.0),
            })
            .collect();
        return Ok(BathModes {
            modes,
            normalization: Some(0.0),
            spectral: Some(*p),
        });
    }

    let norm = cumulative_density(p.omega_max, p) / nb as f64;
    let count = |w: f64| cumulative_density(w, p) / norm;

    let mut modes = Vec::with_capacity(nb);
    let mut lo = 0.0;
    for k in 1..=nb {
        let omega = if k == nb {
            p.omega_max
        } else {
            let target = k as f64;
            let mut hi = p.omega_max;
            let mut a = lo;
            let mut found = None;
            for _ in 0..400 {
                let mid = 0.5 * (a + hi);
                let r = count(mid) - target;
                if fabs(r) <= ROOT_TOLERANCE {
                    found = Some(mid);
                    break;
                }
                if mid <= a || mid >= hi {
                    break;
                }
                if r < 0.0 {
                    a = mid;
                } else {
                    hi = mid;
                }
            }
            match found {
                Some(w) => w,
                None => {
                    let mid = 0.5 * (a + hi);
                    return Err(Error::RootFind {
                        mode: k,
                        residual: fabs(count(mid) - target),
                    });
                }
            }
        };
        lo = omega;
        modes.push(Mode {
            omega,
            eta_z: sqrt(norm * omega),
            eta_x: 0.0,
            f0: C64::new(0.0, 0.0),
        });
    }

    Ok(BathModes {
        modes,
        normalization: Some(norm),
        spectral: Some(*p),
    })
}

/// A one-mode bath.
pub fn single_mode(omega_p: f64, eta_z: f64, eta_x: f64, f0: C64) -> Result<BathModes> {
    if !(omega_p > 0.0) {
        return Err(Error::InvalidParameter("phonon frequency must be > 0"));
    }
    BathModes::from_modes(alloc::vec![Mode {
        omega: omega_p,
        eta_z,
        eta_x,
        f0
    }])
}
