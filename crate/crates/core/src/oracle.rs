//! Truncated-Fock reference dynamics and spectra for a single phonon mode.
//!
//! The wavefunction lives on `3 (n_max + 1)` product states `|k> (x) |n>`, at
//! flat index `k (n_max + 1) + n`, with `k = 0, 1, 2` for `|-1>, |0>, |+1>`.

use alloc::vec;
use alloc::vec::Vec;

use libm::{exp, fabs, sqrt};

use crate::ansatz::Spin;
use crate::bath::BathModes;
use crate::linalg::{symmetric_eigenvalues, RMatrix};
use crate::model::{coupling_matrix, Mat3, ModelConfig};
use crate::{Error, Result, C64};

/// Largest cutoff tried before giving up.
pub const MAX_N_MAX: usize = 40;
/// Populations must move less than this when `n_max` grows.
pub const CUTOFF_TOLERANCE: f64 = 1e-4;
/// Cutoff increment of the convergence loop.
pub const N_MAX_STEP: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TruncatedBasis {
    pub n_max: usize,
}

impl TruncatedBasis {
    pub fn new(n_max: usize) -> Self {
        Self { n_max }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.n_max + 1
    }

    #[inline]
    pub fn dim(&self) -> usize {
        3 * self.width()
    }

    #[inline]
    pub fn index(&self, spin: usize, n: usize) -> usize {
        spin * self.width() + n
    }

    /// Inverse of [`TruncatedBasis::index`].
    #[inline]
    pub fn split(&self, idx: usize) -> (usize, usize) {
        (idx / self.width(), idx % self.width())
    }
}

struct SingleMode {
    omega: f64,
    coupling: Mat3,
}

fn single(bath: &BathModes) -> Result<SingleMode> {
    if bath.len() != 1 {
        return Err(Error::InvalidParameter(
            "the truncated-Fock oracle needs exactly one mode",
        ));
    }
    let m = &bath.modes[0];
    Ok(SingleMode {
        omega: m.omega,
        coupling: coupling_matrix(m.eta_z, m.eta_x),
    })
}

/// Dense `H(t)` in the truncated product basis (real symmetric).
pub fn full_hamiltonian(model: &ModelConfig, bath: &BathModes, t: f64, basis: &TruncatedBasis) -> Result<RMatrix> {
    let mode = single(bath)?;
    let hs = model.system_matrix(t);
    let w = basis.width();
    let mut h = RMatrix::zeros(basis.dim(), basis.dim());
    for k in 0..3 {
        for l in 0..3 {
            for n in 0..w {
                let row = basis.index(k, n);
                h[(row, basis.index(l, n))] += hs[k][l];
                if n + 1 < w {
                    let v = mode.coupling[k][l] * sqrt((n + 1) as f64);
                    h[(row, basis.index(l, n + 1))] += v;
                    h[(basis.index(l, n + 1), row)] += v;
                }
            }
        }
        for n in 0..w {
            h[(basis.index(k, n), basis.index(k, n))] += mode.omega * n as f64;
        }
    }
    Ok(h)
}

/// `out = H(t) psi` without forming the matrix.
pub fn apply_hamiltonian(
    model: &ModelConfig,
    bath: &BathModes,
    t: f64,
    basis: &TruncatedBasis,
    psi: &[C64],
    out: &mut [C64],
) -> Result<()> {
    let mode = single(bath)?;
    let hs = model.system_matrix(t);
    apply_with(&hs, &mode, basis, psi, out);
    Ok(())
}

fn apply_with(hs: &Mat3, mode: &SingleMode, basis: &TruncatedBasis, psi: &[C64], out: &mut [C64]) {
    let w = basis.width();
    for k in 0..3 {
        for n in 0..w {
            let mut acc = psi[k * w + n] * (mode.omega * n as f64);
            for l in 0..3 {
                let col = &psi[l * w..(l + 1) * w];
                acc += col[n] * hs[k][l];
                let v = mode.coupling[k][l];
                if v != 0.0 {
                    if n > 0 {
                        acc += col[n - 1] * (v * sqrt(n as f64));
                    }
                    if n + 1 < w {
                        acc += col[n + 1] * (v * sqrt((n + 1) as f64));
                    }
                }
            }
            out[k * w + n] = acc;
        }
    }
}

/// `|spin> (x) |f0>` with the coherent state cut at `n_max` and renormalised.
pub fn initial_wavefunction(spin: Spin, f0: C64, basis: &TruncatedBasis) -> Vec<C64> {
    let mut psi = vec![C64::new(0.0, 0.0); basis.dim()];
    let mut coeff = C64::new(exp(-0.5 * f0.norm_sqr()), 0.0);
    let mut total = 0.0;
    for n in 0..basis.width() {
        if n > 0 {
            coeff = coeff * f0 / sqrt(n as f64);
        }
        psi[basis.index(spin.index(), n)] = coeff;
        total += coeff.norm_sqr();
    }
    let scale = 1.0 / sqrt(total);
    for z in &mut psi {
        *z *= scale;
    }
    psi
}

/// Populations of one reference trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactTrajectory {
    pub n_max: usize,
    pub times: Vec<f64>,
    /// `(P_-1, P_0, P_+1)` per record.
    pub populations: Vec<[f64; 3]>,
    /// `sum |psi|^2` per record.
    pub norms: Vec<f64>,
    /// `P_{k,n}` per record, spin-major like the basis.
    pub fock: Vec<Vec<f64>>,
}

impl ExactTrajectory {
    pub fn series(&self, spin: Spin) -> Vec<f64> {
        self.populations.iter().map(|p| p[spin.index()]).collect()
    }

    /// `max_t max_k |P_k - P'_k|` over records present in both.
    pub fn max_difference(&self, other: &ExactTrajectory) -> f64 {
        self.populations
            .iter()
            .zip(&other.populations)
            .flat_map(|(a, b)| (0..3).map(move |k| fabs(a[k] - b[k])))
            .fold(0.0, f64::max)
    }
}

/// Time window and step of a reference run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactWindow {
    pub t_start: f64,
    pub t_end: f64,
    /// Step of the variational run; the oracle integrates at a quarter of it.
    pub dt: f64,
    /// Record every this many variational steps.
    pub record_every: usize,
}

impl ExactWindow {
    fn steps(&self) -> Result<usize> {
        let span = self.t_end - self.t_start;
        if !(span > 0.0) || !(self.dt > 0.0) || self.record_every == 0 {
            return Err(Error::InvalidParameter(
                "need t_end > t_start, dt > 0, record_every >= 1",
            ));
        }
        let n = libm::round(span / self.dt);
        if fabs(n * self.dt - span) > 1e-9 * span {
            return Err(Error::InvalidParameter("t_end - t_start must be a multiple of dt"));
        }
        Ok(n as usize)
    }
}

/// RK4 at a fixed cutoff, quarter step of `window.dt`.
pub fn propagate_fixed(
    model: &ModelConfig,
    bath: &BathModes,
    spin: Spin,
    n_max: usize,
    window: &ExactWindow,
) -> Result<ExactTrajectory> {
    let mode = single(bath)?;
    let n_outer = window.steps()?;
    let basis = TruncatedBasis::new(n_max);
    let dim = basis.dim();
    let mut psi = initial_wavefunction(spin, bath.modes[0].f0, &basis);
    let h = window.dt / 4.0;

    let mut out = ExactTrajectory {
        n_max,
        times: Vec::new(),
        populations: Vec::new(),
        norms: Vec::new(),
        fock: Vec::new(),
    };
    let push = |out: &mut ExactTrajectory, t: f64, psi: &[C64]| {
        let fock: Vec<f64> = psi.iter().map(|z| z.norm_sqr()).collect();
        let w = basis.width();
        let p = [0, 1, 2].map(|k| fock[k * w..(k + 1) * w].iter().sum::<f64>());
        out.times.push(t);
        out.norms.push(p.iter().sum());
        out.populations.push(p);
        out.fock.push(fock);
    };
    push(&mut out, window.t_start, &psi);

    let mut k1 = vec![C64::new(0.0, 0.0); dim];
    let mut k2 = k1.clone();
    let mut k3 = k1.clone();
    let mut k4 = k1.clone();
    let mut probe = k1.clone();
    let minus_i = C64::new(0.0, -1.0);

    for i in 0..n_outer {
        for q in 0..4 {
            let t = window.t_start + i as f64 * window.dt + q as f64 * h;
            let hs0 = model.system_matrix(t);
            let hs1 = model.system_matrix(t + 0.5 * h);
            let hs2 = model.system_matrix(t + h);

            apply_with(&hs0, &mode, &basis, &psi, &mut k1);
            for j in 0..dim {
                k1[j] *= minus_i;
                probe[j] = psi[j] + 0.5 * h * k1[j];
            }
            apply_with(&hs1, &mode, &basis, &probe, &mut k2);
            for j in 0..dim {
                k2[j] *= minus_i;
                probe[j] = psi[j] + 0.5 * h * k2[j];
            }
            apply_with(&hs1, &mode, &basis, &probe, &mut k3);
            for j in 0..dim {
                k3[j] *= minus_i;
                probe[j] = psi[j] + h * k3[j];
            }
            apply_with(&hs2, &mode, &basis, &probe, &mut k4);
            for j in 0..dim {
                psi[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + minus_i * k4[j]);
            }
        }
        let step = i + 1;
        if step % window.record_every == 0 || step == n_outer {
            push(&mut out, window.t_start + step as f64 * window.dt, &psi);
        }
    }
    if psi.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite { t: window.t_end });
    }
    Ok(out)
}

/// Raises `n_max` from `n_start` in steps of [`N_MAX_STEP`] until the
/// populations move by less than [`CUTOFF_TOLERANCE`]; returns the finer run.
pub fn exact_propagate(
    model: &ModelConfig,
    bath: &BathModes,
    spin: Spin,
    n_start: usize,
    window: &ExactWindow,
) -> Result<ExactTrajectory> {
    let mut prev = propagate_fixed(model, bath, spin, n_start, window)?;
    let mut n = n_start;
    loop {
        n += N_MAX_STEP;
        if n > MAX_N_MAX {
            let change = propagate_fixed(model, bath, spin, MAX_N_MAX, window)?.max_difference(&prev);
            return Err(Error::FockCutoff {
                n_max: MAX_N_MAX,
                change,
            });
        }
        let next = propagate_fixed(model, bath, spin, n, window)?;
        let change = next.max_difference(&prev);
        if change < CUTOFF_TOLERANCE {
            return Ok(next);
        }
        prev = next;
    }
}

/// Sorted eigenvalues of `H(t)` at every requested time.
pub fn energy_levels(
    model: &ModelConfig,
    bath: &BathModes,
    basis: &TruncatedBasis,
    times: &[f64],
) -> Result<Vec<Vec<f64>>> {
    times
        .iter()
        .map(|&t| full_hamiltonian(model, bath, t, basis).map(symmetric_eigenvalues))
        .collect()
}
