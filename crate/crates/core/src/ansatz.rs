//! The multi-D2 variational state and its observables.
//!
//! A state of multiplicity `M` over `N_b` modes is
//! `sum_n (A_n |-1> + B_n |0> + C_n |+1>) (x) |f_n>`, with normalised
//! multimode coherent states `|f_n>`. Parameters are stored flat in the order
//! `A_1..A_M, B_1..B_M, C_1..C_M, f_11..f_1Nb, .., f_M1..f_MNb`, which is also
//! the unknown ordering of the equations of motion.

use alloc::vec;
use alloc::vec::Vec;

use libm::{exp, fabs, sqrt};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::bath::BathModes;
use crate::model::{ModelConfig, FRAC_1_SQRT_2};
use crate::{Error, Result, C64};

/// Spin projection, with its amplitude role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Spin {
    /// `|-1>`, amplitude `A`.
    Minus,
    /// `|0>`, amplitude `B`.
    Zero,
    /// `|+1>`, amplitude `C`.
    Plus,
}

impl Spin {
    pub const ALL: [Spin; 3] = [Spin::Minus, Spin::Zero, Spin::Plus];

    pub fn index(self) -> usize {
        match self {
            Spin::Minus => 0,
            Spin::Zero => 1,
            Spin::Plus => 2,
        }
    }

    pub fn from_projection(m: i32) -> Option<Spin> {
        match m {
            -1 => Some(Spin::Minus),
            0 => Some(Spin::Zero),
            1 => Some(Spin::Plus),
            _ => None,
        }
    }

    pub fn projection(self) -> i32 {
        self.index() as i32 - 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiD2State {
    multiplicity: usize,
    n_modes: usize,
    params: Vec<C64>,
    pub t: f64,
}

impl MultiD2State {
    pub fn zeros(multiplicity: usize, n_modes: usize, t: f64) -> Self {
        Self {
            multiplicity,
            n_modes,
            params: vec![C64::new(0.0, 0.0); multiplicity * (3 + n_modes)],
            t,
        }
    }

    pub fn from_params(multiplicity: usize, n_modes: usize, params: Vec<C64>, t: f64) -> Result<Self> {
        if multiplicity == 0 {
            return Err(Error::InvalidParameter("multiplicity must be >= 1"));
        }
        if params.len() != multiplicity * (3 + n_modes) {
            return Err(Error::InvalidParameter("parameter vector has the wrong length"));
        }
        Ok(Self {
            multiplicity,
            n_modes,
            params,
            t,
        })
    }

    #[inline]
    pub fn multiplicity(&self) -> usize {
        self.multiplicity
    }

    #[inline]
    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    /// Number of complex parameters, `3M + M N_b`.
    #[inline]
    pub fn dim(&self) -> usize {
        self.params.len()
    }

    #[inline]
    pub fn params(&self) -> &[C64] {
        &self.params
    }

    #[inline]
    pub fn params_mut(&mut self) -> &mut [C64] {
        &mut self.params
    }

    #[inline]
    pub fn amp(&self, spin: usize, n: usize) -> C64 {
        self.params[spin * self.multiplicity + n]
    }

    #[inline]
    pub fn amp_mut(&mut self, spin: usize, n: usize) -> &mut C64 {
        &mut self.params[spin * self.multiplicity + n]
    }

    /// `(A_n, B_n, C_n)`.
    #[inline]
    pub fn spinor(&self, n: usize) -> [C64; 3] {
        [self.amp(0, n), self.amp(1, n), self.amp(2, n)]
    }

    /// Displacements `f_n` of branch `n`.
    #[inline]
    pub fn disp(&self, n: usize) -> &[C64] {
        let start = 3 * self.multiplicity + n * self.n_modes;
        &self.params[start..start + self.n_modes]
    }

    #[inline]
    pub fn disp_mut(&mut self, n: usize) -> &mut [C64] {
        let start = 3 * self.multiplicity + n * self.n_modes;
        &mut self.params[start..start + self.n_modes]
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Scales every spin amplitude.
    pub fn scale_amplitudes(&mut self, factor: C64) {
        for z in &mut self.params[..3 * self.multiplicity] {
            *z *= factor;
        }
    }

    /// Debye-Waller matrix `S_mn`, row-major `M x M`.
    pub fn overlaps(&self) -> Vec<C64> {
        let m = self.multiplicity;
        let mut s = vec![C64::new(0.0, 0.0); m * m];
        for i in 0..m {
            s[i * m + i] = C64::new(1.0, 0.0);
            for j in i + 1..m {
                let v = debye_waller(self.disp(i), self.disp(j));
                s[i * m + j] = v;
                s[j * m + i] = v.conj();
            }
        }
        s
    }
}

/// `<f_m|f_n> = exp[sum_k (-|f_mk|^2 / 2 - |f_nk|^2 / 2 + f_mk^* f_nk)]`.
pub fn debye_waller(fm: &[C64], fn_: &[C64]) -> C64 {
    debug_assert_eq!(fm.len(), fn_.len());
    let mut e = C64::new(0.0, 0.0);
    for (a, b) in fm.iter().zip(fn_) {
        e += -0.5 * a.norm_sqr() - 0.5 * b.norm_sqr() + a.conj() * b;
    }
    e.exp()
}

const REAL_TOLERANCE: f64 = 1e-12;

fn spin_weights(state: &MultiD2State, overlaps: &[C64]) -> [C64; 3] {
    let m = state.multiplicity();
    let mut out = [C64::new(0.0, 0.0); 3];
    for i in 0..m {
        let ai = state.spinor(i);
        for j in 0..m {
            let aj = state.spinor(j);
            let s = overlaps[i * m + j];
            for k in 0..3 {
                out[k] += ai[k].conj() * aj[k] * s;
            }
        }
    }
    out
}

fn checked_real(z: C64, what: &'static str) -> Result<f64> {
    if fabs(z.im) > REAL_TOLERANCE * (1.0 + fabs(z.re)) {
        return Err(Error::NonReal { what, imag: z.im });
    }
    Ok(z.re)
}

/// `N(t) = <Psi|Psi>`.
pub fn norm(state: &MultiD2State) -> Result<f64> {
    let [a, b, c] = populations(state)?;
    let n = a + b + c;
    if !(n > 0.0) {
        return Err(Error::NonReal {
            what: "norm is not positive",
            imag: n,
        });
    }
    Ok(n)
}

/// `(P_-1, P_0, P_+1)`, unnormalised (their sum is the norm).
pub fn populations(state: &MultiD2State) -> Result<[f64; 3]> {
    let s = state.overlaps();
    populations_with(state, &s)
}

pub(crate) fn populations_with(state: &MultiD2State, overlaps: &[C64]) -> Result<[f64; 3]> {
    let w = spin_weights(state, overlaps);
    Ok([
        checked_real(w[0], "P_-1")?,
        checked_real(w[1], "P_0")?,
        checked_real(w[2], "P_+1")?,
    ])
}

/// Joint spin / phonon-number populations `P_{k,n}` of a single-mode state.
#[derive(Debug, Clone, PartialEq)]
pub struct FockTable {
    pub n_max: usize,
    /// Spin-major: `data[spin * (n_max + 1) + n]`.
    pub data: Vec<f64>,
}

impl FockTable {
    pub fn get(&self, spin: Spin, n: usize) -> f64 {
        self.data[spin.index() * (self.n_max + 1) + n]
    }

    pub fn total(&self) -> f64 {
        self.data.iter().sum()
    }
}

/// `P_{k,n} = |<k, n|Psi>|^2` from the Fock expansion of each coherent state.
pub fn fock_populations(state: &MultiD2State, n_max: usize) -> Result<FockTable> {
    if state.n_modes() != 1 {
        return Err(Error::InvalidParameter("Fock populations need a single-mode state"));
    }
    let m = state.multiplicity();
    let width = n_max + 1;
    let mut amps = vec![C64::new(0.0, 0.0); 3 * width];
    for b in 0..m {
        let f = state.disp(b)[0];
        let spinor = state.spinor(b);
        // e^{-|f|^2/2} f^n / sqrt(n!), built up iteratively.
        let mut coeff = C64::new(exp(-0.5 * f.norm_sqr()), 0.0);
        for n in 0..width {
            if n > 0 {
                coeff = coeff * f / sqrt(n as f64);
            }
            for k in 0..3 {
                amps[k * width + n] += spinor[k] * coeff;
            }
        }
    }
    Ok(FockTable {
        n_max,
        data: amps.iter().map(|z| z.norm_sqr()).collect(),
    })
}

/// Scalars that couple branch `m` to branch `n` through the phonon part of the
/// Hamiltonian.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PairTerms {
    /// `sum_k omega_k f_mk^* f_nk`
    pub phonon: C64,
    /// `sum_k eta_z^k (f_mk^* + f_nk)`
    pub gz: C64,
    /// `sum_k eta_x^k (f_mk^* + f_nk)`
    pub gx: C64,
}

pub(crate) fn pair_terms(bath: &BathModes, fm: &[C64], fn_: &[C64]) -> PairTerms {
    let mut p = PairTerms {
        phonon: C64::new(0.0, 0.0),
        gz: C64::new(0.0, 0.0),
        gx: C64::new(0.0, 0.0),
    };
    for ((mode, a), b) in bath.modes.iter().zip(fm).zip(fn_) {
        let ac = a.conj();
        p.phonon += mode.omega * ac * b;
        let sum = ac + b;
        p.gz += mode.eta_z * sum;
        p.gx += mode.eta_x * sum;
    }
    p
}

/// `h_mn` applied to a spinor: the spin-space operator
/// `H_S + phonon + gz S_z + gx S_x` between coherent branches.
#[inline]
pub(crate) fn apply_pair_hamiltonian(hs: &[[f64; 3]; 3], p: &PairTerms, v: &[C64; 3]) -> [C64; 3] {
    let x = hs[0][1] + p.gx * FRAC_1_SQRT_2;
    let d0 = hs[0][0] + p.phonon - p.gz;
    let d1 = hs[1][1] + p.phonon;
    let d2 = hs[2][2] + p.phonon + p.gz;
    [
        d0 * v[0] + x * v[1],
        x * v[0] + d1 * v[1] + x * v[2],
        x * v[1] + d2 * v[2],
    ]
}

#[inline]
pub(crate) fn dot3(a: &[C64; 3], b: &[C64; 3]) -> C64 {
    a[0].conj() * b[0] + a[1].conj() * b[1] + a[2].conj() * b[2]
}

/// `<Psi|H(t)|Psi> / <Psi|Psi>`.
pub fn hamiltonian_expectation(state: &MultiD2State, model: &ModelConfig, bath: &BathModes, t: f64) -> Result<f64> {
    check_modes(state, bath)?;
    let m = state.multiplicity();
    let hs = model.system_matrix(t);
    let s = state.overlaps();
    let mut e = C64::new(0.0, 0.0);
    let mut scale = 0.0;
    for i in 0..m {
        let ai = state.spinor(i);
        for j in 0..m {
            let aj = state.spinor(j);
            let p = pair_terms(bath, state.disp(i), state.disp(j));
            let term = dot3(&ai, &apply_pair_hamiltonian(&hs, &p, &aj)) * s[i * m + j];
            scale += term.norm();
            e += term;
        }
    }
    let n = norm(state)?;
    if fabs(e.im) > 1e-10 * (1.0 + scale) {
        return Err(Error::NonReal {
            what: "energy",
            imag: e.im,
        });
    }
    Ok(e.re / n)
}

pub(crate) fn check_modes(state: &MultiD2State, bath: &BathModes) -> Result<()> {
    if state.n_modes() != bath.len() {
        return Err(Error::InvalidParameter(
            "state and bath disagree on the number of modes",
        ));
    }
    Ok(())
}

/// Uniform noise amplitude added to every initial parameter by default.
pub const DEFAULT_NOISE: f64 = 1e-4;

/// Branch 1 on `spin` with displacements `f0` from the bath, all other
/// parameters zero; then seeded uniform noise in `[-noise, noise]` on the real
/// and imaginary part of every parameter, then rescaled to unit norm.
pub fn initial_state(spin: Spin, bath: &BathModes, multiplicity: usize, noise: f64, seed: u64) -> Result<MultiD2State> {
    if multiplicity == 0 {
        return Err(Error::InvalidParameter("multiplicity must be >= 1"));
    }
    if !(noise >= 0.0) || !noise.is_finite() {
        return Err(Error::InvalidParameter("noise must be >= 0"));
    }
    let nb = bath.len();
    let mut state = MultiD2State::zeros(multiplicity, nb, 0.0);
    *state.amp_mut(spin.index(), 0) = C64::new(1.0, 0.0);
    for (f, mode) in state.disp_mut(0).iter_mut().zip(&bath.modes) {
        *f = mode.f0;
    }

    if noise > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for z in state.params_mut() {
            let re = noise * (2.0 * unit_uniform(&mut rng) - 1.0);
            let im = noise * (2.0 * unit_uniform(&mut rng) - 1.0);
            *z += C64::new(re, im);
        }
    }

    let n = norm(&state)?;
    state.scale_amplitudes(C64::new(1.0 / sqrt(n), 0.0));
    Ok(state)
}

fn unit_uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Observables recorded along a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservableRecord {
    pub t: f64,
    /// `(P_-1, P_0, P_+1)`
    pub populations: [f64; 3],
    pub norm: f64,
    pub fock: Option<FockTable>,
    pub energy: Option<f64>,
}

impl ObservableRecord {
    pub fn population(&self, spin: Spin) -> f64 {
        self.populations[spin.index()]
    }

    /// `|P_-1 + P_0 + P_+1 - N|`.
    pub fn sum_rule_violation(&self) -> f64 {
        fabs(self.populations.iter().sum::<f64>() - self.norm)
    }
}
