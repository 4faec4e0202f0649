//! System Hamiltonian of the anisotropic three-level Landau-Zener model.
//!
//! The spin basis is fixed to `(|-1>, |0>, |+1>)`, carried by the amplitude
//! roles `(A, B, C)` of the variational state. `S_z = diag(-1, 0, +1)` in this
//! basis.

use libm::cos;

use crate::{Error, Result};

pub const FRAC_1_SQRT_2: f64 = core::f64::consts::FRAC_1_SQRT_2;

/// 3x3 real matrix in the `(A, B, C)` basis.
pub type Mat3 = [[f64; 3]; 3];

/// Time dependence of the z and x driving fields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DriveSpec {
    /// `Omega_z = v t`, `Omega_x = delta`.
    Linear { v: f64, delta: f64 },
    /// `Omega_z = a_z cos(omega_z t)`, `Omega_x = a_x cos(omega_x t)`. A zero
    /// frequency gives a static field.
    Periodic {
        a_z: f64,
        omega_z: f64,
        a_x: f64,
        omega_x: f64,
    },
}

impl DriveSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            DriveSpec::Linear { v, delta } => {
                if !(v > 0.0) || !v.is_finite() {
                    return Err(Error::InvalidParameter("linear drive needs v > 0"));
                }
                if !delta.is_finite() {
                    return Err(Error::InvalidParameter("linear drive Delta must be finite"));
                }
            }
            DriveSpec::Periodic {
                a_z,
                omega_z,
                a_x,
                omega_x,
            } => {
                if !(omega_z >= 0.0 && omega_x >= 0.0) {
                    return Err(Error::InvalidParameter("periodic drive needs omega_z, omega_x >= 0"));
                }
                if !(a_z.is_finite() && a_x.is_finite() && omega_z.is_finite() && omega_x.is_finite()) {
                    return Err(Error::InvalidParameter("periodic drive parameters must be finite"));
                }
            }
        }
        Ok(())
    }

    /// `(Omega_z(t), Omega_x(t))`.
    #[inline]
    pub fn values(&self, t: f64) -> (f64, f64) {
        match *self {
            DriveSpec::Linear { v, delta } => (v * t, delta),
            DriveSpec::Periodic {
                a_z,
                omega_z,
                a_x,
                omega_x,
            } => (a_z * cos(omega_z * t), a_x * cos(omega_x * t)),
        }
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self, DriveSpec::Periodic { .. })
    }
}

/// Anisotropy plus drive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    /// Zero-field splitting `D`.
    pub anisotropy: f64,
    pub drive: DriveSpec,
}

impl ModelConfig {
    pub fn new(anisotropy: f64, drive: DriveSpec) -> Result<Self> {
        let cfg = Self { anisotropy, drive };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.anisotropy.is_finite() {
            return Err(Error::InvalidParameter("anisotropy must be finite"));
        }
        self.drive.validate()
    }

    /// `H_S(t) = D (S_z^2 - 2/3) + Omega_z(t) S_z + Omega_x(t) S_x`.
    pub fn system_matrix(&self, t: f64) -> Mat3 {
        let (oz, ox) = self.drive.values(t);
        system_matrix_from(self.anisotropy, oz, ox)
    }
}

/// Spin-1 `(S_z, S_x)` in the `(|-1>, |0>, |+1>)` basis.
pub fn spin1_matrices() -> (Mat3, Mat3) {
    let s = FRAC_1_SQRT_2;
    let sz = [[-1.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
    let sx = [[0.0, s, 0.0], [s, 0.0, s], [0.0, s, 0.0]];
    (sz, sx)
}

/// Diagonal of `S_z` in the `(A, B, C)` basis.
pub const SZ_DIAG: [f64; 3] = [-1.0, 0.0, 1.0];

/// `(Omega_z(t), Omega_x(t))` for a drive.
pub fn drive_values(drive: &DriveSpec, t: f64) -> (f64, f64) {
    drive.values(t)
}

pub fn system_matrix_from(d: f64, oz: f64, ox: f64) -> Mat3 {
    let x = ox * FRAC_1_SQRT_2;
    [[d / 3.0 - oz, x, 0.0], [x, -2.0 * d / 3.0, x], [0.0, x, d / 3.0 + oz]]
}

/// `eta_z S_z + eta_x S_x`, the spin operator multiplying `(b + b^dagger)`.
pub fn coupling_matrix(eta_z: f64, eta_x: f64) -> Mat3 {
    let x = eta_x * FRAC_1_SQRT_2;
    [[-eta_z, x, 0.0], [x, 0.0, x], [0.0, x, eta_z]]
}
