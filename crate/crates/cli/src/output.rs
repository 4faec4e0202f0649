//! CSV and JSON writers. Every file is written to a temporary sibling and
//! renamed into place, so a failed run never leaves a partial file behind.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use lz3_core::analysis::{Peak, SweepFrame};
use lz3_core::bath::BathModes;
use lz3_core::{ObservableRecord, Spin};

use crate::CliError;

pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| CliError::Io(e.error))?;
    Ok(())
}

/// Shortest representation that reads back to the same `f64`; NaN for
/// missing values.
fn num(out: &mut String, x: f64) {
    if x.is_nan() {
        out.push_str("NaN");
    } else {
        write!(out, "{x}").unwrap();
    }
}

/// `t,P_m1,P_0,P_1,norm[,E][,P_{k}_{n}...]`; Fock columns run over spins
/// `m1, 0, 1` and `n = 0..=n_max` within each spin.
pub fn trajectory_header(energy: bool, n_max: Option<usize>) -> String {
    let mut h = String::from("t,P_m1,P_0,P_1,norm");
    if energy {
        h.push_str(",E");
    }
    if let Some(n_max) = n_max {
        for label in ["m1", "0", "1"] {
            for n in 0..=n_max {
                write!(h, ",P_{label}_{n}").unwrap();
            }
        }
    }
    h
}

pub fn trajectory_csv(records: &[ObservableRecord], energy: bool, n_max: Option<usize>) -> String {
    let mut out = trajectory_header(energy, n_max);
    out.push('\n');
    for r in records {
        num(&mut out, r.t);
        for p in r.populations {
            out.push(',');
            num(&mut out, p);
        }
        out.push(',');
        num(&mut out, r.norm);
        if energy {
            out.push(',');
            num(&mut out, r.energy.unwrap_or(f64::NAN));
        }
        if let Some(n_max) = n_max {
            for spin in Spin::ALL {
                for n in 0..=n_max {
                    out.push(',');
                    num(&mut out, r.fock.as_ref().map_or(f64::NAN, |f| f.get(spin, n)));
                }
            }
        }
        out.push('\n');
    }
    out
}

#[derive(serde::Serialize)]
struct RecordJson {
    t: f64,
    populations: [f64; 3],
    norm: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    energy: Option<f64>,
    /// `fock[k][n]` with `k` over spins `-1, 0, 1`.
    #[serde(skip_serializing_if = "Option::is_none")]
    fock: Option<Vec<Vec<f64>>>,
}

pub fn trajectory_json(records: &[ObservableRecord], max_norm_drift: f64) -> String {
    let records: Vec<RecordJson> = records
        .iter()
        .map(|r| RecordJson {
            t: r.t,
            populations: r.populations,
            norm: r.norm,
            energy: r.energy,
            fock: r.fock.as_ref().map(|f| {
                Spin::ALL
                    .iter()
                    .map(|&s| (0..=f.n_max).map(|n| f.get(s, n)).collect())
                    .collect()
            }),
        })
        .collect();
    let doc = serde_json::json!({ "max_norm_drift": max_norm_drift, "records": records });
    serde_json::to_string_pretty(&doc).expect("trajectory serialises")
}

/// Matrix CSV, one row per `D` value, one column per `A_z` value.
pub fn matrix_csv(anisotropy: &[f64], a_z: &[f64], frame: &SweepFrame) -> String {
    let mut out = String::from("D");
    for &a in a_z {
        out.push_str(",A_z=");
        num(&mut out, a);
    }
    out.push('\n');
    for (i, &d) in anisotropy.iter().enumerate() {
        num(&mut out, d);
        for j in 0..a_z.len() {
            out.push(',');
            num(&mut out, frame.values[i * a_z.len() + j].unwrap_or(f64::NAN));
        }
        out.push('\n');
    }
    out
}

pub fn peaks_json(peaks: &[Peak]) -> serde_json::Value {
    peaks
        .iter()
        .map(|p| serde_json::json!({ "i": p.i, "j": p.j, "D": p.x, "A_z": p.y, "height": p.height }))
        .collect()
}

pub fn levels_csv(times: &[f64], levels: &[Vec<f64>]) -> String {
    let dim = levels.first().map_or(0, Vec::len);
    let mut out = String::from("t");
    for k in 1..=dim {
        write!(out, ",E_{k}").unwrap();
    }
    out.push('\n');
    for (t, row) in times.iter().zip(levels) {
        num(&mut out, *t);
        for &e in row {
            out.push(',');
            num(&mut out, e);
        }
        out.push('\n');
    }
    out
}

pub fn modes_csv(bath: &BathModes) -> String {
    let mut out = String::from("k,omega_k,eta_z_k,eta_x_k\n");
    for (k, m) in bath.modes.iter().enumerate() {
        write!(out, "{}", k + 1).unwrap();
        for x in [m.omega, m.eta_z, m.eta_x] {
            out.push(',');
            num(&mut out, x);
        }
        out.push('\n');
    }
    out
}
