//! Subcommand bodies. Each command has a compute step that returns data and a
//! write step that serialises it, so tests and the acceptance runner can use
//! the numbers without touching the file system.

use std::path::Path;

use lz3_core::analysis::{self, find_peaks, oscillation_amplitude, point_seed, Peak, RabiFit, SweepResult};
use lz3_core::bath::BathModes;
use lz3_core::integrator::propagate as run;
use lz3_core::oracle::{energy_levels, TruncatedBasis};
use lz3_core::{ModelConfig, Spin, Trajectory};
use serde_json::json;

use crate::config::RunConfig;
use crate::output::{self, write_atomic};
use crate::pool::par_map;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => write_atomic(path, text.as_bytes()),
        None => {
            use std::io::Write;
            std::io::stdout().lock().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

pub fn propagate(cfg: &RunConfig) -> Result<Trajectory, CliError> {
    let model = cfg.model()?;
    let bath = cfg.bath()?;
    let prop = cfg.propagation()?;
    Ok(run(&prop, &model, &bath)?)
}

pub fn trajectory_text(cfg: &RunConfig, traj: &Trajectory, format: Format) -> String {
    match format {
        Format::Csv => output::trajectory_csv(&traj.records, cfg.propagation.record_energy, cfg.propagation.n_max),
        Format::Json => output::trajectory_json(&traj.records, traj.max_norm_drift),
    }
}

pub fn cmd_propagate(cfg: &RunConfig, out: Option<&Path>, format: Format) -> Result<Trajectory, CliError> {
    let traj = propagate(cfg)?;
    emit(out, &trajectory_text(cfg, &traj, format))?;
    Ok(traj)
}

/// Grid sweep with every point on the pool.
pub fn sweep_grid(cfg: &RunConfig, jobs: usize) -> Result<SweepResult, CliError> {
    let grid = cfg.grid()?;
    let model = cfg.model()?;
    let bath = cfg.bath()?;
    let prop = cfg.propagation()?;
    grid.validate(&prop)?;
    let nj = grid.a_z.count;
    let points: Vec<(usize, usize)> = (0..grid.points()).map(|p| (p / nj, p % nj)).collect();
    let outcomes = par_map(&points, jobs, |_, &(i, j)| {
        analysis::sweep_point(&grid, i, j, &model, &bath, &prop)
    });
    let result = SweepResult::collect(&grid, outcomes);
    if result.missing() == grid.points() {
        let (_, _, e) = &result.failures[0];
        return Err(CliError::Numerical(format!("every sweep point failed, first: {e}")));
    }
    Ok(result)
}

/// Peaks of one frame; missing points count as zero.
pub fn frame_peaks(result: &SweepResult, frame: usize, floor: f64) -> Vec<Peak> {
    let values: Vec<f64> = result.frames[frame].values.iter().map(|v| v.unwrap_or(0.0)).collect();
    find_peaks(&values, &result.anisotropy, &result.a_z, floor)
}

pub fn write_grid(cfg: &RunConfig, result: &SweepResult, dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    let seed = cfg.propagation.seed;
    let seeds: Vec<Vec<u64>> = (0..result.anisotropy.len())
        .map(|i| (0..result.a_z.len()).map(|j| point_seed(seed, i, j)).collect())
        .collect();
    let failures: Vec<_> = result
        .failures
        .iter()
        .map(|(i, j, e)| json!({ "i": i, "j": j, "D": result.anisotropy[*i], "A_z": result.a_z[*j], "error": e.to_string() }))
        .collect();
    let floor = cfg.peak_floor();
    for (k, frame) in result.frames.iter().enumerate() {
        let stem = format!("frame_{k:03}");
        write_atomic(
            &dir.join(format!("{stem}.csv")),
            output::matrix_csv(&result.anisotropy, &result.a_z, frame).as_bytes(),
        )?;
        let sidecar = json!({
            "t_obs": frame.t_obs,
            "D": result.anisotropy,
            "A_z": result.a_z,
            "base_seed": seed,
            "seeds": seeds,
            "missing": result.missing(),
            "failures": failures,
            "peak_floor": floor,
            "peaks": output::peaks_json(&frame_peaks(result, k, floor)),
            "config": cfg,
        });
        write_atomic(
            &dir.join(format!("{stem}.json")),
            serde_json::to_string_pretty(&sidecar)
                .expect("sidecar serialises")
                .as_bytes(),
        )?;
    }
    Ok(())
}

pub struct StripPoint {
    pub a_z: f64,
    pub anisotropy: f64,
    pub seed: u64,
    pub outcome: Result<Trajectory, lz3_core::Error>,
}

impl StripPoint {
    /// `max_t P_-1 - min_t P_-1` over the recorded points.
    pub fn amplitude(&self) -> Option<f64> {
        self.outcome
            .as_ref()
            .ok()
            .map(|t| oscillation_amplitude(&t.series(Spin::Minus)))
    }
}

/// Full trajectories along `D = D_offset + A_z`.
pub fn strip(cfg: &RunConfig, jobs: usize) -> Result<Vec<StripPoint>, CliError> {
    let strip = cfg
        .sweep
        .as_ref()
        .and_then(|s| s.strip.as_ref())
        .ok_or_else(|| CliError::Validation("config has no sweep.strip section".into()))?;
    let template = cfg.model()?;
    let bath = cfg.bath()?;
    let prop = cfg.propagation()?;
    let models: Vec<(f64, f64, ModelConfig)> = strip
        .a_z
        .iter()
        .map(|&a| {
            let d = strip.d_offset + a;
            analysis::point_model(&template, d, a).map(|m| (a, d, m))
        })
        .collect::<Result<_, _>>()?;
    let points = par_map(&models, jobs, |j, (a_z, d, model)| {
        let mut p = prop.clone();
        p.seed = point_seed(prop.seed, 0, j);
        StripPoint {
            a_z: *a_z,
            anisotropy: *d,
            seed: p.seed,
            outcome: run(&p, model, &bath),
        }
    });
    if points.iter().all(|p| p.outcome.is_err()) {
        let e = points[0].outcome.as_ref().err().expect("failed");
        return Err(CliError::Numerical(format!("every strip point failed, first: {e}")));
    }
    Ok(points)
}

pub fn write_strip(cfg: &RunConfig, points: &[StripPoint], dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    let mut table = String::from("A_z,D,amplitude,max_norm_drift\n");
    let mut summary = Vec::new();
    for (j, p) in points.iter().enumerate() {
        let (amp, drift) = match &p.outcome {
            Ok(t) => {
                write_atomic(
                    &dir.join(format!("strip_{j:03}.csv")),
                    trajectory_text(cfg, t, Format::Csv).as_bytes(),
                )?;
                (p.amplitude().unwrap_or(f64::NAN), t.max_norm_drift)
            }
            Err(_) => (f64::NAN, f64::NAN),
        };
        table.push_str(&format!("{},{},{},{}\n", p.a_z, p.anisotropy, amp, drift));
        summary.push(json!({
            "A_z": p.a_z,
            "D": p.anisotropy,
            "seed": p.seed,
            "amplitude": p.amplitude(),
            "max_norm_drift": p.outcome.as_ref().ok().map(|t| t.max_norm_drift),
            "error": p.outcome.as_ref().err().map(|e| e.to_string()),
            "file": p.outcome.is_ok().then(|| format!("strip_{j:03}.csv")),
        }));
    }
    write_atomic(&dir.join("strip.csv"), table.as_bytes())?;
    let doc = json!({ "points": summary, "config": cfg });
    write_atomic(
        &dir.join("strip.json"),
        serde_json::to_string_pretty(&doc).expect("strip serialises").as_bytes(),
    )
}

pub struct FitRun {
    pub alpha: f64,
    pub bath: BathModes,
    pub trajectory: Result<Trajectory, lz3_core::Error>,
    pub fit: Result<RabiFit, lz3_core::Error>,
}

/// Samples of the fitted population inside the fit window.
pub fn fit_series(cfg: &RunConfig, traj: &Trajectory) -> (Vec<f64>, Vec<f64>) {
    let fit = cfg.fit.as_ref().expect("fit section");
    let spin = Spin::from_projection(fit.spin).expect("validated spin");
    let [from, to] = fit.window.unwrap_or([cfg.propagation.t_start, cfg.propagation.t_end]);
    let slack = 1e-9 * (1.0 + to.abs().max(from.abs()));
    traj.records
        .iter()
        .filter(|r| r.t >= from - slack && r.t <= to + slack)
        .map(|r| (r.t, r.population(spin)))
        .unzip()
}

/// One propagation and fit per bath coupling.
pub fn fit(cfg: &RunConfig, jobs: usize) -> Result<Vec<FitRun>, CliError> {
    let model = cfg.model()?;
    let prop = cfg.propagation()?;
    let opts = cfg.fit_options()?;
    let baths: Vec<(f64, BathModes)> = cfg
        .fit_alphas()?
        .into_iter()
        .map(|a| cfg.bath_with_alpha(a).map(|b| (a, b)))
        .collect::<Result<_, _>>()?;
    Ok(par_map(&baths, jobs, |_, (alpha, bath)| {
        let trajectory = run(&prop, &model, bath);
        let fit = match &trajectory {
            Ok(t) => {
                let (ts, ys) = fit_series(cfg, t);
                analysis::fit_rabi(&ts, &ys, &opts)
            }
            Err(e) => Err(e.clone()),
        };
        FitRun {
            alpha: *alpha,
            bath: bath.clone(),
            trajectory,
            fit,
        }
    }))
}

pub fn fit_json(runs: &[FitRun]) -> serde_json::Value {
    runs.iter()
        .map(|r| {
            let drift = r.trajectory.as_ref().ok().map(|t| t.max_norm_drift);
            match &r.fit {
                Ok(f) => json!({
                    "alpha": r.alpha,
                    "period": f.period,
                    "amplitude": f.amplitude,
                    "phase": f.phase,
                    "offset": f.offset,
                    "rms": f.rms,
                    "rms_raw": f.rms_raw,
                    "period_guess": f.period_guess,
                    "max_norm_drift": drift,
                }),
                Err(e) => json!({
                    "alpha": r.alpha,
                    "error": e.to_string(),
                    "period_guess": match e {
                        lz3_core::Error::Fit { period_guess, .. } => Some(*period_guess),
                        _ => None,
                    },
                    "max_norm_drift": drift,
                }),
            }
        })
        .collect()
}

/// `(A, k, R^2)` of `A exp(-k alpha)` through the fitted amplitudes and
/// periods, when every fit succeeded.
pub fn decay_summary(runs: &[FitRun]) -> Option<[(f64, f64, f64); 2]> {
    let fits: Vec<&RabiFit> = runs.iter().map(|r| r.fit.as_ref().ok()).collect::<Option<_>>()?;
    let xs: Vec<f64> = runs.iter().map(|r| r.alpha).collect();
    let amps: Vec<f64> = fits.iter().map(|f| f.amplitude).collect();
    let periods: Vec<f64> = fits.iter().map(|f| f.period).collect();
    Some([
        analysis::exponential_decay(&xs, &amps).ok()?,
        analysis::exponential_decay(&xs, &periods).ok()?,
    ])
}

pub fn cmd_fit(cfg: &RunConfig, out: Option<&Path>, jobs: usize) -> Result<Vec<FitRun>, CliError> {
    let runs = fit(cfg, jobs)?;
    let text = serde_json::to_string_pretty(&fit_json(&runs)).expect("fits serialise");
    emit(out, &text)?;
    if let Some([amp, period]) = decay_summary(&runs) {
        eprintln!("amplitude ~ {:.4} exp(-{:.4} alpha), R^2 = {:.4}", amp.0, amp.1, amp.2);
        eprintln!(
            "period ~ {:.4} exp(-{:.4} alpha), R^2 = {:.4}",
            period.0, period.1, period.2
        );
    }
    if let Some(r) = runs.iter().find(|r| r.fit.is_err()) {
        let e = r.fit.as_ref().err().expect("failed fit");
        return Err(CliError::Numerical(format!("alpha = {}: {e}", r.alpha)));
    }
    Ok(runs)
}

pub fn levels(cfg: &RunConfig) -> Result<(Vec<f64>, Vec<Vec<f64>>), CliError> {
    let section = cfg
        .levels
        .ok_or_else(|| CliError::Validation("config has no levels section".into()))?;
    let model = cfg.model()?;
    let bath = cfg.bath()?;
    if bath.len() != 1 {
        return Err(CliError::Validation("levels need a single-mode bath".into()));
    }
    let times: Vec<f64> = if section.count == 1 {
        vec![section.t_start]
    } else {
        let h = (section.t_end - section.t_start) / (section.count - 1) as f64;
        (0..section.count).map(|i| section.t_start + i as f64 * h).collect()
    };
    let levels = energy_levels(&model, &bath, &TruncatedBasis::new(section.n_max), &times)?;
    Ok((times, levels))
}

pub fn cmd_levels(cfg: &RunConfig, out: Option<&Path>) -> Result<(), CliError> {
    let (times, levels) = levels(cfg)?;
    emit(out, &output::levels_csv(&times, &levels))
}

pub fn cmd_discretize(cfg: &RunConfig, out: Option<&Path>) -> Result<BathModes, CliError> {
    if cfg.spectral()?.is_none() {
        return Err(CliError::Validation("discretize needs a spectral bath".into()));
    }
    let bath = cfg.bath()?;
    emit(out, &output::modes_csv(&bath))?;
    Ok(bath)
}
