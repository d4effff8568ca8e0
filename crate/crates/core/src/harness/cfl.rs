use std::fs;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{build_oracle, error_report, run_experiment, ExperimentConfig, HarnessError};
use crate::problems::{Grid, ProblemKind};
use crate::training::Collocation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CflRow {
    pub courant: f64,
    pub dt: f64,
    pub dx: f64,
    pub time_slices: usize,
    /// On the collocation grid of this Courant number.
    pub max_abs_error: f64,
    pub rms_error: f64,
    /// On the base evaluation grid, for comparison across rows.
    pub base_grid_max_abs_error: f64,
    pub a_estimate: f64,
    pub a_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CflReport {
    pub rows: Vec<CflRow>,
}

/// Space-time grid with the spatial spacing of `base` and the time step
/// `dt = C dx / a`. The time axis stops at the last whole step inside `[0, T]`.
pub fn cfl_grid(base: &[(f64, f64, usize)], courant: f64, a: f64, t_end: f64) -> Vec<(f64, f64, usize)> {
    let (lo, hi, n) = base[1];
    let dx = (hi - lo) / (n - 1) as f64;
    let dt = courant * dx / a;
    let steps = (t_end / dt + 1e-9).floor() as usize;
    vec![(0.0, steps as f64 * dt, steps + 1), base[1]]
}

/// Retrains the transport experiment once per Courant number, sampling
/// collocation points from and evaluating on the corresponding grid.
pub fn cfl_study(base: &ExperimentConfig, courant_numbers: &[f64]) -> Result<CflReport, HarnessError> {
    if base.problem != ProblemKind::Transport1d {
        return Err(HarnessError::Config(format!("the CFL study needs transport1d, got {}", base.problem)));
    }
    if courant_numbers.is_empty() {
        return Err(HarnessError::Config("no Courant numbers given".into()));
    }
    if let Some(c) = courant_numbers.iter().find(|c| !(**c > 0.0 && c.is_finite())) {
        return Err(HarnessError::Config(format!("Courant numbers must be positive, got {c}")));
    }
    base.validate()?;
    let spec = base.spec();
    let a = spec.true_params[0];
    let oracle = build_oracle(base)?;
    let base_grid = Grid::from_axes(&base.grid);

    let mut rows = Vec::with_capacity(courant_numbers.len());
    for &c in courant_numbers {
        let axes = cfl_grid(&base.grid, c, a, spec.domain.t_end);
        let mut cfg = base.clone();
        cfg.train.collocation = Collocation::Grid { axes: axes.clone() };
        cfg.eval_grid = Some(axes.clone());
        cfg.eval_subgrid = None;
        cfg.output_dir = base.output_dir.as_ref().map(|d| d.join(format!("courant_{c}")));
        let r = run_experiment(&cfg)?;
        let params = r.checkpoint.clone().into_params::<f64>()?;
        let on_base = error_report(&spec, &params, &oracle, &base_grid);
        let est = &r.report.params[0];
        rows.push(CflRow {
            courant: c,
            dt: if axes[0].2 > 1 { axes[0].1 / (axes[0].2 - 1) as f64 } else { 0.0 },
            dx: (axes[1].1 - axes[1].0) / (axes[1].2 - 1) as f64,
            time_slices: axes[0].2,
            max_abs_error: r.report.max_abs,
            rms_error: r.report.rms,
            base_grid_max_abs_error: on_base.max_abs,
            a_estimate: est.estimate,
            a_rel_error: est.rel_error,
        });
    }
    let report = CflReport { rows };
    if let Some(dir) = &base.output_dir {
        fs::create_dir_all(dir)?;
        let mut w = std::io::BufWriter::new(fs::File::create(dir.join("cfl.csv"))?);
        writeln!(
            w,
            "courant,dt,dx,time_slices,max_abs_error,rms_error,base_grid_max_abs_error,a_estimate,a_rel_error"
        )?;
        for r in &report.rows {
            writeln!(
                w,
                "{},{:.16e},{:.16e},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                r.courant,
                r.dt,
                r.dx,
                r.time_slices,
                r.max_abs_error,
                r.rms_error,
                r.base_grid_max_abs_error,
                r.a_estimate,
                r.a_rel_error
            )?;
        }
        w.flush()?;
    }
    Ok(report)
}
