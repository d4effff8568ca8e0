use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, ExperimentResult, HarnessError, ParamEstimate};
use crate::network::Checkpoint;
use crate::network::MlpParams;
use crate::oracles::{fmt_full, write_observations};
use crate::problems::{ObservationSet, ProblemKind};
use crate::scalar::Scalar;
use crate::training::{StopReason, TrainingTrace};

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub problem: ProblemKind,
    pub max_abs_error: f64,
    pub rms_error: f64,
    pub params: Vec<ParamEstimate>,
    pub final_loss: Option<f64>,
    pub epochs_run: usize,
    pub stop: StopReason,
    pub seconds: f64,
    pub seeds: Seeds,
    /// Full configuration of the run; loadable as a configuration file.
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub observation: u64,
    pub init: u64,
    pub train: u64,
}

impl Summary {
    pub fn from_result(r: &ExperimentResult) -> Self {
        Summary {
            problem: r.config.problem,
            max_abs_error: r.report.max_abs,
            rms_error: r.report.rms,
            params: r.report.params.clone(),
            final_loss: r.trace.last().map(|l| l.loss.total),
            epochs_run: r.epochs_run,
            stop: r.stop,
            seconds: r.seconds,
            seeds: Seeds {
                observation: r.config.observation_seed,
                init: r.config.network.init_seed,
                train: r.config.train.seed,
            },
            config: r.config.clone(),
        }
    }
}

fn coord_names(kind: ProblemKind) -> &'static [&'static str] {
    match kind {
        ProblemKind::Transport1d => &["t", "x"],
        ProblemKind::Heat2d | ProblemKind::Wave2d => &["t", "x", "y"],
        ProblemKind::LotkaVolterra => &["t"],
    }
}

fn output_names(kind: ProblemKind) -> &'static [&'static str] {
    match kind {
        ProblemKind::LotkaVolterra => &["u", "v"],
        _ => &["u"],
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, HarnessError> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

/// Writes `solution.csv`, `abs_error.csv`, `trace.csv`, `params.csv`,
/// `observations.csv`, `checkpoint.json` and `summary.json` into `dir`.
pub fn emit_figure_data(r: &ExperimentResult, dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir)?;
    let rep = &r.report;
    let coords = coord_names(rep.problem);
    let outs = output_names(rep.problem);

    // solution.csv: coordinates, then network / oracle / |difference| per output.
    let mut w = create(dir, "solution.csv")?;
    let mut header: Vec<String> = coords.iter().map(|s| s.to_string()).collect();
    for o in outs {
        if outs.len() == 1 {
            header.extend([format!("{o}_nn"), format!("{o}_exact"), "abs_err".to_string()]);
        } else {
            header.extend([format!("{o}_nn"), format!("{o}_exact"), format!("{o}_abs_err")]);
        }
    }
    writeln!(w, "{}", header.join(","))?;
    let k = rep.observed_dim;
    for i in 0..rep.len() {
        let mut fields: Vec<String> = rep.point(i).iter().map(|&v| fmt_full(v)).collect();
        for j in 0..k {
            fields.push(fmt_full(rep.network[i * k + j]));
            fields.push(fmt_full(rep.exact[i * k + j]));
            fields.push(fmt_full(rep.abs_err(i, j)));
        }
        writeln!(w, "{}", fields.join(","))?;
    }
    w.flush()?;

    // abs_error.csv: the error grid alone.
    let mut w = create(dir, "abs_error.csv")?;
    let mut header: Vec<String> = coords.iter().map(|s| s.to_string()).collect();
    if k == 1 {
        header.push("abs_err".into());
    } else {
        header.extend(outs.iter().map(|o| format!("{o}_abs_err")));
    }
    writeln!(w, "{}", header.join(","))?;
    for i in 0..rep.len() {
        let mut fields: Vec<String> = rep.point(i).iter().map(|&v| fmt_full(v)).collect();
        fields.extend((0..k).map(|j| fmt_full(rep.abs_err(i, j))));
        writeln!(w, "{}", fields.join(","))?;
    }
    w.flush()?;

    r.trace.write_csv(create(dir, "trace.csv")?)?;
    write_params_csv(&r.trace, &rep.params, create(dir, "params.csv")?)?;
    write_observations(&dir.join("observations.csv"), &r.observations)?;
    fs::write(dir.join("checkpoint.json"), serde_json::to_string(&r.checkpoint).expect("checkpoint serialises"))?;
    let summary = serde_json::to_string_pretty(&Summary::from_result(r)).expect("summary serialises");
    fs::write(dir.join("summary.json"), summary)?;
    Ok(())
}

/// `epoch,<name>,<name>_true,...`: the parameter-convergence series.
fn write_params_csv<W: Write>(trace: &TrainingTrace, params: &[ParamEstimate], mut w: W) -> Result<(), HarnessError> {
    let mut header = vec!["epoch".to_string()];
    for p in params {
        header.push(p.name.clone());
        header.push(format!("{}_true", p.name));
    }
    writeln!(w, "{}", header.join(","))?;
    for rec in &trace.records {
        let mut fields = vec![rec.epoch.to_string()];
        for (v, p) in rec.params.iter().zip(params) {
            fields.push(fmt_full(*v));
            fields.push(fmt_full(p.truth));
        }
        writeln!(w, "{}", fields.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// What is still worth keeping after an aborted run.
pub(crate) fn emit_partial<T: Scalar>(
    dir: &Path,
    trace: &TrainingTrace,
    params: &MlpParams<T>,
    obs: &ObservationSet,
) -> Result<(), HarnessError> {
    fs::create_dir_all(dir)?;
    trace.write_csv(create(dir, "trace.csv")?)?;
    write_observations(&dir.join("observations.csv"), obs)?;
    let ckpt = Checkpoint::from_params(params);
    fs::write(dir.join("checkpoint.json"), serde_json::to_string(&ckpt).expect("checkpoint serialises"))?;
    Ok(())
}
