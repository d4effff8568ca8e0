//! Experiment runner: observation generation, training, error evaluation
//! against the oracle, figure data, and the CFL study.

mod cfl;
pub mod checks;
mod config;
mod emit;

pub use cfl::{cfl_grid, cfl_study, CflReport, CflRow};
pub use config::{ExperimentConfig, NetworkConfig, Precision};
pub use emit::{emit_figure_data, Summary};

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::batch::{forward_batch, BatchPass};
use crate::network::Checkpoint;
use crate::network::{init_params, MlpParams, NetworkError};
use crate::oracles::{generate_observations, Oracle, OracleError, Rk4Config, SeriesTruncation};
use crate::problems::{Grid, ObservationSet, ProblemKind, ProblemSpec};
use crate::scalar::Scalar;
use crate::training::{train_observed, Mode, StopReason, TraceRecord, TrainError, TrainingTrace};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("training aborted: {error}")]
    Training { error: TrainError, trace: TrainingTrace },
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    /// Process exit status: 2 for configuration errors, 3 for numerical
    /// aborts, 1 for anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Network(_) => 2,
            HarnessError::Training { error, .. } => {
                if error.is_numeric() {
                    3
                } else {
                    2
                }
            }
            HarnessError::Oracle(OracleError::Integrator { .. }) => 3,
            HarnessError::Oracle(OracleError::Io(_)) | HarnessError::Io(_) => 1,
            HarnessError::Oracle(_) => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEstimate {
    pub name: String,
    pub estimate: f64,
    pub truth: f64,
    pub rel_error: f64,
}

/// Network against oracle on an evaluation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub problem: ProblemKind,
    pub shape: Vec<usize>,
    pub input_dim: usize,
    pub observed_dim: usize,
    /// Grid points, `len * input_dim`, row-major.
    pub inputs: Vec<f64>,
    /// Network outputs, `len * observed_dim`.
    pub network: Vec<f64>,
    pub exact: Vec<f64>,
    pub max_abs: f64,
    pub rms: f64,
    pub params: Vec<ParamEstimate>,
}

impl ErrorReport {
    pub fn len(&self) -> usize {
        self.inputs.len() / self.input_dim
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn abs_err(&self, i: usize, k: usize) -> f64 {
        let j = i * self.observed_dim + k;
        (self.network[j] - self.exact[j]).abs()
    }

    /// Largest relative parameter error.
    pub fn max_param_rel_error(&self) -> f64 {
        self.params.iter().map(|p| p.rel_error).fold(0.0, f64::max)
    }

    /// Bit-for-bit equality, distinguishing `-0.0` from `0.0`.
    pub fn bitwise_eq(&self, other: &ErrorReport) -> bool {
        let same =
            |a: &[f64], b: &[f64]| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits());
        self.problem == other.problem
            && self.shape == other.shape
            && same(&self.inputs, &other.inputs)
            && same(&self.network, &other.network)
            && same(&self.exact, &other.exact)
            && self.max_abs.to_bits() == other.max_abs.to_bits()
            && self.rms.to_bits() == other.rms.to_bits()
            && self.params.len() == other.params.len()
            && self.params.iter().zip(&other.params).all(|(a, b)| {
                a.name == b.name && same(&[a.estimate, a.truth, a.rel_error], &[b.estimate, b.truth, b.rel_error])
            })
    }
}

/// Network outputs at many points, in chunks through the batched pass.
pub fn evaluate_network<T: Scalar>(params: &MlpParams<T>, points: &[f64]) -> Vec<f64> {
    const CHUNK: usize = 4096;
    let d = params.input_dim;
    let mut pass = BatchPass::new();
    let mut buf = Vec::with_capacity(CHUNK * d);
    let mut out = Vec::with_capacity(points.len() / d * params.output_dim());
    for chunk in points.chunks(CHUNK * d) {
        buf.clear();
        buf.extend(chunk.iter().map(|&v| T::lit(v)));
        forward_batch(params, &buf, false, &mut pass);
        out.extend(pass.outputs().iter().map(|v| v.to_f64_lossy()));
    }
    out
}

/// Compares the observed outputs of `params` with the oracle on `grid`.
pub fn error_report<T: Scalar>(spec: &ProblemSpec, params: &MlpParams<T>, oracle: &Oracle, grid: &Grid) -> ErrorReport {
    let inputs = grid.flat_points();
    let od = params.output_dim();
    let k = spec.observed_dim;
    let raw = evaluate_network(params, &inputs);
    let mut network = Vec::with_capacity(grid.len() * k);
    let mut exact = Vec::with_capacity(grid.len() * k);
    for (i, x) in inputs.chunks_exact(spec.input_dim).enumerate() {
        network.extend_from_slice(&raw[i * od..i * od + k]);
        exact.extend(oracle.eval(x));
    }
    let mut max_abs: f64 = 0.0;
    let mut sq = 0.0;
    for (a, b) in network.iter().zip(&exact) {
        let e = (a - b).abs();
        max_abs = max_abs.max(e);
        sq += e * e;
    }
    let rms = if network.is_empty() { 0.0 } else { (sq / network.len() as f64).sqrt() };
    let params = spec
        .param_names
        .iter()
        .zip(params.model_params.to_f64())
        .zip(&spec.true_params)
        .map(|((name, estimate), &truth)| ParamEstimate {
            name: name.clone(),
            estimate,
            truth,
            rel_error: (estimate - truth).abs() / truth.abs(),
        })
        .collect();
    ErrorReport {
        problem: spec.kind,
        shape: grid.shape(),
        input_dim: spec.input_dim,
        observed_dim: k,
        inputs,
        network,
        exact,
        max_abs,
        rms,
        params,
    }
}

/// Everything one run produces.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub report: ErrorReport,
    pub trace: TrainingTrace,
    pub checkpoint: Checkpoint,
    pub observations: ObservationSet,
    pub stop: StopReason,
    pub epochs_run: usize,
    pub seconds: f64,
}

pub fn build_oracle(cfg: &ExperimentConfig) -> Result<Oracle, HarnessError> {
    let spec = cfg.spec();
    let trunc = SeriesTruncation::new(cfg.series_max_mode)?;
    Ok(Oracle::new(&spec, trunc, Rk4Config { step: cfg.rk4_step, t_end: spec.domain.t_end })?)
}

/// The grid the error report is computed on.
pub fn evaluation_grid(cfg: &ExperimentConfig) -> Grid {
    let base = Grid::from_axes(cfg.eval_grid.as_deref().unwrap_or(&cfg.grid));
    match cfg.eval_subgrid {
        Some(n) => base.subgrid(n),
        None => base,
    }
}

/// Generates observations, trains, evaluates, and (with an output directory)
/// writes all artifacts. On a training abort the trace and the last
/// parameters are still written.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult, HarnessError> {
    run_experiment_observed(cfg, &mut |_| {})
}

/// [`run_experiment`] with a callback for each trace record (progress display).
pub fn run_experiment_observed(
    cfg: &ExperimentConfig,
    observer: &mut dyn FnMut(&TraceRecord),
) -> Result<ExperimentResult, HarnessError> {
    cfg.validate()?;
    match cfg.precision {
        Precision::F32 => run_typed::<f32>(cfg, observer),
        Precision::F64 => run_typed::<f64>(cfg, observer),
    }
}

fn run_typed<T: Scalar>(
    cfg: &ExperimentConfig,
    observer: &mut dyn FnMut(&TraceRecord),
) -> Result<ExperimentResult, HarnessError> {
    let start = Instant::now();
    let spec = cfg.spec();
    let oracle = build_oracle(cfg)?;
    let grid = Grid::from_axes(&cfg.grid);
    let observations =
        generate_observations(&spec, &oracle, &grid, cfg.observations, cfg.observation_seed, cfg.observation_sampling)?;
    // A forward problem is posed with the coefficients known, so they are
    // frozen at their true values rather than at the inverse-mode guess.
    let start_values = match cfg.train.mode {
        Mode::Forward => &spec.true_params,
        Mode::Inverse => &cfg.param_init,
    };
    let names: Vec<(String, f64)> = spec.param_names.iter().cloned().zip(start_values.iter().copied()).collect();
    let init: MlpParams<T> =
        init_params(spec.input_dim, &cfg.network.layer_specs(spec.output_dim), &names, cfg.network.init_seed)?;
    let obs = (cfg.train.mode == Mode::Inverse).then_some(&observations);
    let outcome = match train_observed(&spec, init, &cfg.train, obs, observer) {
        Ok(o) => o,
        Err(failure) => {
            let failure = *failure;
            if let Some(dir) = &cfg.output_dir {
                emit::emit_partial(dir, &failure.trace, &failure.params, &observations)?;
            }
            return Err(HarnessError::Training { error: failure.error, trace: failure.trace });
        }
    };
    let report = error_report(&spec, &outcome.params, &oracle, &evaluation_grid(cfg));
    let result = ExperimentResult {
        config: cfg.clone(),
        report,
        trace: outcome.trace,
        checkpoint: Checkpoint::from_params(&outcome.params),
        observations,
        stop: outcome.stop,
        epochs_run: outcome.epochs_run,
        seconds: start.elapsed().as_secs_f64(),
    };
    if let Some(dir) = &cfg.output_dir {
        emit_figure_data(&result, dir)?;
    }
    Ok(result)
}
