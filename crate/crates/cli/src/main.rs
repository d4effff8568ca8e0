use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pinnforge::harness::checks::run_checks;
use pinnforge::harness::{cfl_study, run_experiment_observed, ExperimentConfig, HarnessError};
use pinnforge::problems::ProblemKind;
use pinnforge::training::{Mode, TraceRecord};

#[derive(Parser)]
#[command(name = "pinnforge", version, about = "Physics-informed neural network forward/inverse solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train on one benchmark and write figure data.
    Run(RunArgs),
    /// Transport experiment repeated for several Courant numbers.
    Cfl {
        /// Comma-separated Courant numbers.
        #[arg(long, default_value = "1.5,3,6")]
        courant: String,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Gradient checks, oracle residual nulls and RK4 order.
    Check,
}

#[derive(Args)]
struct RunArgs {
    /// transport1d, heat2d, wave2d or lotka_volterra.
    #[arg(long)]
    problem: Option<String>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct CommonArgs {
    /// forward or inverse.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Seed for observations, initialisation and sampling.
    #[arg(long)]
    seed: Option<u64>,
    /// JSON configuration; command-line options take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (default: runs/<problem>).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn build_config(
    problem: Option<&str>,
    common: &CommonArgs,
    default_dir: &str,
) -> Result<ExperimentConfig, HarnessError> {
    let parsed =
        problem.map(|p| p.parse::<ProblemKind>().map_err(|e| HarnessError::Config(e.to_string()))).transpose()?;
    let mut cfg = match (&common.config, parsed) {
        (Some(path), kind) => {
            let cfg = ExperimentConfig::load(path)?;
            if kind.is_some_and(|k| k != cfg.problem) {
                return Err(HarnessError::Config(format!(
                    "--problem {} contradicts the configuration file ({})",
                    kind.unwrap(),
                    cfg.problem
                )));
            }
            cfg
        }
        (None, Some(kind)) => ExperimentConfig::defaults(kind),
        (None, None) => return Err(HarnessError::Config("either --problem or --config is required".into())),
    };
    if let Some(mode) = &common.mode {
        cfg.train.mode = match mode.as_str() {
            "forward" => Mode::Forward,
            "inverse" => Mode::Inverse,
            other => return Err(HarnessError::Config(format!("unknown mode {other:?} (expected forward or inverse)"))),
        };
    }
    if let Some(epochs) = common.epochs {
        cfg.train.epochs = epochs;
    }
    if let Some(seed) = common.seed {
        cfg = cfg.with_seed(seed);
    }
    if let Some(out) = &common.out {
        cfg.output_dir = Some(out.clone());
    } else if cfg.output_dir.is_none() {
        cfg.output_dir = Some(PathBuf::from("runs").join(default_dir.replace("{problem}", cfg.problem.as_str())));
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_courant(list: &str) -> Result<Vec<f64>, HarnessError> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|e| HarnessError::Config(format!("bad Courant number {s:?}: {e}"))))
        .collect()
}

/// Progress line on stderr roughly every `every` epochs.
fn progress(every: usize) -> impl FnMut(&TraceRecord) {
    let mut next = 0;
    move |rec: &TraceRecord| {
        if rec.epoch >= next {
            let params: Vec<String> = rec.params.iter().map(|p| format!("{p:.5}")).collect();
            eprintln!(
                "epoch {:>8}  loss {:.4e}  params [{}]  {:.0} s",
                rec.epoch,
                rec.loss.total,
                params.join(", "),
                rec.seconds
            );
            next = rec.epoch + every;
        }
    }
}

fn run(cli: Cli) -> Result<bool, HarnessError> {
    match cli.command {
        Command::Run(args) => {
            let cfg = build_config(args.problem.as_deref(), &args.common, "{problem}")?;
            eprintln!(
                "training {} ({:?} mode, {} epochs, {:?})",
                cfg.problem, cfg.train.mode, cfg.train.epochs, cfg.precision
            );
            let every = (cfg.train.epochs / 20).max(1);
            let r = run_experiment_observed(&cfg, &mut progress(every))?;
            println!("problem        {}", cfg.problem);
            println!("epochs run     {}", r.epochs_run);
            println!("max abs error  {:.6e}", r.report.max_abs);
            println!("rms error      {:.6e}", r.report.rms);
            for p in &r.report.params {
                println!("{:<14} {:.6} (true {}, rel. error {:.3e})", p.name, p.estimate, p.truth, p.rel_error);
            }
            println!("seconds        {:.1}", r.seconds);
            if let Some(dir) = &cfg.output_dir {
                println!("artifacts      {}", dir.display());
            }
            Ok(true)
        }
        Command::Cfl { courant, common } => {
            let numbers = parse_courant(&courant)?;
            let cfg = build_config(Some("transport1d"), &common, "cfl")?;
            let report = cfl_study(&cfg, &numbers)?;
            println!("courant  time_slices  max_abs_error  base_grid_error  a_estimate  a_rel_error");
            for r in &report.rows {
                println!(
                    "{:<8} {:<12} {:<14.6e} {:<16.6e} {:<11.6} {:.3e}",
                    r.courant, r.time_slices, r.max_abs_error, r.base_grid_max_abs_error, r.a_estimate, r.a_rel_error
                );
            }
            Ok(true)
        }
        Command::Check => {
            let results = run_checks();
            let mut all = true;
            for c in &results {
                println!("[{}] {}: {}", if c.passed { "pass" } else { "FAIL" }, c.name, c.detail);
                all &= c.passed;
            }
            Ok(all)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
