//! `sasp`: offline optimum, online algorithms, DUS and experiment reports.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error,
//! 3 solver failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use sasp_core::data::{read_json, synth_uq, write_json, SynthUqConfig};
use sasp_core::dus::{dus_solve, DusConfig};
use sasp_core::exec::{with_jobs, Execution};
use sasp_core::experiments::{
    cost_ratio, emit_report, emit_sweep_report, read_manifest, replay, run_experiment, sweep, ExperimentConfig,
    SweepParam,
};
use sasp_core::offline::solve_opt;
use sasp_core::online::{ro_advice_run, roro_run, threshold_run, uq_advice_run};
use sasp_core::{Instance, UqForecast};

#[derive(Debug, Parser)]
#[command(name = "sasp", version, about = "Signal-aware workload shifting: offline optimum, online algorithms and experiments")]
struct Cli {
    /// Worker threads for batch commands (1 runs sequentially)
    #[arg(long, global = true, env = "SASP_JOBS")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AlgorithmArg {
    Roro,
    UqAdvice,
    RoAdvice,
    Threshold,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve an instance offline and print the optimal cost
    Solve {
        /// Instance JSON document
        #[arg(long)]
        instance: PathBuf,
        /// Where to write the solve report JSON
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one online algorithm on an instance and print its empirical ratio
    Run {
        #[arg(long, value_enum)]
        algorithm: AlgorithmArg,
        /// Instance JSON document
        #[arg(long)]
        instance: PathBuf,
        /// Forecast JSON document (required by the advice algorithms)
        #[arg(long)]
        forecast: Option<PathBuf>,
        /// Trust in the advice for ro-advice, in [0, 1]
        #[arg(long)]
        trust: Option<f64>,
        /// Seed of the DUS search used by uq-advice
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Where to write the run record JSON
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute the decision uncertainty score of a forecast
    Dus {
        /// Instance JSON document (supplies the problem parameters)
        #[arg(long)]
        instance: PathBuf,
        /// Forecast JSON document
        #[arg(long)]
        forecast: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Offline solves available to the search
        #[arg(long, default_value_t = 500)]
        budget: usize,
        /// Where to write the DUS result JSON
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic uncertainty-quantified forecast for an instance
    Synth {
        /// Instance JSON document
        #[arg(long)]
        instance: PathBuf,
        /// Box width as a fraction of half the price band, in [0, 1]
        #[arg(long)]
        xi: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Where to write the forecast JSON
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a configured experiment and write its report
    Experiment {
        /// Experiment config JSON
        #[arg(long)]
        config: PathBuf,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Repeat an experiment over values of one parameter
    Sweep {
        /// Experiment config JSON
        #[arg(long)]
        config: PathBuf,
        /// Parameter to vary: xi, T, beta or trace
        #[arg(long)]
        param: String,
        /// Comma-separated values
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-run the job recorded in a manifest
    Report {
        /// manifest.json written by experiment or sweep
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(String),
    Solver(String),
}

impl From<sasp_core::Error> for Failure {
    fn from(e: sasp_core::Error) -> Self {
        if e.is_solver_failure() {
            Failure::Solver(e.to_string())
        } else {
            Failure::Data(e.to_string())
        }
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Solver(_) => 3,
        }
    }
}

type Outcome = Result<(), Failure>;

fn load_instance(path: &Path) -> Result<Instance, Failure> {
    let instance: Instance = read_json(path)?;
    instance.validate()?;
    Ok(instance)
}

fn load_forecast(path: &Path) -> Result<UqForecast, Failure> {
    let f: UqForecast = read_json(path)?;
    f.validate()?;
    Ok(f)
}

fn save<T: serde::Serialize>(path: Option<&Path>, body: &T) -> Outcome {
    if let Some(p) = path {
        write_json(p, body)?;
    }
    Ok(())
}

fn load_config(path: &Path) -> Result<ExperimentConfig, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    let mut config: ExperimentConfig =
        serde_json::from_str(&text).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    config.resolve_paths(path.parent().unwrap_or(Path::new(".")));
    config.validate()?;
    Ok(config)
}

fn execution(jobs: Option<usize>) -> Execution {
    match jobs {
        Some(1) => Execution::Sequential,
        _ => Execution::Parallel,
    }
}

fn run(cli: Cli) -> Outcome {
    let exec = execution(cli.jobs);
    match cli.command {
        Command::Solve { instance, out } => {
            let instance = load_instance(&instance)?;
            let report = solve_opt(&instance.params, &instance.prices)?;
            save(out.as_deref(), &report)?;
            println!("{:.6}", report.cost.total);
        }
        Command::Run {
            algorithm,
            instance,
            forecast,
            trust,
            seed,
            out,
        } => {
            let needs_forecast = matches!(algorithm, AlgorithmArg::UqAdvice | AlgorithmArg::RoAdvice);
            if needs_forecast && forecast.is_none() {
                return Err(Failure::Usage("--forecast is required for advice algorithms".into()));
            }
            let trust = match (algorithm, trust) {
                (AlgorithmArg::RoAdvice, None) => return Err(Failure::Usage("--trust is required for ro-advice".into())),
                (AlgorithmArg::RoAdvice, Some(r)) if !(0.0..=1.0).contains(&r) => {
                    return Err(Failure::Usage(format!("--trust must lie in [0, 1], got {r}")))
                }
                (AlgorithmArg::RoAdvice, Some(r)) => r,
                (_, Some(_)) => return Err(Failure::Usage("--trust only applies to ro-advice".into())),
                (_, None) => 0.0,
            };
            let instance = load_instance(&instance)?;
            let forecast = forecast.as_deref().map(load_forecast).transpose()?;
            let mut record = match (algorithm, forecast) {
                (AlgorithmArg::Roro, _) => roro_run(&instance)?,
                (AlgorithmArg::Threshold, _) => threshold_run(&instance)?,
                (AlgorithmArg::UqAdvice, Some(f)) => {
                    uq_advice_run(&instance, &f, &DusConfig::default().with_seed(seed))?
                }
                (AlgorithmArg::RoAdvice, Some(f)) => ro_advice_run(&instance, &f.point, trust)?,
                _ => unreachable!("forecast presence checked above"),
            };
            let opt = solve_opt(&instance.params, &instance.prices)?;
            let cr = cost_ratio(record.cost.total, opt.cost.total)?;
            record.empirical_cr = Some(cr);
            save(out.as_deref(), &record)?;
            println!("{cr:.6}");
        }
        Command::Dus {
            instance,
            forecast,
            seed,
            budget,
            out,
        } => {
            let instance = load_instance(&instance)?;
            let forecast = load_forecast(&forecast)?;
            let config = DusConfig {
                eval_budget: budget,
                seed,
                ..DusConfig::default()
            };
            let r = dus_solve(&instance.params, &forecast, &config)?;
            save(out.as_deref(), &r)?;
            println!("{:.6}", r.score);
        }
        Command::Synth {
            instance,
            xi,
            seed,
            out,
        } => {
            if !(0.0..=1.0).contains(&xi) {
                return Err(Failure::Usage(format!("--xi must lie in [0, 1], got {xi}")));
            }
            let instance = load_instance(&instance)?;
            let f = synth_uq(&instance, &SynthUqConfig { xi, seed }, &DusConfig::default().with_seed(seed))?;
            write_json(&out, &f)?;
        }
        Command::Experiment { config, out } => {
            let config = load_config(&config)?;
            let result = with_jobs(cli.jobs, || run_experiment(&config, exec))?;
            emit_report(&result, &out)?;
            println!("{:<20} {:>10} {:>10} {:>6}", "algorithm", "mean", "p95", "count");
            for s in &result.summaries {
                println!(
                    "{:<20} {:>10.6} {:>10.6} {:>6}",
                    s.algorithm, s.stats.mean, s.stats.p95, s.stats.count
                );
            }
            if !result.failures.is_empty() {
                eprintln!("{} instance(s) failed; see manifest.json", result.failures.len());
            }
        }
        Command::Sweep {
            config,
            param,
            values,
            out,
        } => {
            let param: SweepParam = param.parse().map_err(|e: sasp_core::Error| Failure::Usage(e.to_string()))?;
            let config = load_config(&config)?;
            let result = with_jobs(cli.jobs, || sweep(&config, param, &values, exec))?;
            emit_sweep_report(&result, &out)?;
            for r in &result.rows {
                println!("{:<10} {:<20} {:>10.6}", r.param_value, r.algorithm, r.mean_cr);
            }
            for s in &result.skipped {
                eprintln!("skipped {}: {}", s.value, s.reason);
            }
        }
        Command::Report { manifest, out } => {
            let manifest = read_manifest(&manifest)?;
            let files = with_jobs(cli.jobs, || replay(&manifest, &out, exec))?;
            for f in files {
                println!("{}", out.join(f).display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Usage(m) | Failure::Data(m) | Failure::Solver(m)) = &f;
            eprintln!("error: {m}");
            ExitCode::from(f.exit_code())
        }
    }
}
