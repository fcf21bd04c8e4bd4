//! Batch evaluation: empirical competitive ratios, aggregates, the
//! hindsight trust search, parameter sweeps and plot-ready reports.
//!
//! Instances are evaluated independently (in parallel when enabled) and
//! every output is ordered by instance index, so the number of worker
//! threads never changes a result or an emitted byte.

use std::fmt;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::data::{
    clamp_prices, estimate_band, load_forecast_csv, load_trace_csv, substream_seed, synth_uq, window_instance,
    window_starts, ForecastSeries, SynthUqConfig, SyntheticTrace, Trace, Windows, DEFAULT_PRICE_FLOOR,
    SCHEMA_VERSION,
};
use crate::dus::{dus_solve, DusConfig};
use crate::error::{Error, Result};
use crate::exec::{par_map, Execution};
use crate::offline::{solve_opt, SolveReport};
use crate::online::{
    consistency_bound, guarded_bound, ro_advice_run, robustness_bound, roro_run, threshold_run,
    uq_advice_run_with_dus, uq_robustness_bound, RunRecord,
};
use crate::problem::{Instance, ProblemParams, UqForecast};
use crate::robust::alpha_sasp;

/// Slack accepted below a ratio of 1 before it is treated as an error.
pub const CR_SLACK: f64 = 1e-6;
/// Added to the run-time DUS when checking bounds, since that DUS is only a lower bound.
pub const DUS_GUARD: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trust {
    Fixed(f64),
    /// The hindsight-best fixed trust over the configured instances.
    Star,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Algorithm {
    Roro,
    Threshold,
    UqAdvice,
    RoAdvice(Trust),
}

impl Algorithm {
    pub fn uses_forecast(&self) -> bool {
        matches!(self, Algorithm::UqAdvice | Algorithm::RoAdvice(_))
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Algorithm::Roro => f.write_str("roro"),
            Algorithm::Threshold => f.write_str("threshold"),
            Algorithm::UqAdvice => f.write_str("uq-advice"),
            Algorithm::RoAdvice(Trust::Fixed(r)) => write!(f, "ro-advice:{r}"),
            Algorithm::RoAdvice(Trust::Star) => f.write_str("ro-advice:star"),
        }
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "roro" => return Ok(Algorithm::Roro),
            "threshold" => return Ok(Algorithm::Threshold),
            "uq-advice" => return Ok(Algorithm::UqAdvice),
            "ro-advice:star" => return Ok(Algorithm::RoAdvice(Trust::Star)),
            _ => {}
        }
        if let Some(r) = s.strip_prefix("ro-advice:") {
            if let Ok(r) = r.parse::<f64>() {
                if (0.0..=1.0).contains(&r) {
                    return Ok(Algorithm::RoAdvice(Trust::Fixed(r)));
                }
            }
        }
        Err(Error::Config(format!(
            "unknown algorithm `{s}` (expected roro, threshold, uq-advice, ro-advice:<trust in [0,1]> or ro-advice:star)"
        )))
    }
}

impl Serialize for Algorithm {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Algorithm {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Csv {
        path: PathBuf,
        #[serde(default = "default_value_column")]
        value_column: String,
    },
    Synthetic(SyntheticTrace),
}

fn default_value_column() -> String {
    "value".into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PercentileMethod {
    /// Linear interpolation between closest ranks at index `q·(n − 1)`.
    #[default]
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub source: Source,
    /// Real forecasts for the advice algorithms; synthetic ones otherwise.
    pub forecast_path: Option<PathBuf>,
    pub horizon: usize,
    pub beta: f64,
    pub lambda_reg: f64,
    pub n_instances: usize,
    /// Instances per value in [`sweep`].
    pub sweep_instances: usize,
    pub xi: Option<f64>,
    pub algorithms: Vec<Algorithm>,
    pub master_seed: u64,
    pub percentile_method: PercentileMethod,
    /// `(p_min, p_max)`; the trace's own range when absent.
    pub band: Option<(f64, f64)>,
    pub price_floor: f64,
    pub dus: DusConfig,
    pub lambda_star_step: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            source: Source::Synthetic(SyntheticTrace::default()),
            forecast_path: None,
            horizon: 8,
            beta: 20.0,
            lambda_reg: 0.0,
            n_instances: 1000,
            sweep_instances: 200,
            xi: Some(0.5),
            algorithms: vec![
                Algorithm::Roro,
                Algorithm::Threshold,
                Algorithm::RoAdvice(Trust::Fixed(0.5)),
                Algorithm::RoAdvice(Trust::Star),
                Algorithm::UqAdvice,
            ],
            master_seed: 0,
            percentile_method: PercentileMethod::Linear,
            band: None,
            price_floor: DEFAULT_PRICE_FLOOR,
            dus: DusConfig::default(),
            lambda_star_step: 0.05,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.algorithms.is_empty() {
            return Err(Error::Config("no algorithms configured".into()));
        }
        if self.n_instances == 0 || self.sweep_instances == 0 {
            return Err(Error::Config("instance counts must be positive".into()));
        }
        if !(self.lambda_star_step > 0.0 && self.lambda_star_step <= 1.0) {
            return Err(Error::Config(format!(
                "lambda_star_step must lie in (0, 1], got {}",
                self.lambda_star_step
            )));
        }
        if let Some(xi) = self.xi {
            SynthUqConfig { xi, seed: 0 }.validate()?;
        }
        let needs_forecast = self.algorithms.iter().any(Algorithm::uses_forecast);
        if needs_forecast && self.forecast_path.is_none() && self.xi.is_none() {
            return Err(Error::Config(
                "advice algorithms need either forecast_path or xi".into(),
            ));
        }
        self.dus.validate()
    }

    /// Makes relative paths relative to `base` instead of the working directory.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Source::Csv { path, .. } = &mut self.source {
            fix(path);
        }
        if let Some(p) = &mut self.forecast_path {
            fix(p);
        }
    }
}

/// `Cost(ALG)/Cost(OPT)`, clamped at 1 within [`CR_SLACK`].
pub fn empirical_cr(run: &RunRecord, opt: &SolveReport) -> Result<f64> {
    cost_ratio(run.cost.total, opt.cost.total)
}

pub fn cost_ratio(alg: f64, opt: f64) -> Result<f64> {
    if !(opt > 0.0) {
        return Err(Error::InvalidParams(format!("optimal cost must be positive, got {opt}")));
    }
    let r = alg / opt;
    if !(r >= 1.0 - CR_SLACK) {
        return Err(Error::InvalidParams(format!("algorithm beats the optimum: ratio {r}")));
    }
    Ok(r.max(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateStats {
    pub mean: f64,
    pub p95: f64,
    pub count: usize,
    /// Sorted ascending.
    pub samples: Vec<f64>,
}

/// Value at quantile `q` of ascending `sorted`, interpolating linearly
/// between the closest ranks.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn aggregate(crs: &[f64]) -> Result<AggregateStats> {
    if crs.is_empty() {
        return Err(Error::InvalidParams("cannot aggregate an empty sample".into()));
    }
    let mut samples = crs.to_vec();
    samples.sort_by(f64::total_cmp);
    // Summing in sorted order makes the mean independent of input order.
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    Ok(AggregateStats {
        mean,
        p95: percentile(&samples, 0.95),
        count: samples.len(),
        samples,
    })
}

/// One instance with everything the algorithms need.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub index: usize,
    pub start: usize,
    pub instance: Instance,
    pub forecast: Option<UqForecast>,
    pub opt: SolveReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFailure {
    pub index: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundViolation {
    pub index: usize,
    pub algorithm: String,
    pub bound: String,
    pub cr: f64,
    pub limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceOutcome {
    pub index: usize,
    pub window_start: usize,
    pub opt_cost: f64,
    pub dus: Option<f64>,
    pub covered: Option<bool>,
    pub records: Vec<RunRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSummary {
    pub algorithm: String,
    pub stats: AggregateStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub band: (f64, f64),
    pub clamped_values: usize,
    pub rho_star: Option<f64>,
    pub outcomes: Vec<InstanceOutcome>,
    pub failures: Vec<InstanceFailure>,
    pub bound_violations: Vec<BoundViolation>,
    pub summaries: Vec<AlgorithmSummary>,
}

struct Loaded {
    trace: Trace,
    params: ProblemParams,
    clamped: usize,
    forecasts: Option<ForecastSeries>,
}

fn load(config: &ExperimentConfig) -> Result<Loaded> {
    let raw = match &config.source {
        Source::Csv { path, value_column } => load_trace_csv(path, value_column, false)?.trace,
        Source::Synthetic(spec) => spec.generate()?,
    };
    let (trace, clamped) = clamp_prices(&raw, config.price_floor)?;
    let (p_min, p_max) = match config.band {
        Some(b) => b,
        None => estimate_band(&trace)?,
    };
    let params = ProblemParams::new(p_min, p_max, config.beta, config.lambda_reg, config.horizon)?;
    let forecasts = config.forecast_path.as_ref().map(load_forecast_csv).transpose()?;
    Ok(Loaded {
        trace,
        params,
        clamped,
        forecasts,
    })
}

fn prepare_one(config: &ExperimentConfig, loaded: &Loaded, index: usize, start: usize) -> Result<Prepared> {
    let instance = window_instance(&loaded.trace, &loaded.params, start)?;
    let seed = substream_seed(config.master_seed, index as u64);
    let needs_forecast = config.algorithms.iter().any(Algorithm::uses_forecast);
    let forecast = match (&loaded.forecasts, needs_forecast) {
        (_, false) => None,
        (Some(series), true) => {
            let ts = &loaded.trace.timestamps[start..start + config.horizon];
            let p = &loaded.params;
            Some(series.aligned(ts)?.clamp_to_band(p.p_min, p.p_max))
        }
        (None, true) => {
            let xi = config.xi.ok_or_else(|| Error::Config("xi is required without forecasts".into()))?;
            Some(synth_uq(
                &instance,
                &SynthUqConfig { xi, seed },
                &config.dus.clone().with_seed(seed),
            )?)
        }
    };
    let opt = solve_opt(&loaded.params, &instance.prices)?;
    Ok(Prepared {
        index,
        start,
        instance,
        forecast,
        opt,
    })
}

/// Prepared instances, per-instance failures, the price band and the
/// number of clamped trace values.
pub type PreparedSet = (Vec<Prepared>, Vec<InstanceFailure>, (f64, f64), usize);

/// Loads the source and prepares every configured instance; failures are
/// returned alongside, not raised.
pub fn prepare(config: &ExperimentConfig, exec: Execution) -> Result<PreparedSet> {
    config.validate()?;
    let loaded = load(config)?;
    let starts = window_starts(
        loaded.trace.len(),
        config.horizon,
        Windows::Sampled {
            count: config.n_instances,
            seed: config.master_seed,
        },
    )?;
    let results = par_map(exec, &starts, |i, &s| prepare_one(config, &loaded, i, s));
    let mut prepared = Vec::new();
    let mut failures = Vec::new();
    for (index, r) in results.into_iter().enumerate() {
        match r {
            Ok(p) => prepared.push(p),
            Err(e) => failures.push(InstanceFailure {
                index,
                message: e.to_string(),
            }),
        }
    }
    Ok((prepared, failures, (loaded.params.p_min, loaded.params.p_max), loaded.clamped))
}

fn trust_grid(step: f64) -> Vec<f64> {
    let n = (1.0 / step).floor() as usize;
    let mut grid: Vec<f64> = (0..=n).map(|k| (k as f64 * step).min(1.0)).collect();
    if *grid.last().unwrap() < 1.0 {
        grid.push(1.0);
    }
    grid
}

/// The trust `ρ` on the grid `{0, step, …, 1}` with the lowest mean
/// RO-Advice ratio over `prepared`; ties go to the smaller `ρ`.
pub fn lambda_star_search(prepared: &[Prepared], grid_step: f64, exec: Execution) -> Result<f64> {
    if !(grid_step > 0.0 && grid_step <= 1.0) {
        return Err(Error::Config(format!("grid step must lie in (0, 1], got {grid_step}")));
    }
    let grid = trust_grid(grid_step);
    let per_instance = par_map(exec, prepared, |_, p| -> Option<Vec<f64>> {
        let advice = &p.forecast.as_ref()?.point;
        grid.iter()
            .map(|&rho| {
                let r = ro_advice_run(&p.instance, advice, rho).ok()?;
                cost_ratio(r.cost.total, p.opt.cost.total).ok()
            })
            .collect()
    });
    let rows: Vec<Vec<f64>> = per_instance.into_iter().flatten().collect();
    if rows.is_empty() {
        return Err(Error::Config("no instance with a forecast to tune the trust on".into()));
    }
    let mut best = (f64::INFINITY, 0.0);
    for (k, &rho) in grid.iter().enumerate() {
        let mean = rows.iter().map(|r| r[k]).sum::<f64>() / rows.len() as f64;
        if mean < best.0 {
            best = (mean, rho);
        }
    }
    Ok(best.1)
}

fn run_algorithms(
    config: &ExperimentConfig,
    p: &Prepared,
    rho_star: Option<f64>,
) -> Result<(InstanceOutcome, Vec<BoundViolation>)> {
    let params = &p.instance.params;
    let alpha = alpha_sasp(params)?;
    let mut records = Vec::with_capacity(config.algorithms.len());
    let mut violations = Vec::new();
    let mut dus_used = None;
    let mut check = |alg: &str, bound: &str, cr: f64, limit: f64| {
        if cr > limit + CR_SLACK {
            violations.push(BoundViolation {
                index: p.index,
                algorithm: alg.to_string(),
                bound: bound.to_string(),
                cr,
                limit,
            });
        }
    };
    for alg in &config.algorithms {
        let forecast = || {
            p.forecast
                .as_ref()
                .ok_or_else(|| Error::Config(format!("{alg} needs a forecast")))
        };
        let mut record = match alg {
            Algorithm::Roro => roro_run(&p.instance)?,
            Algorithm::Threshold => threshold_run(&p.instance)?,
            Algorithm::RoAdvice(trust) => {
                let rho = match trust {
                    Trust::Fixed(r) => *r,
                    Trust::Star => rho_star.ok_or_else(|| Error::Config("trust search did not run".into()))?,
                };
                ro_advice_run(&p.instance, &forecast()?.point, rho)?
            }
            Algorithm::UqAdvice => {
                let f = forecast()?;
                let seed = substream_seed(config.master_seed ^ 0x5eed, p.index as u64);
                let dus = dus_solve(params, f, &config.dus.clone().with_seed(seed))?;
                dus_used = Some(dus.score);
                uq_advice_run_with_dus(&p.instance, f, &dus, config.dus.score_inflation)?
            }
        };
        record.algorithm_name = alg.to_string();
        let cr = empirical_cr(&record, &p.opt)?;
        record.empirical_cr = Some(cr);
        let name = alg.to_string();
        match alg {
            Algorithm::Roro => check(&name, "alpha", cr, alpha),
            Algorithm::UqAdvice => {
                let f = forecast()?;
                let d = record.dus_used.unwrap_or(2.0);
                check(&name, "zeta", cr, guarded_bound(d, DUS_GUARD, |s| robustness_bound(params, alpha, s))?);
                if f.covers(&p.instance.prices) {
                    check(&name, "theta", cr, guarded_bound(d, DUS_GUARD, |s| uq_robustness_bound(params, alpha, s))?);
                }
                if f.point == p.instance.prices {
                    check(&name, "eta", cr, guarded_bound(d, DUS_GUARD, |s| consistency_bound(alpha, s))?);
                }
            }
            _ => {}
        }
        records.push(record);
    }
    let covered = p.forecast.as_ref().map(|f| f.covers(&p.instance.prices));
    Ok((
        InstanceOutcome {
            index: p.index,
            window_start: p.start,
            opt_cost: p.opt.cost.total,
            dus: dus_used,
            covered,
            records,
        },
        violations,
    ))
}

/// Runs every configured algorithm on every instance.
pub fn run_experiment(config: &ExperimentConfig, exec: Execution) -> Result<ExperimentResult> {
    let (prepared, mut failures, band, clamped_values) = prepare(config, exec)?;
    let needs_star = config.algorithms.contains(&Algorithm::RoAdvice(Trust::Star));
    let rho_star = if needs_star && !prepared.is_empty() {
        Some(lambda_star_search(&prepared, config.lambda_star_step, exec)?)
    } else {
        None
    };

    let results = par_map(exec, &prepared, |_, p| run_algorithms(config, p, rho_star));
    let mut outcomes = Vec::new();
    let mut bound_violations = Vec::new();
    for (p, r) in prepared.iter().zip(results) {
        match r {
            Ok((o, v)) => {
                outcomes.push(o);
                bound_violations.extend(v);
            }
            Err(e) => failures.push(InstanceFailure {
                index: p.index,
                message: e.to_string(),
            }),
        }
    }
    failures.sort_by_key(|f| f.index);

    let mut summaries = Vec::new();
    for (k, alg) in config.algorithms.iter().enumerate() {
        let crs: Vec<f64> = outcomes.iter().filter_map(|o| o.records[k].empirical_cr).collect();
        if crs.is_empty() {
            continue;
        }
        summaries.push(AlgorithmSummary {
            algorithm: alg.to_string(),
            stats: aggregate(&crs)?,
        });
    }
    if summaries.is_empty() {
        return Err(Error::Config(format!(
            "every instance failed ({} failures); first: {}",
            failures.len(),
            failures.first().map_or("", |f| f.message.as_str())
        )));
    }
    Ok(ExperimentResult {
        config: config.clone(),
        band,
        clamped_values,
        rho_star,
        outcomes,
        failures,
        bound_violations,
        summaries,
    })
}

impl ExperimentResult {
    pub fn summary(&self, algorithm: &str) -> Option<&AggregateStats> {
        self.summaries.iter().find(|s| s.algorithm == algorithm).map(|s| &s.stats)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Xi,
    #[serde(rename = "T")]
    Horizon,
    Beta,
    Trace,
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepParam::Xi => "xi",
            SweepParam::Horizon => "T",
            SweepParam::Beta => "beta",
            SweepParam::Trace => "trace",
        })
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "xi" => Ok(SweepParam::Xi),
            "T" | "horizon" => Ok(SweepParam::Horizon),
            "beta" => Ok(SweepParam::Beta),
            "trace" => Ok(SweepParam::Trace),
            _ => Err(Error::Config(format!("unknown sweep parameter `{s}` (expected xi, T, beta or trace)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param_value: String,
    pub algorithm: String,
    pub mean_cr: f64,
    pub p95: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedValue {
    pub value: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub config: ExperimentConfig,
    pub parameter: SweepParam,
    pub values: Vec<String>,
    pub rows: Vec<SweepRow>,
    pub skipped: Vec<SkippedValue>,
    pub failures: usize,
    pub bound_violations: usize,
}

fn apply(config: &ExperimentConfig, param: SweepParam, value: &str) -> Result<ExperimentConfig> {
    let mut c = config.clone();
    c.n_instances = config.sweep_instances;
    let num = || {
        value
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("`{value}` is not a number")))
    };
    match param {
        SweepParam::Xi => c.xi = Some(num()?),
        SweepParam::Beta => c.beta = num()?,
        SweepParam::Horizon => {
            c.horizon = value
                .parse::<usize>()
                .ok()
                .filter(|t| *t >= 1)
                .ok_or_else(|| Error::Config(format!("`{value}` is not a positive horizon")))?
        }
        SweepParam::Trace => {
            let value_column = match &config.source {
                Source::Csv { value_column, .. } => value_column.clone(),
                Source::Synthetic(_) => default_value_column(),
            };
            c.source = Source::Csv {
                path: PathBuf::from(value),
                value_column,
            };
        }
    }
    Ok(c)
}

/// One experiment per value with `sweep_instances` instances each.
/// Values that fail validation are skipped and listed.
pub fn sweep(config: &ExperimentConfig, param: SweepParam, values: &[String], exec: Execution) -> Result<SweepResult> {
    config.validate()?;
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    let (mut failures, mut bound_violations) = (0, 0);
    for value in values {
        let outcome = apply(config, param, value).and_then(|c| run_experiment(&c, exec));
        match outcome {
            Ok(r) => {
                failures += r.failures.len();
                bound_violations += r.bound_violations.len();
                for s in &r.summaries {
                    rows.push(SweepRow {
                        param_value: value.clone(),
                        algorithm: s.algorithm.clone(),
                        mean_cr: s.stats.mean,
                        p95: s.stats.p95,
                        count: s.stats.count,
                    });
                }
            }
            Err(e) => skipped.push(SkippedValue {
                value: value.clone(),
                reason: e.to_string(),
            }),
        }
    }
    Ok(SweepResult {
        config: config.clone(),
        parameter: param,
        values: values.to_vec(),
        rows,
        skipped,
        failures,
        bound_violations,
    })
}

/// What a manifest replays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Job {
    Experiment,
    Sweep { parameter: SweepParam, values: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub job: Job,
    pub config: ExperimentConfig,
    pub band: Option<(f64, f64)>,
    pub clamped_values: Option<usize>,
    pub rho_star: Option<f64>,
    pub instances: usize,
    pub failures: Vec<InstanceFailure>,
    pub skipped: Vec<SkippedValue>,
    pub bound_violations: Vec<BoundViolation>,
    pub files: Vec<String>,
}

fn f6(v: f64) -> String {
    format!("{v:.6}")
}

fn file_safe(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect()
}

fn write_file(dir: &Path, name: &str, content: &str, files: &mut Vec<String>) -> Result<()> {
    std::fs::write(dir.join(name), content).map_err(|e| Error::data(dir.join(name).display().to_string(), e.to_string()))?;
    files.push(name.to_string());
    Ok(())
}

fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<()> {
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    std::fs::write(dir.join("manifest.json"), text)
        .map_err(|e| Error::data(dir.join("manifest.json").display().to_string(), e.to_string()))?;
    Ok(())
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::data(dir.display().to_string(), e.to_string()))
}

/// Writes `summary.csv`, one `cdf_<algorithm>.csv` per algorithm and
/// `manifest.json`; returns the file names.
pub fn emit_report(result: &ExperimentResult, out_dir: &Path) -> Result<Vec<String>> {
    ensure_dir(out_dir)?;
    let mut files = Vec::new();
    let mut summary = String::from("algorithm,mean,p95,count\n");
    for s in &result.summaries {
        let _ = writeln!(summary, "{},{},{},{}", s.algorithm, f6(s.stats.mean), f6(s.stats.p95), s.stats.count);
    }
    write_file(out_dir, "summary.csv", &summary, &mut files)?;
    for s in &result.summaries {
        let mut cdf = String::from("value,cumulative_fraction\n");
        let n = s.stats.samples.len();
        for (i, v) in s.stats.samples.iter().enumerate() {
            let _ = writeln!(cdf, "{},{}", f6(*v), f6((i + 1) as f64 / n as f64));
        }
        write_file(out_dir, &format!("cdf_{}.csv", file_safe(&s.algorithm)), &cdf, &mut files)?;
    }
    files.push("manifest.json".into());
    write_manifest(
        out_dir,
        &Manifest {
            schema_version: SCHEMA_VERSION,
            job: Job::Experiment,
            config: result.config.clone(),
            band: Some(result.band),
            clamped_values: Some(result.clamped_values),
            rho_star: result.rho_star,
            instances: result.outcomes.len(),
            failures: result.failures.clone(),
            skipped: Vec::new(),
            bound_violations: result.bound_violations.clone(),
            files: files.clone(),
        },
    )?;
    Ok(files)
}

/// Writes `sweep_<param>.csv` and `manifest.json`.
pub fn emit_sweep_report(result: &SweepResult, out_dir: &Path) -> Result<Vec<String>> {
    ensure_dir(out_dir)?;
    let mut files = Vec::new();
    let mut csv = String::from("param_value,algorithm,mean_cr\n");
    for r in &result.rows {
        let _ = writeln!(csv, "{},{},{}", r.param_value, r.algorithm, f6(r.mean_cr));
    }
    write_file(out_dir, &format!("sweep_{}.csv", result.parameter), &csv, &mut files)?;
    files.push("manifest.json".into());
    write_manifest(
        out_dir,
        &Manifest {
            schema_version: SCHEMA_VERSION,
            job: Job::Sweep {
                parameter: result.parameter,
                values: result.values.clone(),
            },
            config: result.config.clone(),
            band: None,
            clamped_values: None,
            rho_star: None,
            instances: result.rows.iter().map(|r| r.count).max().unwrap_or(0),
            failures: Vec::new(),
            skipped: result.skipped.clone(),
            bound_violations: Vec::new(),
            files: files.clone(),
        },
    )?;
    Ok(files)
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let label = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| Error::data(&label, e.to_string()))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::data(&label, e.to_string()))?;
    if m.schema_version != SCHEMA_VERSION {
        return Err(Error::data(label, format!("unsupported schema_version {}", m.schema_version)));
    }
    Ok(m)
}

/// Re-runs the job recorded in a manifest and writes its report to `out_dir`.
pub fn replay(manifest: &Manifest, out_dir: &Path, exec: Execution) -> Result<Vec<String>> {
    match &manifest.job {
        Job::Experiment => emit_report(&run_experiment(&manifest.config, exec)?, out_dir),
        Job::Sweep { parameter, values } => {
            emit_sweep_report(&sweep(&manifest.config, *parameter, values, exec)?, out_dir)
        }
    }
}
