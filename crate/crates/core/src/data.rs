//! Signal traces, forecast files, instance windows and synthetic forecasts.

use std::path::Path;

use chrono::{DateTime, Duration, NaiveDate, NaiveDateTime, TimeZone, Utc};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::dus::{dus_solve, DusConfig};
use crate::error::{Error, Result};
use crate::problem::{Instance, ProblemParams, UqForecast};

/// Current version of the JSON documents written by [`write_json`].
pub const SCHEMA_VERSION: u32 = 1;
/// Default floor for non-positive trace values.
pub const DEFAULT_PRICE_FLOOR: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub name: String,
    pub timestamps: Vec<DateTime<Utc>>,
    pub values: Vec<f64>,
    pub units: String,
}

impl Trace {
    pub fn new(name: impl Into<String>, timestamps: Vec<DateTime<Utc>>, values: Vec<f64>, units: impl Into<String>) -> Result<Self> {
        let t = Trace {
            name: name.into(),
            timestamps,
            values,
            units: units.into(),
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.timestamps.len() != self.values.len() {
            return Err(Error::Dimension {
                what: "trace values",
                expected: self.timestamps.len(),
                got: self.values.len(),
            });
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::data(&self.name, format!("non-finite value at index {i}")));
        }
        if let Some(i) = self.timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::data(
                &self.name,
                format!("timestamps not strictly increasing at index {}", i + 1),
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// A data row skipped by a lenient load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedRow {
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedTrace {
    pub trace: Trace,
    pub rejected: Vec<RejectedRow>,
}

/// Accepts RFC 3339, `YYYY-MM-DD[ T]HH:MM[:SS]` (read as UTC) and bare dates.
pub fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(Utc.from_utc_datetime(&t));
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|t| Utc.from_utc_datetime(&t))
}

fn path_label(path: &Path) -> String {
    path.display().to_string()
}

fn open_csv(path: &Path) -> Result<(csv::Reader<std::fs::File>, csv::StringRecord)> {
    let label = path_label(path);
    let file = std::fs::File::open(path).map_err(|e| Error::data(&label, e.to_string()))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| Error::data(&label, format!("cannot read header: {e}")))?
        .clone();
    Ok((reader, headers))
}

fn column(headers: &csv::StringRecord, name: &str, label: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::data(label, format!("missing column `{name}`")))
}

/// Reads a `timestamp,<value_column>` CSV. Rows whose timestamp or value
/// does not parse are rejected: with `strict` the first one is an error,
/// otherwise they are skipped and listed. Duplicate or decreasing
/// timestamps are always errors.
pub fn load_trace_csv(path: impl AsRef<Path>, value_column: &str, strict: bool) -> Result<LoadedTrace> {
    let path = path.as_ref();
    let label = path_label(path);
    let (mut reader, headers) = open_csv(path)?;
    let ts_col = column(&headers, "timestamp", &label)?;
    let val_col = column(&headers, value_column, &label)?;

    let mut timestamps: Vec<DateTime<Utc>> = Vec::new();
    let mut values = Vec::new();
    let mut rejected = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::data(&label, e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        let ts = record.get(ts_col).and_then(parse_timestamp);
        let value = record.get(val_col).and_then(|v| v.parse::<f64>().ok()).filter(|v| v.is_finite());
        let (ts, value) = match (ts, value) {
            (Some(ts), Some(v)) => (ts, v),
            (None, _) => {
                let reason = format!("unparseable timestamp {:?}", record.get(ts_col).unwrap_or(""));
                reject(&label, line, reason, strict, &mut rejected)?;
                continue;
            }
            (_, None) => {
                let reason = format!("unparseable value {:?}", record.get(val_col).unwrap_or(""));
                reject(&label, line, reason, strict, &mut rejected)?;
                continue;
            }
        };
        if let Some(prev) = timestamps.last() {
            if ts <= *prev {
                let what = if ts == *prev { "duplicate" } else { "out-of-order" };
                return Err(Error::data(&label, format!("line {line}: {what} timestamp {ts}")));
            }
        }
        timestamps.push(ts);
        values.push(value);
    }
    if values.is_empty() {
        return Err(Error::data(&label, "trace has no valid rows"));
    }
    let name = path.file_stem().map_or_else(|| label.clone(), |s| s.to_string_lossy().into_owned());
    Ok(LoadedTrace {
        trace: Trace::new(name, timestamps, values, value_column)?,
        rejected,
    })
}

fn reject(label: &str, line: u64, reason: String, strict: bool, rejected: &mut Vec<RejectedRow>) -> Result<()> {
    if strict {
        return Err(Error::data(label, format!("line {line}: {reason}")));
    }
    rejected.push(RejectedRow { line, reason });
    Ok(())
}

/// Replaces values below `floor` by `floor`; returns the number replaced.
pub fn clamp_prices(trace: &Trace, floor: f64) -> Result<(Trace, usize)> {
    if !(floor > 0.0 && floor.is_finite()) {
        return Err(Error::InvalidParams(format!("price floor must be positive, got {floor}")));
    }
    let mut out = trace.clone();
    let mut count = 0;
    for v in &mut out.values {
        if *v < floor {
            *v = floor;
            count += 1;
        }
    }
    Ok((out, count))
}

/// Global `(min, max)` of the trace values.
pub fn estimate_band(trace: &Trace) -> Result<(f64, f64)> {
    if trace.is_empty() {
        return Err(Error::data(&trace.name, "empty trace"));
    }
    Ok(trace
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v))))
}

/// How instance windows are cut from a trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Windows {
    /// Every `stride`-th window.
    Stride(usize),
    /// `count` window starts drawn uniformly with a seeded generator.
    Sampled { count: usize, seed: u64 },
}

/// Start indices of the windows of length `horizon`.
pub fn window_starts(len: usize, horizon: usize, windows: Windows) -> Result<Vec<usize>> {
    if horizon == 0 || len < horizon {
        return Err(Error::InvalidParams(format!(
            "trace of length {len} is shorter than the horizon {horizon}"
        )));
    }
    let last = len - horizon;
    match windows {
        Windows::Stride(0) => Err(Error::InvalidParams("stride must be positive".into())),
        Windows::Stride(s) => Ok((0..=last).step_by(s).collect()),
        Windows::Sampled { count, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok((0..count).map(|_| rng.gen_range(0..=last)).collect())
        }
    }
}

/// Cuts windows of length `params.horizon`. Each instance carries `params`
/// (normally the trace-level band); prices are clipped into that band.
pub fn make_instances(trace: &Trace, params: &ProblemParams, windows: Windows) -> Result<Vec<Instance>> {
    params.validate()?;
    window_starts(trace.len(), params.horizon, windows)?
        .into_iter()
        .map(|s| window_instance(trace, params, s))
        .collect()
}

pub fn window_instance(trace: &Trace, params: &ProblemParams, start: usize) -> Result<Instance> {
    let prices = trace.values[start..start + params.horizon]
        .iter()
        .map(|p| p.clamp(params.p_min, params.p_max))
        .collect();
    Instance::new(params.clone(), prices)
}

/// Seed of substream `index` under `master`.
pub fn substream_seed(master: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng.next_u64()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthUqConfig {
    pub xi: f64,
    pub seed: u64,
}

impl SynthUqConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.xi) {
            return Err(Error::OutOfRange {
                what: "xi",
                value: self.xi,
                lo: 0.0,
                hi: 1.0,
            });
        }
        Ok(())
    }
}

/// Synthetic forecast around the true prices. Each box has width
/// `ξ·(p_max − p_min)/2` and holds the true price at a uniformly random
/// offset; the point forecast is the DUS-maximizing scenario of the boxes
/// with the true prices as centre.
pub fn synth_uq(instance: &Instance, config: &SynthUqConfig, dus_config: &DusConfig) -> Result<UqForecast> {
    config.validate()?;
    let params = &instance.params;
    let width = config.xi * (params.p_max - params.p_min) / 2.0;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut lower = Vec::with_capacity(instance.horizon());
    let mut upper = Vec::with_capacity(instance.horizon());
    for &p in &instance.prices {
        let r: f64 = rng.gen();
        let l = (p - r * width).max(params.p_min);
        lower.push(l);
        upper.push((l + width).min(params.p_max));
    }
    let boxes = UqForecast::new(instance.prices.clone(), lower, upper, 0.0)?;
    let dus = dus_solve(params, &boxes, dus_config)?;
    UqForecast::new(dus.worst_scenario, boxes.lower, boxes.upper, 0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastSeries {
    pub timestamps: Vec<DateTime<Utc>>,
    pub point: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub coverage_delta: f64,
}

impl ForecastSeries {
    /// The forecast for exactly these timestamps; every one must be present.
    pub fn aligned(&self, timestamps: &[DateTime<Utc>]) -> Result<UqForecast> {
        let mut idx = Vec::with_capacity(timestamps.len());
        for ts in timestamps {
            match self.timestamps.binary_search(ts) {
                Ok(i) => idx.push(i),
                Err(_) => return Err(Error::InvalidForecast(format!("no forecast for {ts}"))),
            }
        }
        let pick = |v: &Vec<f64>| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
        UqForecast::new(pick(&self.point), pick(&self.lower), pick(&self.upper), self.coverage_delta)
    }
}

/// Reads `timestamp,point,lower,upper[,delta]`. A `delta` column must hold
/// one value for the whole file.
pub fn load_forecast_csv(path: impl AsRef<Path>) -> Result<ForecastSeries> {
    let path = path.as_ref();
    let label = path_label(path);
    let (mut reader, headers) = open_csv(path)?;
    let cols = [
        column(&headers, "timestamp", &label)?,
        column(&headers, "point", &label)?,
        column(&headers, "lower", &label)?,
        column(&headers, "upper", &label)?,
    ];
    let delta_col = headers.iter().position(|h| h == "delta");

    let mut s = ForecastSeries {
        timestamps: Vec::new(),
        point: Vec::new(),
        lower: Vec::new(),
        upper: Vec::new(),
        coverage_delta: 0.0,
    };
    let mut delta: Option<f64> = None;
    for record in reader.records() {
        let record = record.map_err(|e| Error::data(&label, e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        let bad = |what: &str| Error::data(&label, format!("line {line}: unparseable {what}"));
        let ts = record.get(cols[0]).and_then(parse_timestamp).ok_or_else(|| bad("timestamp"))?;
        let mut nums = [0.0; 3];
        for (k, name) in ["point", "lower", "upper"].iter().enumerate() {
            nums[k] = record
                .get(cols[k + 1])
                .and_then(|v| v.parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(name))?;
        }
        let [p, l, u] = nums;
        if !(l <= p && p <= u) {
            return Err(Error::data(
                &label,
                format!("line {line}: expected lower <= point <= upper, got {l} / {p} / {u}"),
            ));
        }
        if let Some(c) = delta_col {
            let d = record
                .get(c)
                .and_then(|v| v.parse::<f64>().ok())
                .filter(|d| (0.0..=1.0).contains(d))
                .ok_or_else(|| bad("delta"))?;
            match delta {
                Some(prev) if prev != d => {
                    return Err(Error::data(&label, format!("line {line}: delta {d} differs from {prev}")))
                }
                _ => delta = Some(d),
            }
        }
        if s.timestamps.last().is_some_and(|prev| ts <= *prev) {
            return Err(Error::data(&label, format!("line {line}: timestamps not strictly increasing")));
        }
        s.timestamps.push(ts);
        s.point.push(p);
        s.lower.push(l);
        s.upper.push(u);
    }
    if s.point.is_empty() {
        return Err(Error::data(&label, "forecast has no rows"));
    }
    s.coverage_delta = delta.unwrap_or(0.0);
    Ok(s)
}

/// A JSON document tagged with [`SCHEMA_VERSION`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versioned<T> {
    pub schema_version: u32,
    #[serde(flatten)]
    pub body: T,
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, body: &T) -> Result<()> {
    let doc = Versioned {
        schema_version: SCHEMA_VERSION,
        body,
    };
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let label = path_label(path);
    let text = std::fs::read_to_string(path).map_err(|e| Error::data(&label, e.to_string()))?;
    let doc: Versioned<T> = serde_json::from_str(&text).map_err(|e| Error::data(&label, e.to_string()))?;
    if doc.schema_version != SCHEMA_VERSION {
        return Err(Error::data(
            &label,
            format!("unsupported schema_version {} (expected {SCHEMA_VERSION})", doc.schema_version),
        ));
    }
    Ok(doc.body)
}

/// Hourly synthetic signal with a daily cycle and uniform noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticTrace {
    pub length: usize,
    pub base: f64,
    pub amplitude: f64,
    pub noise: f64,
    pub period_hours: f64,
    pub seed: u64,
}

impl Default for SyntheticTrace {
    fn default() -> Self {
        SyntheticTrace {
            length: 24 * 60,
            base: 250.0,
            amplitude: 120.0,
            noise: 60.0,
            period_hours: 24.0,
            seed: 0,
        }
    }
}

impl SyntheticTrace {
    pub fn generate(&self) -> Result<Trace> {
        if self.length == 0 || !(self.period_hours > 0.0) {
            return Err(Error::Config("synthetic trace needs a positive length and period".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let start = Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap();
        let mut timestamps = Vec::with_capacity(self.length);
        let mut values = Vec::with_capacity(self.length);
        for h in 0..self.length {
            let phase = std::f64::consts::TAU * h as f64 / self.period_hours;
            let noise = if self.noise > 0.0 { rng.gen_range(-self.noise..=self.noise) } else { 0.0 };
            values.push((self.base + self.amplitude * phase.sin() + noise).max(DEFAULT_PRICE_FLOOR));
            timestamps.push(start + Duration::hours(h as i64));
        }
        Trace::new("synthetic", timestamps, values, "signal")
    }
}
