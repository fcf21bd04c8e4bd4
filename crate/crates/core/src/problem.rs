//! Problem model: parameters, instances, forecasts, schedules and the
//! three-term cost
//!
//! ```text
//! cost(x) = Σ p_t x_t  +  β Σ_{t=1}^{T+1} |x_t − x_{t−1}|  +  λ Σ x_t²
//! ```
//!
//! with boundary decisions `x_0 = x_{T+1} = 0`, subject to `Σ x_t = 1` and
//! `0 ≤ x_t ≤ d_t`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance on the budget constraint and the box constraints.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Static parameters of a workload-shifting problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemParams {
    pub p_min: f64,
    pub p_max: f64,
    pub beta: f64,
    pub lambda_reg: f64,
    pub horizon: usize,
    /// Per-step rate limits `d_t ∈ (0, 1]`.
    pub rate_limits: Vec<f64>,
}

impl ProblemParams {
    /// Parameters with no rate constraint (`d_t = 1` for every step).
    pub fn new(p_min: f64, p_max: f64, beta: f64, lambda_reg: f64, horizon: usize) -> Result<Self> {
        Self::with_rate_limits(p_min, p_max, beta, lambda_reg, vec![1.0; horizon])
    }

    pub fn with_rate_limits(
        p_min: f64,
        p_max: f64,
        beta: f64,
        lambda_reg: f64,
        rate_limits: Vec<f64>,
    ) -> Result<Self> {
        let params = ProblemParams {
            p_min,
            p_max,
            beta,
            lambda_reg,
            horizon: rate_limits.len(),
            rate_limits,
        };
        params.validate()?;
        Ok(params)
    }

    /// Checks the bounded-support and "not too large" assumptions.
    ///
    /// `β` and `λ` must lie in `[0, (p_max − p_min)/2)` and `[0, p_max − p_min)`
    /// respectively. A zero coefficient is always accepted so that degenerate
    /// bands (`p_min = p_max`) remain expressible.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if !(self.p_min.is_finite() && self.p_max.is_finite()) {
            return bad("price bounds must be finite".into());
        }
        if self.p_min <= 0.0 {
            return bad(format!("p_min must be positive, got {}", self.p_min));
        }
        if self.p_min > self.p_max {
            return bad(format!("p_min {} exceeds p_max {}", self.p_min, self.p_max));
        }
        let spread = self.p_max - self.p_min;
        if !(self.beta >= 0.0) || (self.beta > 0.0 && self.beta >= spread / 2.0) {
            return bad(format!(
                "beta {} must lie in [0, (p_max - p_min)/2 = {})",
                self.beta,
                spread / 2.0
            ));
        }
        if !(self.lambda_reg >= 0.0) || (self.lambda_reg > 0.0 && self.lambda_reg >= spread) {
            return bad(format!(
                "lambda {} must lie in [0, p_max - p_min = {})",
                self.lambda_reg, spread
            ));
        }
        if self.horizon == 0 {
            return bad("horizon must be at least 1".into());
        }
        if self.rate_limits.len() != self.horizon {
            return Err(Error::Dimension {
                what: "rate limits",
                expected: self.horizon,
                got: self.rate_limits.len(),
            });
        }
        if let Some((t, d)) = self
            .rate_limits
            .iter()
            .enumerate()
            .find(|(_, &d)| !(d > 0.0 && d <= 1.0))
        {
            return bad(format!("rate limit d_{} = {} not in (0, 1]", t + 1, d));
        }
        let total: f64 = self.rate_limits.iter().sum();
        if total < 1.0 - FEASIBILITY_TOL {
            return bad(format!(
                "rate limits sum to {total}, no schedule can finish the workload"
            ));
        }
        Ok(())
    }

    /// `Σ_{τ=t+1}^{T} d_τ` for a 1-based step `t`.
    pub fn tail_capacity(&self, t: usize) -> f64 {
        self.rate_limits.iter().skip(t).sum()
    }

    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        let mut p = self.clone();
        p.beta = beta;
        p.validate()?;
        Ok(p)
    }

    pub fn with_lambda(&self, lambda_reg: f64) -> Result<Self> {
        let mut p = self.clone();
        p.lambda_reg = lambda_reg;
        p.validate()?;
        Ok(p)
    }
}

/// A concrete price sequence together with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub params: ProblemParams,
    pub prices: Vec<f64>,
}

impl Instance {
    pub fn new(params: ProblemParams, prices: Vec<f64>) -> Result<Self> {
        let inst = Instance { params, prices };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.prices.len() != self.params.horizon {
            return Err(Error::Dimension {
                what: "prices",
                expected: self.params.horizon,
                got: self.prices.len(),
            });
        }
        for (t, &p) in self.prices.iter().enumerate() {
            if !(p >= self.params.p_min && p <= self.params.p_max) {
                return Err(Error::InvalidParams(format!(
                    "price p_{} = {} outside [{}, {}]",
                    t + 1,
                    p,
                    self.params.p_min,
                    self.params.p_max
                )));
            }
        }
        Ok(())
    }

    pub fn horizon(&self) -> usize {
        self.params.horizon
    }
}

/// Point forecast with a per-step uncertainty box and coverage `δ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UqForecast {
    pub point: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub coverage_delta: f64,
}

impl UqForecast {
    pub fn new(point: Vec<f64>, lower: Vec<f64>, upper: Vec<f64>, coverage_delta: f64) -> Result<Self> {
        let f = UqForecast {
            point,
            lower,
            upper,
            coverage_delta,
        };
        f.validate()?;
        Ok(f)
    }

    /// A forecast whose boxes collapse onto the point forecast.
    pub fn exact(point: Vec<f64>) -> Self {
        UqForecast {
            lower: point.clone(),
            upper: point.clone(),
            point,
            coverage_delta: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.point.len()
    }

    pub fn is_empty(&self) -> bool {
        self.point.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.point.len();
        for (what, len) in [("forecast lower", self.lower.len()), ("forecast upper", self.upper.len())] {
            if len != n {
                return Err(Error::Dimension {
                    what,
                    expected: n,
                    got: len,
                });
            }
        }
        if !(0.0..=1.0).contains(&self.coverage_delta) {
            return Err(Error::InvalidForecast(format!(
                "coverage delta {} not in [0, 1]",
                self.coverage_delta
            )));
        }
        for t in 0..n {
            let (l, p, u) = (self.lower[t], self.point[t], self.upper[t]);
            if !(l.is_finite() && p.is_finite() && u.is_finite()) {
                return Err(Error::InvalidForecast(format!("non-finite value at step {}", t + 1)));
            }
            if !(l <= p && p <= u) {
                return Err(Error::InvalidForecast(format!(
                    "step {}: expected lower <= point <= upper, got {l} / {p} / {u}",
                    t + 1
                )));
            }
        }
        Ok(())
    }

    /// Clips every series into `[p_min, p_max]`; ordering is preserved.
    pub fn clamp_to_band(&self, p_min: f64, p_max: f64) -> Self {
        let clip = |v: &Vec<f64>| v.iter().map(|x| x.clamp(p_min, p_max)).collect::<Vec<_>>();
        UqForecast {
            point: clip(&self.point),
            lower: clip(&self.lower),
            upper: clip(&self.upper),
            coverage_delta: self.coverage_delta,
        }
    }

    /// Whether `prices` lies inside the box set.
    pub fn covers(&self, prices: &[f64]) -> bool {
        prices.len() == self.len()
            && prices
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(p, (l, u))| *l <= *p && *p <= *u)
    }

    pub fn check_against(&self, params: &ProblemParams) -> Result<()> {
        self.validate()?;
        if self.len() != params.horizon {
            return Err(Error::Dimension {
                what: "forecast",
                expected: params.horizon,
                got: self.len(),
            });
        }
        let tol = 1e-9 * params.p_max;
        if self
            .lower
            .iter()
            .chain(&self.upper)
            .any(|&v| v < params.p_min - tol || v > params.p_max + tol)
        {
            return Err(Error::InvalidForecast(format!(
                "forecast leaves the price band [{}, {}]",
                params.p_min, params.p_max
            )));
        }
        Ok(())
    }
}

/// Decisions `x_t` and running utilization `w_t = Σ_{τ≤t} x_τ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub decisions: Vec<f64>,
    pub utilization: Vec<f64>,
}

impl Schedule {
    pub fn from_decisions(decisions: Vec<f64>) -> Self {
        let utilization = decisions
            .iter()
            .scan(0.0, |w, &x| {
                *w += x;
                Some(*w)
            })
            .collect();
        Schedule {
            decisions,
            utilization,
        }
    }

    pub fn len(&self) -> usize {
        self.decisions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decisions.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.decisions.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub signal_cost: f64,
    pub switching_cost: f64,
    pub regularizer_cost: f64,
    pub total: f64,
}

/// One violated constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Violation {
    /// `x_t` outside `[0, 1]` (1-based `step`).
    Range { step: usize, value: f64 },
    /// `x_t > d_t`.
    RateLimit { step: usize, value: f64, limit: f64 },
    /// `Σ x_t ≠ 1`.
    Budget { sum: f64 },
    Length { expected: usize, got: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Range { step, value } => write!(f, "x_{step} = {value} outside [0, 1]"),
            Violation::RateLimit { step, value, limit } => {
                write!(f, "x_{step} = {value} exceeds rate limit {limit}")
            }
            Violation::Budget { sum } => write!(f, "decisions sum to {sum}, expected 1"),
            Violation::Length { expected, got } => {
                write!(f, "schedule has {got} steps, expected {expected}")
            }
        }
    }
}

/// Every constraint a decision vector violates; empty iff feasible.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub violations: Vec<Violation>,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        match self.violations.into_iter().next() {
            None => Ok(()),
            Some(v) => Err(Error::Infeasible(v)),
        }
    }
}

pub fn check_feasible(params: &ProblemParams, decisions: &[f64]) -> FeasibilityReport {
    let mut violations = Vec::new();
    if decisions.len() != params.horizon {
        violations.push(Violation::Length {
            expected: params.horizon,
            got: decisions.len(),
        });
        return FeasibilityReport { violations };
    }
    for (t, (&x, &d)) in decisions.iter().zip(&params.rate_limits).enumerate() {
        let step = t + 1;
        if !(-FEASIBILITY_TOL..=1.0 + FEASIBILITY_TOL).contains(&x) {
            violations.push(Violation::Range { step, value: x });
        } else if x > d + FEASIBILITY_TOL {
            violations.push(Violation::RateLimit {
                step,
                value: x,
                limit: d,
            });
        }
    }
    let sum: f64 = decisions.iter().sum();
    if !((sum - 1.0).abs() <= FEASIBILITY_TOL) {
        violations.push(Violation::Budget { sum });
    }
    FeasibilityReport { violations }
}

/// Cost terms of `decisions` under `prices`, without feasibility checks.
pub fn objective(prices: &[f64], decisions: &[f64], beta: f64, lambda_reg: f64) -> CostBreakdown {
    let signal_cost: f64 = prices.iter().zip(decisions).map(|(p, x)| p * x).sum();
    let mut switching = 0.0;
    let mut prev = 0.0;
    for &x in decisions {
        switching += (x - prev).abs();
        prev = x;
    }
    switching += prev.abs();
    let switching_cost = beta * switching;
    let regularizer_cost = lambda_reg * decisions.iter().map(|x| x * x).sum::<f64>();
    CostBreakdown {
        signal_cost,
        switching_cost,
        regularizer_cost,
        total: signal_cost + switching_cost + regularizer_cost,
    }
}

pub fn evaluate_cost(instance: &Instance, schedule: &Schedule) -> Result<CostBreakdown> {
    if schedule.len() != instance.horizon() {
        return Err(Error::Dimension {
            what: "schedule",
            expected: instance.horizon(),
            got: schedule.len(),
        });
    }
    check_feasible(&instance.params, &schedule.decisions).into_result()?;
    Ok(objective(
        &instance.prices,
        &schedule.decisions,
        instance.params.beta,
        instance.params.lambda_reg,
    ))
}

/// Smallest decision at 1-based step `t` that still lets the workload
/// finish, given utilization `w_prev` before the step:
/// `max(0, (1 − w_prev) − Σ_{τ=t+1}^{T} d_τ)`.
pub fn compulsory_floor(params: &ProblemParams, t: usize, w_prev: f64) -> Result<f64> {
    if t == 0 || t > params.horizon {
        return Err(Error::OutOfRange {
            what: "step",
            value: t as f64,
            lo: 1.0,
            hi: params.horizon as f64,
        });
    }
    Ok(((1.0 - w_prev) - params.tail_capacity(t)).max(0.0))
}
