//! Online drivers and the competitive bounds of the advice algorithms.
//!
//! Every algorithm is a [`Policy`] run by [`run_online`]. The driver hands
//! the policy one [`StepView`] per step, holding only the current price,
//! and clamps the proposal to `[L_t, min(d_t, 1 − w_{t−1})]` where `L_t` is
//! the compulsory floor. Policies never see later prices.

use serde::{Deserialize, Serialize};

use crate::dus::{check_score, dus_solve, gamma_from_dus, DusConfig, DusResult};
use crate::error::{Error, Result};
use crate::offline::opt_deterministic_tiebreak;
use crate::problem::{compulsory_floor, evaluate_cost, CostBreakdown, Instance, ProblemParams, Schedule, UqForecast};
use crate::robust::{pseudo_cost_step, ThresholdSpec};

/// What a policy may observe at step `t` (1-based).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepView {
    pub t: usize,
    pub price: f64,
    pub x_prev: f64,
    pub w_prev: f64,
    /// `min(d_t, 1 − w_prev)`.
    pub cap: f64,
    pub floor: f64,
}

pub trait Policy {
    fn propose(&mut self, view: &StepView) -> Result<f64>;
}

impl<F: FnMut(&StepView) -> Result<f64>> Policy for F {
    fn propose(&mut self, view: &StepView) -> Result<f64> {
        self(view)
    }
}

/// A step where the driver moved the proposal onto the floor or the cap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClampEvent {
    pub step: usize,
    pub proposal: f64,
    pub applied: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub algorithm_name: String,
    pub schedule: Schedule,
    pub cost: CostBreakdown,
    /// Utilization reached by the policy's own proposals: at the first step
    /// where the floor raised a proposal, `w_{t−1}` plus that proposal
    /// (1 when the floor never bound).
    pub final_utilization_pre_compulsory: f64,
    pub gamma_used: Option<f64>,
    pub dus_used: Option<f64>,
    pub empirical_cr: Option<f64>,
    pub clamp_events: Vec<ClampEvent>,
}

pub fn run_online(instance: &Instance, name: &str, policy: &mut dyn Policy) -> Result<RunRecord> {
    instance.validate()?;
    let params = &instance.params;
    let mut decisions = Vec::with_capacity(params.horizon);
    let mut clamp_events = Vec::new();
    let (mut x_prev, mut w_prev) = (0.0, 0.0);
    let mut w_j = None;
    for (i, &price) in instance.prices.iter().enumerate() {
        let t = i + 1;
        let cap = params.rate_limits[i].min(1.0 - w_prev).max(0.0);
        let floor = compulsory_floor(params, t, w_prev)?.min(cap);
        let view = StepView {
            t,
            price,
            x_prev,
            w_prev,
            cap,
            floor,
        };
        let proposal = policy.propose(&view)?;
        if proposal.is_nan() || proposal < 0.0 {
            return Err(Error::Policy {
                step: t,
                reason: format!("proposal {proposal} is not a non-negative number"),
            });
        }
        let x = proposal.clamp(floor, cap);
        if x != proposal {
            clamp_events.push(ClampEvent {
                step: t,
                proposal,
                applied: x,
            });
            if x > proposal && w_j.is_none() {
                w_j = Some((w_prev + proposal).min(1.0));
            }
        }
        decisions.push(x);
        x_prev = x;
        w_prev = (w_prev + x).min(1.0);
    }
    let schedule = Schedule::from_decisions(decisions);
    let cost = evaluate_cost(instance, &schedule)?;
    Ok(RunRecord {
        algorithm_name: name.to_string(),
        schedule,
        cost,
        final_utilization_pre_compulsory: w_j.unwrap_or(1.0),
        gamma_used: None,
        dus_used: None,
        empirical_cr: None,
        clamp_events,
    })
}

pub const RORO: &str = "roro";
pub const UQ_ADVICE: &str = "uq-advice";
pub const RO_ADVICE: &str = "ro-advice";
pub const THRESHOLD: &str = "threshold";

/// The robust pseudo-cost algorithm.
pub fn roro_run(instance: &Instance) -> Result<RunRecord> {
    let spec = ThresholdSpec::new(&instance.params)?;
    let mut policy = |v: &StepView| pseudo_cost_step(&spec, v.price, v.x_prev, v.w_prev, v.cap);
    run_online(instance, RORO, &mut policy)
}

/// Mixes fixed advice `x̂` with the robust step computed from the shared
/// combined state: `x_t = γ·x̂_t + (1 − γ)·x̃_t`.
fn mixed_run(instance: &Instance, name: &str, advice: &[f64], gamma: f64) -> Result<RunRecord> {
    let spec = ThresholdSpec::new(&instance.params)?;
    let mut policy = |v: &StepView| {
        let robust = pseudo_cost_step(&spec, v.price, v.x_prev, v.w_prev, v.cap)?;
        Ok(gamma * advice[v.t - 1] + (1.0 - gamma) * robust)
    };
    let mut record = run_online(instance, name, &mut policy)?;
    record.gamma_used = Some(gamma);
    Ok(record)
}

/// The uncertainty-quantified advice algorithm. The forecast is clipped to
/// the price band; its DUS sets the mixing weight.
pub fn uq_advice_run(instance: &Instance, forecast: &UqForecast, dus_config: &DusConfig) -> Result<RunRecord> {
    let params = &instance.params;
    let forecast = forecast.clamp_to_band(params.p_min, params.p_max);
    forecast.check_against(params)?;
    let dus = dus_solve(params, &forecast, dus_config)?;
    uq_advice_run_with_dus(instance, &forecast, &dus, dus_config.score_inflation)
}

/// As [`uq_advice_run`] with a DUS computed beforehand.
pub fn uq_advice_run_with_dus(
    instance: &Instance,
    forecast: &UqForecast,
    dus: &DusResult,
    score_inflation: f64,
) -> Result<RunRecord> {
    let params = &instance.params;
    let forecast = forecast.clamp_to_band(params.p_min, params.p_max);
    forecast.check_against(params)?;
    let score = dus.inflated(score_inflation);
    let gamma = gamma_from_dus(score)?;
    let advice = opt_deterministic_tiebreak(params, &forecast.point)?.schedule.decisions;
    let mut record = mixed_run(instance, UQ_ADVICE, &advice, gamma)?;
    record.dus_used = Some(dus.score);
    Ok(record)
}

/// Advice with a fixed trust weight `ρ`.
pub fn ro_advice_run(instance: &Instance, advice_prices: &[f64], trust: f64) -> Result<RunRecord> {
    if !(0.0..=1.0).contains(&trust) {
        return Err(Error::OutOfRange {
            what: "trust",
            value: trust,
            lo: 0.0,
            hi: 1.0,
        });
    }
    let params = &instance.params;
    let clipped: Vec<f64> = advice_prices.iter().map(|p| p.clamp(params.p_min, params.p_max)).collect();
    let advice = opt_deterministic_tiebreak(params, &clipped)?.schedule.decisions;
    mixed_run(instance, RO_ADVICE, &advice, trust)
}

/// Buys as much as allowed whenever the price is below `√(p_min·p_max)`.
pub fn threshold_run(instance: &Instance) -> Result<RunRecord> {
    let threshold = (instance.params.p_min * instance.params.p_max).sqrt();
    let mut policy = |v: &StepView| Ok(if v.price < threshold { v.cap } else { 0.0 });
    run_online(instance, THRESHOLD, &mut policy)
}

/// Consistency `η = 1 + (α − 1)·DUS/2`.
pub fn consistency_bound(alpha: f64, dus: f64) -> Result<f64> {
    check_score(dus)?;
    Ok(1.0 + (alpha - 1.0) * dus / 2.0)
}

fn regularized_floor(params: &ProblemParams) -> f64 {
    params.p_min + params.lambda_reg / params.horizon as f64
}

/// Robustness `ζ = (1 − DUS/2)·(p_max + 2β + λ)/(p_min + λ/T) + (DUS/2)·α`.
pub fn robustness_bound(params: &ProblemParams, alpha: f64, dus: f64) -> Result<f64> {
    check_score(dus)?;
    let h = dus / 2.0;
    let worst = params.p_max + 2.0 * params.beta + params.lambda_reg;
    Ok((1.0 - h) * worst / regularized_floor(params) + h * alpha)
}

/// UQ-robustness
/// `θ = 1 + (DUS/2)·(α − 1 + (1 − DUS/2)·(p_max − p_min + 4β + 2λ)/(p_min + λ/T))`.
pub fn uq_robustness_bound(params: &ProblemParams, alpha: f64, dus: f64) -> Result<f64> {
    check_score(dus)?;
    let h = dus / 2.0;
    Ok(1.0 + h * (alpha - 1.0 + (1.0 - h) * advice_gap_width(params) / regularized_floor(params)))
}

/// `p_max − p_min + 4β + 2λ`, the advice cost gap per unit of DUS/2.
pub fn advice_gap_width(params: &ProblemParams) -> f64 {
    params.p_max - params.p_min + 4.0 * params.beta + 2.0 * params.lambda_reg
}

/// The looser of `bound(dus)` and `bound(dus + slack)`, with the shifted
/// score capped at 2. Used where `dus` is only a lower bound.
pub fn guarded_bound(dus: f64, slack: f64, bound: impl Fn(f64) -> Result<f64>) -> Result<f64> {
    let a = bound(dus)?;
    let b = bound((dus + slack).min(2.0))?;
    Ok(a.max(b))
}
