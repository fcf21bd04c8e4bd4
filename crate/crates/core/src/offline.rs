//! Offline optimum of the workload-shifting program.
//!
//! The budget constraint `Σ x_t = 1` is dualized with a multiplier `μ`.
//! For a fixed `μ` the remaining problem
//!
//! ```text
//! min  Σ (z_t − μ) x_t + λ x_t²  +  β Σ_{t=1}^{T+1} |x_t − x_{t−1}|,   0 ≤ x_t ≤ d_t
//! ```
//!
//! is a chain and is solved exactly by dynamic programming over the
//! derivative of the cost-to-go, a nondecreasing piecewise-linear function.
//! Passing a message through a `β|·|` edge clamps that derivative to
//! `[−β, β]`. `Σ x_t(μ)` is nondecreasing in `μ`, so the multiplier is
//! bracketed by bisection and the two bracketing Lagrangian minimizers are
//! blended to meet the budget exactly. The blend is optimal up to
//! `(μ_hi − μ_lo)·Σ d_t`, which is reported as the residual.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{check_feasible, objective, CostBreakdown, Instance, ProblemParams, Schedule};

/// Objective tolerance relative to `p_max`.
pub const OPT_TOLERANCE: f64 = 1e-6;
/// Cap on multiplier bisection steps.
pub const MAX_ITERATIONS: usize = 100_000;
/// Regularizer weight (relative to `p_max`) used to break ties when `λ = 0`.
pub const TIEBREAK_LAMBDA: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub schedule: Schedule,
    pub cost: CostBreakdown,
    pub iterations: usize,
    /// Bound on the distance to optimality plus the budget residual.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy)]
struct Piece {
    x0: f64,
    x1: f64,
    v0: f64,
    v1: f64,
}

impl Piece {
    fn at(&self, x: f64) -> f64 {
        if self.x1 > self.x0 {
            self.v0 + (self.v1 - self.v0) * (x - self.x0) / (self.x1 - self.x0)
        } else {
            self.v0
        }
    }

    fn crossing(&self, c: f64) -> f64 {
        if self.v1 > self.v0 {
            (self.x0 + (c - self.v0) / (self.v1 - self.v0) * (self.x1 - self.x0)).clamp(self.x0, self.x1)
        } else {
            self.x0
        }
    }
}

fn push_merged(out: &mut Vec<Piece>, p: Piece) {
    if p.x1 <= p.x0 {
        return;
    }
    if let Some(last) = out.last_mut() {
        if last.v0 == last.v1 && p.v0 == p.v1 && last.v1 == p.v0 && last.x1 == p.x0 {
            last.x1 = p.x1;
            return;
        }
    }
    out.push(p);
}

/// `inf { x : F'(x) ≥ c }` over the pieces' domain, or its right end.
fn level(pieces: &[Piece], c: f64) -> f64 {
    for p in pieces {
        if p.v0 >= c {
            return p.x0;
        }
        if p.v1 >= c {
            return p.crossing(c);
        }
    }
    pieces.last().map_or(0.0, |p| p.x1)
}

/// Derivative of the message through a `β|·|` edge, restricted to `[0, new_hi]`.
fn clamp_extend(prev: &[Piece], prev_hi: f64, new_hi: f64, beta: f64, out: &mut Vec<Piece>) {
    out.clear();
    for p in prev {
        if p.x0 >= new_hi {
            break;
        }
        let mut p = *p;
        if p.x1 > new_hi {
            p.v1 = p.at(new_hi);
            p.x1 = new_hi;
        }
        if p.v1 <= -beta {
            push_merged(out, Piece { v0: -beta, v1: -beta, ..p });
        } else if p.v0 >= beta {
            push_merged(out, Piece { v0: beta, v1: beta, ..p });
        } else {
            let a = if p.v0 < -beta { p.crossing(-beta) } else { p.x0 };
            let b = if p.v1 > beta { p.crossing(beta) } else { p.x1 };
            push_merged(out, Piece { x0: p.x0, x1: a, v0: -beta, v1: -beta });
            let (va, vb) = (p.at(a).clamp(-beta, beta), p.at(b).clamp(-beta, beta));
            push_merged(out, Piece { x0: a, x1: b, v0: va, v1: vb });
            push_merged(out, Piece { x0: b, x1: p.x1, v0: beta, v1: beta });
        }
    }
    if new_hi > prev_hi {
        push_merged(out, Piece { x0: prev_hi, x1: new_hi, v0: beta, v1: beta });
    }
}

fn add_linear(pieces: &mut [Piece], a: f64, two_lambda: f64) {
    for p in pieces {
        p.v0 += a + two_lambda * p.x0;
        p.v1 += a + two_lambda * p.x1;
    }
}

/// Scratch buffers for the chain dynamic program.
#[derive(Default)]
struct ChainWorkspace {
    cur: Vec<Piece>,
    next: Vec<Piece>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

/// Exact minimizer of the Lagrangian for multiplier `mu`; returns `Σ x`.
fn lagrangian_argmin(
    prices: &[f64],
    caps: &[f64],
    beta: f64,
    lambda: f64,
    mu: f64,
    ws: &mut ChainWorkspace,
    out: &mut [f64],
) -> f64 {
    let n = prices.len();
    ws.lo.resize(n, 0.0);
    ws.hi.resize(n, 0.0);
    let two_lambda = 2.0 * lambda;

    ws.cur.clear();
    ws.cur.push(Piece { x0: 0.0, x1: caps[0], v0: beta, v1: beta });
    add_linear(&mut ws.cur, prices[0] - mu, two_lambda);
    for t in 1..n {
        ws.lo[t - 1] = level(&ws.cur, -beta);
        ws.hi[t - 1] = level(&ws.cur, beta);
        clamp_extend(&ws.cur, caps[t - 1], caps[t], beta, &mut ws.next);
        add_linear(&mut ws.next, prices[t] - mu, two_lambda);
        std::mem::swap(&mut ws.cur, &mut ws.next);
    }

    let mut x = level(&ws.cur, -beta);
    out[n - 1] = x;
    let mut sum = x;
    for t in (0..n - 1).rev() {
        x = x.clamp(ws.lo[t], ws.hi[t]);
        out[t] = x;
        sum += x;
    }
    sum
}

fn check_prices(params: &ProblemParams, prices: &[f64]) -> Result<()> {
    params.validate()?;
    if prices.len() != params.horizon {
        return Err(Error::Dimension {
            what: "prices",
            expected: params.horizon,
            got: prices.len(),
        });
    }
    if let Some(p) = prices.iter().find(|p| !p.is_finite()) {
        return Err(Error::InvalidParams(format!("non-finite price {p}")));
    }
    Ok(())
}

/// Solves with regularizer weight `lambda` (which may differ from the
/// params' own when breaking ties); costs are reported under `params`.
fn solve_with_lambda(params: &ProblemParams, prices: &[f64], lambda: f64) -> Result<SolveReport> {
    check_prices(params, prices)?;
    let n = params.horizon;
    let caps = &params.rate_limits;
    let beta = params.beta;
    let cap_total: f64 = caps.iter().sum();

    let (pmin, pmax) = prices
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &p| (a.min(p), b.max(p)));
    let mut mu_lo = pmin - 2.0 * beta - 1.0;
    let mut mu_hi = pmax + 2.0 * beta + 2.0 * lambda + 1.0;

    let mut ws = ChainWorkspace::default();
    let mut x_lo = vec![0.0; n];
    let mut x_hi = vec![0.0; n];
    let mut x_mid = vec![0.0; n];
    let mut s_lo = lagrangian_argmin(prices, caps, beta, lambda, mu_lo, &mut ws, &mut x_lo);
    let mut s_hi = lagrangian_argmin(prices, caps, beta, lambda, mu_hi, &mut ws, &mut x_hi);
    debug_assert!(s_lo <= 1.0 && s_hi >= 1.0 - 1e-12);

    let scale = params.p_max.max(pmax.abs()).max(1.0);
    let mut iterations = 0;
    let mut exact = None;
    while iterations < MAX_ITERATIONS {
        if mu_hi - mu_lo <= 1e-14 * scale {
            break;
        }
        let mu = 0.5 * (mu_lo + mu_hi);
        if mu <= mu_lo || mu >= mu_hi {
            break;
        }
        iterations += 1;
        let s = lagrangian_argmin(prices, caps, beta, lambda, mu, &mut ws, &mut x_mid);
        if (s - 1.0).abs() <= 1e-15 {
            exact = Some(mu);
            break;
        }
        if s < 1.0 {
            mu_lo = mu;
            s_lo = s;
            std::mem::swap(&mut x_lo, &mut x_mid);
        } else {
            mu_hi = mu;
            s_hi = s;
            std::mem::swap(&mut x_hi, &mut x_mid);
        }
    }

    let (decisions, gap) = match exact {
        Some(_) => (x_mid, 0.0),
        None => {
            let theta = if s_hi > s_lo { ((1.0 - s_lo) / (s_hi - s_lo)).clamp(0.0, 1.0) } else { 1.0 };
            let blended: Vec<f64> = x_lo
                .iter()
                .zip(&x_hi)
                .zip(caps)
                .map(|((a, b), d)| (a + theta * (b - a)).clamp(0.0, *d))
                .collect();
            (blended, (mu_hi - mu_lo) * cap_total)
        }
    };
    let budget = (decisions.iter().sum::<f64>() - 1.0).abs();
    let residual = gap.max(budget * scale);
    if residual > OPT_TOLERANCE * scale || !check_feasible(params, &decisions).is_feasible() {
        return Err(Error::NonConvergence {
            iterations,
            residual,
            best: decisions,
        });
    }
    let cost = objective(prices, &decisions, params.beta, params.lambda_reg);
    Ok(SolveReport {
        schedule: Schedule::from_decisions(decisions),
        cost,
        iterations,
        residual,
    })
}

/// Offline optimum for `prices` under `params`.
pub fn solve_opt(params: &ProblemParams, prices: &[f64]) -> Result<SolveReport> {
    solve_with_lambda(params, prices, params.lambda_reg)
}

pub fn solve_instance(instance: &Instance) -> Result<SolveReport> {
    solve_opt(&instance.params, &instance.prices)
}

/// Offline optimum with a unique answer: when `λ = 0`, a regularizer of
/// weight `1e−9·p_max` selects among tied optima. Reported costs use the
/// caller's `λ`.
pub fn opt_deterministic_tiebreak(params: &ProblemParams, prices: &[f64]) -> Result<SolveReport> {
    let lambda = if params.lambda_reg > 0.0 {
        params.lambda_reg
    } else {
        TIEBREAK_LAMBDA * params.p_max
    };
    solve_with_lambda(params, prices, lambda)
}

/// Largest horizon accepted by [`brute_force_opt`].
pub const BRUTE_FORCE_MAX_HORIZON: usize = 4;

/// Exhaustive minimum over all grid points `x_t = k_t·step` with `Σ x_t = 1`.
pub fn brute_force_opt(params: &ProblemParams, prices: &[f64], grid_step: f64) -> Result<SolveReport> {
    check_prices(params, prices)?;
    let n = params.horizon;
    if n > BRUTE_FORCE_MAX_HORIZON {
        return Err(Error::InvalidParams(format!(
            "brute force supports T <= {BRUTE_FORCE_MAX_HORIZON}, got {n}"
        )));
    }
    let units = (1.0 / grid_step).round();
    if !(grid_step > 0.0 && grid_step <= 1.0) || (units * grid_step - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParams(format!("grid step {grid_step} does not divide 1")));
    }
    let units = units as usize;
    let max_units: Vec<usize> = params
        .rate_limits
        .iter()
        .map(|d| ((d + 1e-12) / grid_step).floor() as usize)
        .collect();

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut counts = vec![0usize; n];
    let mut evaluated = 0usize;
    enumerate(&mut counts, 0, units, &max_units, &mut |k| {
        let x: Vec<f64> = k.iter().map(|&c| c as f64 / units as f64).collect();
        let v = objective(prices, &x, params.beta, params.lambda_reg).total;
        evaluated += 1;
        if best.as_ref().is_none_or(|(b, _)| v < *b) {
            best = Some((v, x));
        }
    });
    let (_, x) = best.ok_or_else(|| Error::InvalidParams("no grid point satisfies the rate limits".into()))?;
    let cost = objective(prices, &x, params.beta, params.lambda_reg);
    Ok(SolveReport {
        schedule: Schedule::from_decisions(x),
        cost,
        iterations: evaluated,
        residual: 0.0,
    })
}

fn enumerate(counts: &mut [usize], t: usize, remaining: usize, max_units: &[usize], f: &mut impl FnMut(&[usize])) {
    let n = counts.len();
    if t == n - 1 {
        if remaining <= max_units[t] {
            counts[t] = remaining;
            f(counts);
        }
        return;
    }
    for k in 0..=remaining.min(max_units[t]) {
        counts[t] = k;
        enumerate(counts, t + 1, remaining - k, max_units, f);
    }
}
