//! Closed-form machinery behind the ramp-on/ramp-off (RORO) algorithm.
//!
//! The threshold function
//!
//! ```text
//! φ(w) = p_max − β + C·exp(w/α),   C = p_max/α − p_max + 2β
//! ```
//!
//! decreases from `p_max/α + β` at `w = 0` to `p_min + β` at `w = 1`, where
//! `α` is the optimal competitive ratio
//!
//! ```text
//! α = 1 / ( W0( ((2β + p_min)/p_max − 1)·exp(2β/p_max − 1) ) − 2β/p_max + 1 )
//! ```
//!
//! and `W0` is the principal branch of the Lambert W function. The
//! single-step pseudo-cost problem solved by RORO is one-dimensional and
//! convex; [`pseudo_cost_step`] solves it exactly by enumerating the points
//! where its subgradient can vanish.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::ProblemParams;

const INV_E: f64 = 0.367_879_441_171_442_33;
const LAMBERT_DOMAIN_TOL: f64 = 1e-12;

/// Principal branch `W0` of the Lambert W function on `[−1/e, ∞)`.
///
/// Halley iteration seeded by the branch-point series
/// `−1 + p − p²/3 + 11p³/72` with `p = √(2(e·x + 1))` close to `−1/e`, by
/// `ln(1 + x)` on moderate arguments and by `ln x − ln ln x` for large ones.
pub fn lambert_w0(x: f64) -> Result<f64> {
    if x.is_nan() || x < -INV_E - LAMBERT_DOMAIN_TOL {
        return Err(Error::LambertDomain(x));
    }
    if x <= -INV_E {
        return Ok(-1.0);
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(f64::INFINITY);
    }

    let mut w = if x < -0.25 {
        let p = (2.0 * (std::f64::consts::E * x + 1.0)).max(0.0).sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else if x < 3.0 {
        x.ln_1p()
    } else {
        let l = x.ln();
        l - l.ln()
    };

    for _ in 0..64 {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        if wp1 <= f64::EPSILON {
            break;
        }
        let step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1));
        let next = (w - step).max(-1.0);
        let done = (next - w).abs() <= 4.0 * f64::EPSILON * (1.0 + next.abs());
        w = next;
        if done {
            break;
        }
    }
    Ok(w.max(-1.0))
}

/// Optimal competitive ratio of the unregularized problem.
pub fn alpha_roro(params: &ProblemParams) -> Result<f64> {
    let two_beta = 2.0 * params.beta / params.p_max;
    let arg = ((2.0 * params.beta + params.p_min) / params.p_max - 1.0) * (two_beta - 1.0).exp();
    let w = lambert_w0(arg)?;
    let alpha = 1.0 / (w - two_beta + 1.0);
    debug_assert!(alpha >= 1.0 - 1e-12, "alpha {alpha} < 1");
    Ok(alpha.max(1.0))
}

/// Competitive ratio of RORO with the quadratic regularizer:
/// `T(α_RORO·p_min + λ) / (T·p_min + λ)`.
pub fn alpha_sasp(params: &ProblemParams) -> Result<f64> {
    let a = alpha_roro(params)?;
    let t = params.horizon as f64;
    Ok(t * (a * params.p_min + params.lambda_reg) / (t * params.p_min + params.lambda_reg))
}

/// Threshold function parameters derived once per problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSpec {
    pub params: ProblemParams,
    pub alpha_roro: f64,
    pub coefficient_c: f64,
}

impl ThresholdSpec {
    pub fn new(params: &ProblemParams) -> Result<Self> {
        let alpha = alpha_roro(params)?;
        let c = params.p_max / alpha - params.p_max + 2.0 * params.beta;
        Ok(ThresholdSpec {
            params: params.clone(),
            alpha_roro: alpha,
            coefficient_c: c,
        })
    }

    /// `φ(0)`, the largest threshold value.
    pub fn phi_max(&self) -> f64 {
        self.params.p_max - self.params.beta + self.coefficient_c
    }

    /// `φ(1)`, the smallest threshold value.
    pub fn phi_min(&self) -> f64 {
        self.params.p_max - self.params.beta + self.coefficient_c * (1.0 / self.alpha_roro).exp()
    }

    fn eval(&self, w: f64) -> f64 {
        self.params.p_max - self.params.beta + self.coefficient_c * (w / self.alpha_roro).exp()
    }

    fn integral(&self, a: f64, b: f64) -> f64 {
        let al = self.alpha_roro;
        (self.params.p_max - self.params.beta) * (b - a)
            + self.coefficient_c * al * ((b / al).exp() - (a / al).exp())
    }
}

fn check_unit(what: &'static str, w: f64) -> Result<f64> {
    const TOL: f64 = 1e-12;
    if !(-TOL..=1.0 + TOL).contains(&w) {
        return Err(Error::OutOfRange {
            what,
            value: w,
            lo: 0.0,
            hi: 1.0,
        });
    }
    Ok(w.clamp(0.0, 1.0))
}

pub fn phi(spec: &ThresholdSpec, w: f64) -> Result<f64> {
    Ok(spec.eval(check_unit("utilization", w)?))
}

/// Inverse of [`phi`] on its range `[p_min + β, p_max/α + β]`.
pub fn phi_inverse(spec: &ThresholdSpec, y: f64) -> Result<f64> {
    let (lo, hi) = (spec.phi_min(), spec.phi_max());
    let tol = 1e-12 * hi.abs().max(1.0);
    if !(y >= lo - tol && y <= hi + tol) {
        return Err(Error::OutOfRange {
            what: "threshold value",
            value: y,
            lo,
            hi,
        });
    }
    if spec.coefficient_c == 0.0 {
        // φ is constant; its whole domain maps to the single value.
        return Ok(0.0);
    }
    let ratio = (y - spec.params.p_max + spec.params.beta) / spec.coefficient_c;
    Ok((spec.alpha_roro * ratio.ln()).clamp(0.0, 1.0))
}

/// `∫_a^b φ(u) du` in closed form.
pub fn phi_integral(spec: &ThresholdSpec, a: f64, b: f64) -> Result<f64> {
    let a = check_unit("integral lower limit", a)?;
    let b = check_unit("integral upper limit", b)?;
    if a > b {
        return Err(Error::OutOfRange {
            what: "integral lower limit",
            value: a,
            lo: 0.0,
            hi: b,
        });
    }
    Ok(spec.integral(a, b))
}

/// Objective of the single-step pseudo-cost problem at decision `x`:
/// `p·x + β|x − x_prev| − ∫_{w_prev}^{w_prev + x} φ(u) du`.
pub fn pseudo_cost_objective(spec: &ThresholdSpec, price: f64, x_prev: f64, w_prev: f64, x: f64) -> f64 {
    let upper = (w_prev + x).min(1.0);
    price * x + spec.params.beta * (x - x_prev).abs() - spec.integral(w_prev, upper)
}

/// Exact minimizer of [`pseudo_cost_objective`] over `x ∈ [0, cap]`.
///
/// The objective is convex (φ is decreasing), so its minimum sits at a
/// box end, at the kink `x = x_prev`, or where `φ(w_prev + x) = p ± β`.
/// Ties go to the smallest `x`.
pub fn pseudo_cost_step(spec: &ThresholdSpec, price: f64, x_prev: f64, w_prev: f64, cap: f64) -> Result<f64> {
    let x_prev = check_unit("previous decision", x_prev)?;
    let w_prev = check_unit("utilization", w_prev)?;
    if !(cap >= -1e-12 && cap <= 1.0 - w_prev + 1e-12) {
        return Err(Error::OutOfRange {
            what: "step cap",
            value: cap,
            lo: 0.0,
            hi: 1.0 - w_prev,
        });
    }
    if !price.is_finite() {
        return Err(Error::OutOfRange {
            what: "price",
            value: price,
            lo: spec.params.p_min,
            hi: spec.params.p_max,
        });
    }
    let cap = cap.clamp(0.0, (1.0 - w_prev).max(0.0));
    if cap == 0.0 {
        return Ok(0.0);
    }

    let mut candidates = [f64::NAN; 5];
    candidates[0] = 0.0;
    candidates[1] = cap;
    candidates[2] = x_prev.min(cap);
    if spec.coefficient_c != 0.0 {
        let beta = spec.params.beta;
        for (slot, target) in [(3, price + beta), (4, price - beta)] {
            if let Ok(u) = phi_inverse(spec, target) {
                let x = u - w_prev;
                if (0.0..=cap).contains(&x) {
                    candidates[slot] = x;
                }
            }
        }
    }
    let mut sorted: Vec<f64> = candidates.iter().copied().filter(|x| !x.is_nan()).collect();
    sorted.sort_by(f64::total_cmp);

    let tol = 1e-12 * (price.abs() + spec.params.beta + spec.params.p_max);
    let mut best_x = sorted[0];
    let mut best = pseudo_cost_objective(spec, price, x_prev, w_prev, best_x);
    for &x in &sorted[1..] {
        let v = pseudo_cost_objective(spec, price, x_prev, w_prev, x);
        if v < best - tol {
            best = v;
            best_x = x;
        }
    }
    Ok(best_x)
}
