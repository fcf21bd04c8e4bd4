//! Decision uncertainty score of a prediction interval.
//!
//! `DUS(𝒰, p̂) = max_{z ∈ 𝒰} ‖OPT(p̂) − OPT(z)‖₁` over the box set `𝒰`.
//! The maximum is searched by a budgeted multi-start heuristic: box
//! corners `ℓ` and `u`, random vertices and Latin-hypercube samples are
//! scored, and the best starts are refined by cyclic golden-section search
//! along each coordinate. The result is a lower bound on the true score,
//! so [`DusResult::is_certified`] is always false. A certified answer would
//! need a Lipschitz global optimizer whose iteration count grows like
//! `(√T·diam(𝒰)/(2λε))^T` and which is undefined at `λ = 0`; `epsilon` is
//! kept in the config as documentation of that target gap only.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{par_map, Execution};
use crate::offline::opt_deterministic_tiebreak;
use crate::problem::{ProblemParams, UqForecast};

const GOLDEN: f64 = 0.618_033_988_749_894_8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DusConfig {
    /// Offline solves available to the search (extra pool candidates excluded).
    pub eval_budget: usize,
    pub n_starts: usize,
    /// Golden-section iterations per coordinate and sweep.
    pub refine_iters: usize,
    pub sweeps: usize,
    pub seed: u64,
    pub epsilon: f64,
    /// Multiplier on the score before it is turned into a mixing weight.
    pub score_inflation: f64,
    pub execution: Execution,
}

impl Default for DusConfig {
    fn default() -> Self {
        DusConfig {
            eval_budget: 500,
            n_starts: 16,
            refine_iters: 8,
            sweeps: 2,
            seed: 0,
            epsilon: 1e-3,
            score_inflation: 1.0,
            execution: Execution::Sequential,
        }
    }
}

impl DusConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_starts == 0 || self.eval_budget < self.n_starts {
            return Err(Error::Config(format!(
                "DUS budget {} must cover at least one and all {} starts",
                self.eval_budget, self.n_starts
            )));
        }
        if !(self.score_inflation >= 1.0 && self.score_inflation.is_finite()) {
            return Err(Error::Config(format!(
                "score inflation must be >= 1, got {}",
                self.score_inflation
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DusResult {
    pub score: f64,
    pub worst_scenario: Vec<f64>,
    pub evals_used: usize,
    pub is_certified: bool,
}

impl DusResult {
    /// Score scaled by `inflation`, capped at 2.
    pub fn inflated(&self, inflation: f64) -> f64 {
        (self.score * inflation).min(2.0)
    }
}

/// `γ = 1 − DUS/2`.
pub fn gamma_from_dus(score: f64) -> Result<f64> {
    check_score(score)?;
    Ok(1.0 - score / 2.0)
}

pub(crate) fn check_score(score: f64) -> Result<()> {
    if !(0.0..=2.0).contains(&score) {
        return Err(Error::OutOfRange {
            what: "DUS",
            value: score,
            lo: 0.0,
            hi: 2.0,
        });
    }
    Ok(())
}

/// `‖x̂ − OPT(z)‖₁` with the tie-broken optimum.
pub fn dus_objective(params: &ProblemParams, x_hat: &[f64], z: &[f64]) -> Result<f64> {
    let x = opt_deterministic_tiebreak(params, z)?.schedule.decisions;
    Ok(l1(x_hat, &x))
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).abs()).sum::<f64>().min(2.0)
}

struct Evaluator<'a> {
    params: &'a ProblemParams,
    x_hat: &'a [f64],
    evals: usize,
}

impl Evaluator<'_> {
    fn eval(&mut self, z: &[f64]) -> Result<f64> {
        self.evals += 1;
        dus_objective(self.params, self.x_hat, z)
    }
}

#[derive(Clone)]
struct Candidate {
    z: Vec<f64>,
    score: f64,
}

fn prepare(params: &ProblemParams, forecast: &UqForecast) -> Result<(UqForecast, Vec<f64>)> {
    params.validate()?;
    forecast.check_against(params)?;
    let f = forecast.clamp_to_band(params.p_min, params.p_max);
    let x_hat = opt_deterministic_tiebreak(params, &f.point)?.schedule.decisions;
    Ok((f, x_hat))
}

fn clip_into(f: &UqForecast, z: &[f64]) -> Vec<f64> {
    z.iter()
        .zip(f.lower.iter().zip(&f.upper))
        .map(|(v, (l, u))| v.clamp(*l, *u))
        .collect()
}

fn starts(f: &UqForecast, n_starts: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let t = f.len();
    let mut out = vec![f.lower.clone(), f.upper.clone()];
    let rest = n_starts.saturating_sub(2);
    let n_vertices = rest / 2;
    let n_lhs = rest - n_vertices;
    for _ in 0..n_vertices {
        out.push(
            (0..t)
                .map(|i| if rng.gen_bool(0.5) { f.upper[i] } else { f.lower[i] })
                .collect(),
        );
    }
    if n_lhs > 0 {
        let columns: Vec<Vec<usize>> = (0..t)
            .map(|_| {
                let mut strata: Vec<usize> = (0..n_lhs).collect();
                strata.shuffle(rng);
                strata
            })
            .collect();
        #[allow(clippy::needless_range_loop)]
        for k in 0..n_lhs {
            out.push(
                (0..t)
                    .map(|i| {
                        let u = (columns[i][k] as f64 + rng.gen::<f64>()) / n_lhs as f64;
                        f.lower[i] + u * (f.upper[i] - f.lower[i])
                    })
                    .collect(),
            );
        }
    }
    out.truncate(n_starts.max(1));
    out
}

/// Cyclic coordinate ascent from `start`, spending at most `budget` solves.
fn refine(
    ev: &mut Evaluator<'_>,
    f: &UqForecast,
    start: Candidate,
    budget: usize,
    config: &DusConfig,
) -> Result<Candidate> {
    let limit = ev.evals + budget;
    let mut best = start;
    'outer: for _ in 0..config.sweeps {
        for i in 0..f.len() {
            let (lo, hi) = (f.lower[i], f.upper[i]);
            if hi <= lo {
                continue;
            }
            let mut probe = best.z.clone();
            let mut local = best.clone();
            let mut try_at = |ev: &mut Evaluator<'_>, v: f64, local: &mut Candidate| -> Result<f64> {
                probe[i] = v;
                let s = ev.eval(&probe)?;
                if s > local.score {
                    *local = Candidate { z: probe.clone(), score: s };
                }
                Ok(s)
            };
            for v in [lo, hi] {
                if ev.evals >= limit {
                    break;
                }
                try_at(ev, v, &mut local)?;
            }
            // Golden-section on the coordinate, keeping the best point seen.
            let (mut a, mut b) = (lo, hi);
            let mut c = b - GOLDEN * (b - a);
            let mut d = a + GOLDEN * (b - a);
            let mut fc = f64::NAN;
            let mut fd = f64::NAN;
            for _ in 0..config.refine_iters {
                if ev.evals >= limit {
                    break;
                }
                if fc.is_nan() {
                    fc = try_at(ev, c, &mut local)?;
                    continue;
                }
                if fd.is_nan() {
                    fd = try_at(ev, d, &mut local)?;
                    continue;
                }
                if fc >= fd {
                    b = d;
                    d = c;
                    fd = fc;
                    c = b - GOLDEN * (b - a);
                    fc = try_at(ev, c, &mut local)?;
                } else {
                    a = c;
                    c = d;
                    fc = fd;
                    d = a + GOLDEN * (b - a);
                    fd = try_at(ev, d, &mut local)?;
                }
            }
            best = local;
            if best.score >= 2.0 || ev.evals >= limit {
                break 'outer;
            }
        }
    }
    Ok(best)
}

/// Heuristic maximizer of the decision uncertainty score.
pub fn dus_solve(params: &ProblemParams, forecast: &UqForecast, config: &DusConfig) -> Result<DusResult> {
    dus_solve_with_pool(params, forecast, config, &[])
}

/// As [`dus_solve`], additionally scoring every scenario of `pool` (clipped
/// into the box). Pool evaluations do not draw on the budget.
pub fn dus_solve_with_pool(
    params: &ProblemParams,
    forecast: &UqForecast,
    config: &DusConfig,
    pool: &[Vec<f64>],
) -> Result<DusResult> {
    config.validate()?;
    let (f, x_hat) = prepare(params, forecast)?;
    let mut ev = Evaluator {
        params,
        x_hat: &x_hat,
        evals: 0,
    };

    let mut best = Candidate {
        z: f.point.clone(),
        score: 0.0,
    };
    let mut pool_evals = 0;
    for z in pool {
        if z.len() != f.len() {
            return Err(Error::Dimension {
                what: "DUS pool scenario",
                expected: f.len(),
                got: z.len(),
            });
        }
        let z = clip_into(&f, z);
        let s = ev.eval(&z)?;
        pool_evals += 1;
        if s > best.score {
            best = Candidate { z, score: s };
        }
    }

    let degenerate = f.lower.iter().zip(&f.upper).all(|(l, u)| l == u);
    if degenerate {
        let s = ev.eval(&f.lower)?;
        if s > best.score {
            best = Candidate { z: f.lower.clone(), score: s };
        }
        return Ok(finish(best, ev.evals));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut scored = Vec::with_capacity(config.n_starts);
    for z in starts(&f, config.n_starts, &mut rng) {
        let s = ev.eval(&z)?;
        scored.push(Candidate { z, score: s });
    }
    // Stable sort keeps the seed-determined order among ties.
    scored.sort_by(|a, b| b.score.total_cmp(&a.score));
    if scored[0].score > best.score {
        best = scored[0].clone();
    }
    if best.score >= 2.0 {
        return Ok(finish(best, ev.evals));
    }

    let spent = ev.evals - pool_evals;
    let remaining = config.eval_budget.saturating_sub(spent);
    let per_start = config.sweeps * f.len() * (config.refine_iters + 2);
    let k = (remaining / per_start.max(1)).clamp(1, scored.len());
    let share = remaining / k;
    let base_evals = ev.evals;
    let refined = par_map(config.execution, &scored[..k], |_, start| {
        let mut local = Evaluator {
            params,
            x_hat: &x_hat,
            evals: 0,
        };
        refine(&mut local, &f, start.clone(), share, config).map(|c| (c, local.evals))
    });
    let mut used = base_evals;
    for r in refined {
        let (c, n) = r?;
        used += n;
        if c.score > best.score {
            best = c;
        }
    }
    Ok(finish(best, used))
}

fn finish(best: Candidate, evals: usize) -> DusResult {
    DusResult {
        score: best.score.clamp(0.0, 2.0),
        worst_scenario: best.z,
        evals_used: evals,
        is_certified: false,
    }
}

/// Uniform box samples followed by the `2T` scenarios that move a single
/// coordinate of `p̂` to either end of its interval.
pub fn sample_pool(forecast: &UqForecast, n_samples: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = forecast.len();
    let mut pool: Vec<Vec<f64>> = (0..n_samples)
        .map(|_| {
            (0..t)
                .map(|i| {
                    let (l, u) = (forecast.lower[i], forecast.upper[i]);
                    if u > l {
                        rng.gen_range(l..=u)
                    } else {
                        l
                    }
                })
                .collect()
        })
        .collect();
    for i in 0..t {
        for end in [forecast.lower[i], forecast.upper[i]] {
            let mut z = forecast.point.clone();
            z[i] = end;
            pool.push(z);
        }
    }
    pool
}

/// Lower bound on the score from [`sample_pool`].
pub fn dus_sample_bound(params: &ProblemParams, forecast: &UqForecast, n_samples: usize, seed: u64) -> Result<f64> {
    if n_samples == 0 {
        return Err(Error::Config("n_samples must be at least 1".into()));
    }
    let (f, x_hat) = prepare(params, forecast)?;
    let mut best: f64 = 0.0;
    for z in sample_pool(&f, n_samples, seed) {
        best = best.max(dus_objective(params, &x_hat, &z)?);
    }
    Ok(best)
}
