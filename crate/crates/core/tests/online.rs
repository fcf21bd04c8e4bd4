use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sasp_core::dus::{dus_solve, DusConfig};
use sasp_core::offline::{opt_deterministic_tiebreak, solve_opt};
use sasp_core::online::{ro_advice_run, roro_run, threshold_run, uq_advice_run};
use sasp_core::problem::check_feasible;
use sasp_core::robust::{phi, phi_inverse, pseudo_cost_objective, pseudo_cost_step, ThresholdSpec};
use sasp_core::{Instance, ProblemParams, UqForecast};

fn random_instance(rng: &mut ChaCha8Rng, t: usize) -> Instance {
    let p_min = rng.gen_range(20.0..150.0);
    let p_max = p_min + rng.gen_range(50.0..500.0);
    let beta = rng.gen_range(0.0..0.5 * (p_max - p_min));
    let lambda = if rng.gen_bool(0.5) { 0.0 } else { rng.gen_range(0.0..20.0) };
    let params = ProblemParams::new(p_min, p_max, beta, lambda, t).unwrap();
    let prices = (0..t).map(|_| rng.gen_range(p_min..=p_max)).collect();
    Instance::new(params, prices).unwrap()
}

fn boxes(rng: &mut ChaCha8Rng, inst: &Instance, width: f64) -> UqForecast {
    let p = &inst.params;
    let lower: Vec<f64> = inst.prices.iter().map(|v| (v - rng.gen::<f64>() * width).max(p.p_min)).collect();
    let upper: Vec<f64> = lower.iter().map(|l| (l + width).min(p.p_max)).collect();
    let point = lower.iter().zip(&upper).map(|(l, u)| rng.gen_range(*l..=*u)).collect();
    UqForecast::new(point, lower, upper, 0.1).unwrap()
}

type Runner<'a> = &'a dyn Fn(&Instance) -> Vec<f64>;

#[test]
fn decisions_ignore_future_prices() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..100 {
        let t = rng.gen_range(2..=12);
        let inst = random_instance(&mut rng, t);
        let f = boxes(&mut rng, &inst, 60.0);
        let cut = rng.gen_range(0..t);
        let mut mutated = inst.clone();
        for v in &mut mutated.prices[cut + 1..] {
            *v = rng.gen_range(inst.params.p_min..=inst.params.p_max);
        }
        let cfg = DusConfig::default();
        let runs: [Runner; 4] = [
            &|i| roro_run(i).unwrap().schedule.decisions,
            &|i| threshold_run(i).unwrap().schedule.decisions,
            &|i| ro_advice_run(i, &f.point, 0.5).unwrap().schedule.decisions,
            &|i| uq_advice_run(i, &f, &cfg).unwrap().schedule.decisions,
        ];
        for run in runs {
            assert_eq!(run(&inst)[..=cut], run(&mutated)[..=cut]);
        }
    }
}

#[test]
fn schedules_are_feasible() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for _ in 0..200 {
        let t = rng.gen_range(1..=24);
        let inst = random_instance(&mut rng, t);
        let f = boxes(&mut rng, &inst, 100.0);
        for r in [
            roro_run(&inst).unwrap(),
            threshold_run(&inst).unwrap(),
            ro_advice_run(&inst, &f.point, rng.gen()).unwrap(),
            uq_advice_run(&inst, &f, &DusConfig::default()).unwrap(),
        ] {
            assert!(check_feasible(&inst.params, &r.schedule.decisions).is_feasible(), "{}", r.algorithm_name);
        }
    }
}

#[test]
fn exact_advice_is_followed() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for _ in 0..50 {
        let t = rng.gen_range(1..=12);
        let inst = random_instance(&mut rng, t);
        let opt = solve_opt(&inst.params, &inst.prices).unwrap();
        let r = uq_advice_run(&inst, &UqForecast::exact(inst.prices.clone()), &DusConfig::default()).unwrap();
        assert_eq!(r.dus_used, Some(0.0));
        assert_eq!(r.gamma_used, Some(1.0));
        assert!((r.cost.total / opt.cost.total - 1.0).abs() <= 1e-6);
        let r = ro_advice_run(&inst, &inst.prices, 1.0).unwrap();
        assert!((r.cost.total / opt.cost.total - 1.0).abs() <= 1e-6);
    }
}

#[test]
fn zero_trust_and_full_uncertainty_reduce_to_roro() {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    let params = ProblemParams::new(100.0, 400.0, 0.0, 0.0, 2).unwrap();
    let inst = Instance::new(params, vec![380.0, 120.0]).unwrap();
    let f = UqForecast::new(vec![100.0, 400.0], vec![100.0; 2], vec![400.0; 2], 0.1).unwrap();
    let roro = roro_run(&inst).unwrap();
    let r = uq_advice_run(&inst, &f, &DusConfig::default()).unwrap();
    assert_eq!(r.gamma_used, Some(0.0));
    assert_eq!(r.schedule, roro.schedule);
    for _ in 0..30 {
        let t = rng.gen_range(1..=10);
        let inst = random_instance(&mut rng, t);
        let advice: Vec<f64> = (0..t).map(|_| rng.gen_range(inst.params.p_min..=inst.params.p_max)).collect();
        assert_eq!(ro_advice_run(&inst, &advice, 0.0).unwrap().schedule, roro_run(&inst).unwrap().schedule);
    }
}

/// Step-by-step replay of the mixing rule with the public building blocks.
fn simulate_mixing(inst: &Instance, advice: &[f64], gamma: f64) -> Vec<f64> {
    let spec = ThresholdSpec::new(&inst.params).unwrap();
    let t_max = inst.horizon();
    let (mut x_prev, mut w) = (0.0, 0.0);
    let mut out = vec![];
    for (t, &a) in advice.iter().enumerate().take(t_max) {
        let cap = inst.params.rate_limits[t].min(1.0 - w);
        let robust = pseudo_cost_step(&spec, inst.prices[t], x_prev, w, cap).unwrap();
        let remaining: f64 = inst.params.rate_limits[t + 1..].iter().sum();
        let floor = ((1.0 - w) - remaining).max(0.0);
        let x = (gamma * a + (1.0 - gamma) * robust).clamp(floor, cap);
        out.push(x);
        x_prev = x;
        w += x;
    }
    out
}

#[test]
fn two_step_advice_example() {
    let params = ProblemParams::new(100.0, 400.0, 0.0, 0.0, 2).unwrap();
    let inst = Instance::new(params.clone(), vec![320.0, 140.0]).unwrap();
    let f = UqForecast::new(vec![300.0, 150.0], vec![275.0, 125.0], vec![325.0, 175.0], 0.1).unwrap();
    let dus = dus_solve(&params, &f, &DusConfig::default()).unwrap();
    let r = uq_advice_run(&inst, &f, &DusConfig::default()).unwrap();
    let advice = opt_deterministic_tiebreak(&params, &f.point).unwrap().schedule.decisions;
    let gamma = 1.0 - dus.score / 2.0;
    assert_eq!(r.gamma_used, Some(gamma));
    let expected = simulate_mixing(&inst, &advice, gamma);
    for (a, b) in r.schedule.decisions.iter().zip(&expected) {
        assert!((a - b).abs() < 1e-12);
    }
    let opt = solve_opt(&params, &inst.prices).unwrap().cost.total;
    let roro = roro_run(&inst).unwrap().cost.total;
    assert!(opt - 1e-9 <= r.cost.total && r.cost.total <= roro + 1e-9);
}

#[test]
fn half_trust_mixes_before_clamping() {
    let mut rng = ChaCha8Rng::seed_from_u64(35);
    for _ in 0..50 {
        let t = rng.gen_range(2..=10);
        let inst = random_instance(&mut rng, t);
        let advice_prices: Vec<f64> = (0..t).map(|_| rng.gen_range(inst.params.p_min..=inst.params.p_max)).collect();
        let advice = opt_deterministic_tiebreak(&inst.params, &advice_prices).unwrap().schedule.decisions;
        let r = ro_advice_run(&inst, &advice_prices, 0.5).unwrap();
        let expected = simulate_mixing(&inst, &advice, 0.5);
        for (a, b) in r.schedule.decisions.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn roro_buys_at_the_cheapest_price() {
    let params = ProblemParams::new(100.0, 400.0, 20.0, 0.0, 12).unwrap();
    let spec = ThresholdSpec::new(&params).unwrap();
    let mut prices = vec![400.0; 12];
    prices[0] = 100.0;
    let r = roro_run(&Instance::new(params.clone(), prices).unwrap()).unwrap();
    let expected = phi_inverse(&spec, 120.0).unwrap();
    assert!(expected > 0.0);
    assert!((r.schedule.decisions[0] - expected).abs() < 1e-9);
    // Grid scan of the first-step objective.
    let best = (0..=10_000)
        .map(|k| k as f64 / 10_000.0)
        .min_by(|a, b| {
            pseudo_cost_objective(&spec, 100.0, 0.0, 0.0, *a).total_cmp(&pseudo_cost_objective(&spec, 100.0, 0.0, 0.0, *b))
        })
        .unwrap();
    assert!((best - expected).abs() <= 2e-4);
}

#[test]
fn optimum_bounded_below_by_threshold_at_roro_utilization() {
    let mut rng = ChaCha8Rng::seed_from_u64(36);
    for _ in 0..500 {
        let t = rng.gen_range(1..=16);
        let inst = random_instance(&mut rng, t);
        let spec = ThresholdSpec::new(&inst.params).unwrap();
        let r = roro_run(&inst).unwrap();
        let opt = solve_opt(&inst.params, &inst.prices).unwrap().cost.total;
        let lb = phi(&spec, r.final_utilization_pre_compulsory).unwrap() - inst.params.beta
            + inst.params.lambda_reg / t as f64;
        assert!(opt >= lb - 1e-6, "{opt} < {lb}");
    }
}

proptest! {
    #[test]
    fn threshold_and_roro_complete_the_workload(seed in any::<u64>(), t in 1usize..24) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_instance(&mut rng, t);
        for r in [roro_run(&inst).unwrap(), threshold_run(&inst).unwrap()] {
            prop_assert!((r.schedule.total() - 1.0).abs() <= 1e-9);
            prop_assert!(r.cost.total <= inst.params.p_max + 2.0 * inst.params.beta + inst.params.lambda_reg + 1e-9);
        }
    }
}

/// A forced final purchase pays `β` to ramp up and `β` to ramp down, which
/// can push the ratio past `α_SASP`. Without the ramp-down it stays below.
#[test]
fn compulsory_purchase_can_exceed_alpha_sasp() {
    let params = ProblemParams::new(96.0, 147.0, 16.0, 0.0, 4).unwrap();
    let inst = Instance::new(params.clone(), vec![109.0, 112.0, 115.0, 146.0]).unwrap();
    let r = roro_run(&inst).unwrap();
    assert_eq!(r.schedule.decisions, vec![0.0, 0.0, 0.0, 1.0]);
    assert!((r.cost.total - 178.0).abs() < 1e-9);
    let opt = solve_opt(&params, &inst.prices).unwrap().cost.total;
    assert!((opt - 368.0 / 3.0).abs() < 1e-6);
    let alpha = sasp_core::robust::alpha_sasp(&params).unwrap();
    assert!(r.cost.total / opt > alpha + 0.05);
    assert!((r.cost.total - 16.0) / opt < alpha);
}
