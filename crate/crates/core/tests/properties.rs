//! Property tests over randomly generated instances.

mod common;

use std::collections::HashMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rprv::conformal::{g_inv, min_calibration_size, robust_quantile, vanilla_quantile, DivergenceSpec};
use rprv::logic::{formula_length, parse, to_pnf, Dialect, Formula, Predicate};
use rprv::predictors::{Predictor, PredictorKind, PredictorModel};
use rprv::rprv::{bounded_robustness, calibrate, verify, Family, MonitorSetup, MonitorSpec, Pair};
use rprv::semantics::{
    eval_bool_stl, eval_bool_strel, eval_robust_stl, eval_robust_strel, Evaluator, SemanticsError, StateValuation,
    Trajectory, Valuation, View, WeightSpec,
};
use rprv::shift::tv_between;
use rprv::ExtReal;

use common::*;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, failure_persistence: None, ..ProptestConfig::default() }
}

/// `h` values with one `(π, τ, l)` raised by `bump`.
struct Bumped<'a> {
    base: StateValuation<'a>,
    key: (usize, usize, usize),
    bump: f64,
}

impl Valuation for Bumped<'_> {
    fn predicate(&self, p: &Predicate, tau: usize, loc: usize) -> Result<ExtReal, SemanticsError> {
        let v = self.base.predicate(p, tau, loc)?;
        Ok(if (p.id, tau, loc) == self.key { ExtReal::new(v.value() + self.bump) } else { v })
    }
}

proptest! {
    #![proptest_config(config(256))]

    #[test]
    fn printing_round_trips(seed in any::<u64>()) {
        let mut r = rng(seed);
        for dialect in [Dialect::Stl, Dialect::Strel] {
            let f = random_formula(&mut r, 4, 20, 3, dialect);
            let g = parse(&f.to_string(), dialect).unwrap();
            prop_assert_eq!(f, g);
        }
    }

    #[test]
    fn pnf_preserves_length_and_removes_negation(seed in any::<u64>()) {
        let mut r = rng(seed);
        let f = random_formula(&mut r, 4, 20, 3, Dialect::Strel);
        if let Ok(p) = to_pnf(&f) {
            prop_assert!(!p.has_negation());
            prop_assert_eq!(formula_length(&p), formula_length(&f));
        }
    }

    #[test]
    fn pnf_preserves_robustness(seed in any::<u64>()) {
        let mut r = rng(seed);
        let inst = strel_instance(&mut r, 8, 4, 3);
        if let Ok(p) = to_pnf(&inst.f) {
            let a = eval_robust_strel(&inst.f, &inst.x, &inst.w, 0, inst.agent).unwrap();
            let b = eval_robust_strel(&p, &inst.x, &inst.w, 0, inst.agent).unwrap();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn derived_operators_match_their_definitions(seed in any::<u64>()) {
        let mut r = rng(seed);
        let inst = strel_instance(&mut r, 8, 4, 2);
        let lo = r.random_range(0..3);
        let hi = r.random_range(lo..4);
        let body = inst.f.to_string();
        let x = inst.x.clone();
        let len = x.len() + hi;
        // Pad so the outer operator has room.
        let x = Trajectory::from_fn(0, len, x.agents(), x.dims(), |t, l, k| x.state(t.min(x.len() - 1), l)[k]).unwrap();
        let w = random_weights(&mut r, len, x.agents(), 0.5, 3);
        let pairs = [
            (format!("F[{lo},{hi}] {body}"), format!("true U[{lo},{hi}] {body}")),
            (format!("everywhere[{lo},{hi}] {body}"), format!("not (somewhere[{lo},{hi}] (not {body}))")),
        ];
        for (a, b) in pairs {
            let fa = parse(&a, Dialect::Strel).unwrap();
            let fb = parse(&b, Dialect::Strel).unwrap();
            prop_assert_eq!(
                eval_robust_strel(&fa, &x, &w, 0, inst.agent).unwrap(),
                eval_robust_strel(&fb, &x, &w, 0, inst.agent).unwrap()
            );
        }
    }

    #[test]
    fn stl_soundness(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (f, x) = stl_instance(&mut r, 12, 4);
        let rho = eval_robust_stl(&f, &x, 0).unwrap();
        if rho != ExtReal::ZERO {
            prop_assert_eq!(rho > ExtReal::ZERO, eval_bool_stl(&f, &x, 0).unwrap());
        }
    }

    #[test]
    fn strel_soundness(seed in any::<u64>()) {
        let mut r = rng(seed);
        let inst = strel_instance(&mut r, 10, 5, 3);
        let rho = eval_robust_strel(&inst.f, &inst.x, &inst.w, 0, inst.agent).unwrap();
        if rho != ExtReal::ZERO {
            prop_assert_eq!(rho > ExtReal::ZERO, eval_bool_strel(&inst.f, &inst.x, &inst.w, 0, inst.agent).unwrap());
        }
    }

    #[test]
    fn negation_free_formulas_are_monotone(seed in any::<u64>()) {
        let mut r = rng(seed);
        let inst = strel_instance(&mut r, 8, 4, 3);
        let Ok(f) = to_pnf(&inst.f) else { return Ok(()) };
        let preds = f.predicates();
        if preds.is_empty() {
            return Ok(());
        }
        let p = preds[r.random_range(0..preds.len())].id;
        let key = (p, r.random_range(0..inst.x.len()), r.random_range(0..inst.x.agents()));
        let base = Evaluator::strel(&StateValuation::new(&inst.x, View::PerAgent), &inst.w, &inst.x).eval(&f, 0, inst.agent).unwrap();
        let bumped = Bumped { base: StateValuation::new(&inst.x, View::PerAgent), key, bump: r.random_range(0.0..3.0) };
        let up = Evaluator::strel(&bumped, &inst.w, &inst.x).eval(&f, 0, inst.agent).unwrap();
        prop_assert!(up >= base, "{} went from {:?} to {:?}", f, base, up);
    }

    #[test]
    fn single_agent_strel_equals_stl(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (f, x) = stl_instance(&mut r, 12, 4);
        let w = WeightSpec::Explicit { matrices: vec![vec![ExtReal::INFINITY]; x.len()] };
        let g = parse(&f.to_string(), Dialect::Strel).unwrap();
        prop_assert_eq!(eval_robust_strel(&g, &x, &w, 0, 0).unwrap(), eval_robust_stl(&f, &x, 0).unwrap());
    }
}

proptest! {
    #![proptest_config(config(512))]

    #[test]
    fn tv_with_zero_epsilon_is_vanilla(scores in prop::collection::vec(-100.0f64..100.0, 1..60), delta in 0.01f64..0.99) {
        let a = robust_quantile(&scores, delta, &DivergenceSpec::tv(0.0)).unwrap();
        let b = vanilla_quantile(&scores, delta).unwrap();
        prop_assert_eq!(a.value, b.value);
        prop_assert_eq!(a.index, b.index);
    }

    #[test]
    fn quantile_is_monotone(
        scores in prop::collection::vec(-10.0f64..10.0, 1..80),
        d1 in 0.01f64..0.99, d2 in 0.01f64..0.99,
        e1 in 0.0f64..0.5, e2 in 0.0f64..0.5,
    ) {
        let (dlo, dhi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        let (elo, ehi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
        let c = |d, e| robust_quantile(&scores, d, &DivergenceSpec::tv(e)).unwrap().value;
        prop_assert!(c(dlo, elo) <= c(dlo, ehi));
        prop_assert!(c(dhi, elo) <= c(dlo, elo));
    }

    #[test]
    fn finiteness_matches_min_calibration_size(k in 1usize..150, delta in 0.01f64..0.99, eps in 0.0f64..0.6) {
        let div = DivergenceSpec::tv(eps);
        let scores: Vec<f64> = (0..k).map(|i| i as f64).collect();
        let finite = robust_quantile(&scores, delta, &div).unwrap().value.is_finite();
        let level_ok = g_inv(&div, 1.0 - delta).unwrap() < 1.0;
        let big_enough = min_calibration_size(delta, &div).unwrap().is_some_and(|m| k >= m);
        prop_assert_eq!(finite, level_ok && big_enough);
    }

    #[test]
    fn tv_estimate_is_symmetric_and_clamped(
        a in prop::collection::vec(-5.0f64..5.0, 2..80),
        b in prop::collection::vec(-5.0f64..5.0, 2..80),
    ) {
        let ab = tv_between(&a, &b, 512).unwrap();
        let ba = tv_between(&b, &a, 512).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-9);
        prop_assert!((0.0..=1.0).contains(&ab));
    }
}

proptest! {
    #![proptest_config(config(64))]

    #[test]
    fn predictions_are_deterministic_and_keep_the_prefix(seed in any::<u64>(), order in 1usize..4) {
        let mut r = rng(seed);
        let train: Vec<Trajectory> = (0..6).map(|i| random_trajectory(&mut r, 20, 2, 2).with_id(i)).collect();
        let model = PredictorModel::fit(PredictorKind::Ar { order }, &train, 12, 7, "train").unwrap();
        let x = random_trajectory(&mut r, 13, 2, 2);
        for m in [&model, &PredictorModel::constant_velocity(2, 2)] {
            let a = m.predict(&x, 7).unwrap();
            let b = m.predict(&x, 7).unwrap();
            prop_assert_eq!(a.full(), b.full());
            prop_assert_eq!(&a.full().prefix(12).unwrap(), &x);
        }
    }

    /// With true `h` values as bounds the interpretable recursion gives the
    /// robustness itself, and interpretable verdicts expose every future
    /// predicate evaluation.
    #[test]
    fn interpretable_recursion_and_contract(seed in any::<u64>()) {
        let mut r = rng(seed);
        let agents = r.random_range(1..4);
        let f = loop {
            let f = random_formula(&mut r, 3, 10, 2, Dialect::Strel);
            if formula_length(&f) >= 2 && to_pnf(&f).is_ok() {
                break f;
            }
        };
        let t = r.random_range(1..formula_length(&f));
        let len = formula_length(&f) + 1;
        let w = random_weights(&mut r, len, agents, 0.6, 3);
        let agent = r.random_range(0..agents);
        let s = MonitorSetup::new(MonitorSpec::strel(&f.to_string(), 0, t, w, agents, agent)).unwrap();
        let x = random_trajectory(&mut r, len, agents, 2);
        let pnf: &Formula = s.pnf().unwrap();
        let mut truth = HashMap::new();
        for (pi, tau, l) in s.interp2_keys() {
            let p = pnf.predicates().into_iter().find(|p| p.id == pi).unwrap();
            truth.insert((pi, tau, l), ExtReal::new(p.h(x.state(tau, l))));
        }
        prop_assert_eq!(bounded_robustness(&s, &x, truth).unwrap(), s.robustness(&x).unwrap());

        let pool: Vec<Trajectory> = (0..12).map(|i| random_trajectory(&mut r, len, agents, 2).with_id(i)).collect();
        let cv = PredictorModel::constant_velocity(agents, 2);
        let cv: &dyn Predictor = &cv;
        let preds: Vec<_> = pool.iter().map(|x| s.predict(cv, x)).collect::<Result<_, _>>().unwrap();
        let pairs: Vec<Pair> = pool.iter().zip(&preds).map(|(truth, pred)| Pair { truth, pred }).collect();
        let (ap, cp) = pairs.split_at(4);
        for family in Family::ALL {
            let a = calibrate(family, &s, ap, cp, 0.3, &DivergenceSpec::tv(0.05)).unwrap();
            let v = verify(&a, &s, &preds[0]).unwrap();
            if family != Family::Accurate {
                let got: Vec<_> = v.bounds.iter().map(|b| (b.pred, b.tau, b.agent.unwrap())).collect();
                let want: Vec<_> = s.interp2_keys().collect();
                prop_assert_eq!(got, want);
            }
            // Enlarging C̃ never raises ρ*.
            let mut bigger = a.clone();
            bigger.c_tilde = ExtReal::new(a.c_tilde.value().abs() * 2.0 + 0.5);
            if a.c_tilde.is_finite() {
                prop_assert!(verify(&bigger, &s, &preds[0]).unwrap().rho_star <= v.rho_star);
            }
        }
    }

    #[test]
    fn zero_epsilon_methods_equal_vanilla(seed in any::<u64>()) {
        let mut r = rng(seed);
        let s = MonitorSetup::new(MonitorSpec::stl("G[0,6] (s[0] >= 0) and F[2,5] (s[1] <= 1)", 0, 3)).unwrap();
        let pool: Vec<Trajectory> = (0..30).map(|i| random_trajectory(&mut r, 7, 1, 2).with_id(i)).collect();
        let cv = PredictorModel::constant_velocity(1, 2);
        let preds: Vec<_> = pool.iter().map(|x| s.predict(&cv, x)).collect::<Result<_, _>>().unwrap();
        let pairs: Vec<Pair> = pool.iter().zip(&preds).map(|(truth, pred)| Pair { truth, pred }).collect();
        let (ap, cp) = pairs.split_at(10);
        let delta = r.random_range(0.05..0.5);
        for family in Family::ALL {
            let a = calibrate(family, &s, ap, cp, delta, &DivergenceSpec::tv(0.0)).unwrap();
            let alpha = rprv::rprv::compute_alpha(family, &s, ap).unwrap();
            let sc = rprv::rprv::scores(family, &s, alpha.as_ref(), cp).unwrap();
            prop_assert_eq!(a.c_tilde, vanilla_quantile(&sc, delta).unwrap().value);
        }
    }
}
