//! Property tests for the geometric invariants the solvers rely on.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use proptest::prelude::*;

use ica::curvature::{add_curvature, mult_curvature, CurvatureKind};
use ica::instance::{gen_random, Instance, RandomFamily};
use ica::oracle::{brute_force_opt, numeric_curvature_oracle, Objective};
use ica::solvers::{solve_additive, solve_multiplicative, TargetSpec};
use ica::valuations::ConcaveValuation;

fn arb_valuation() -> impl Strategy<Value = ConcaveValuation> {
    prop_oneof![
        (0.1f64..3.0).prop_map(ConcaveValuation::linear),
        (0.2f64..3.0).prop_map(ConcaveValuation::budget),
        (0.3f64..0.95).prop_map(ConcaveValuation::power),
        (0.2f64..2.0, 0.05f64..1.0)
            .prop_map(|(eta, omega)| ConcaveValuation::smooth_log(eta, omega)),
        (
            2usize..=4,
            0.0f64..0.3,
            proptest::collection::vec(0.05f64..0.5, 4),
            proptest::collection::vec(0.3f64..1.5, 4)
        )
            .prop_map(|(lambda, base, gaps, lens)| {
                let mut slopes: Vec<f64> = Vec::new();
                let mut s = base;
                for g in gaps.iter().take(lambda) {
                    slopes.push(s);
                    s += g;
                }
                slopes.reverse();
                let mut points = vec![0.0];
                for len in lens.iter().take(lambda - 1) {
                    let prev = *points.last().unwrap();
                    points.push(prev + len);
                }
                ConcaveValuation::piecewise(points, slopes).unwrap()
            }),
    ]
}

/// A slope admissible for inversion: a fraction of the way between the
/// terminal and initial slope (capped when the initial slope is infinite).
fn slope_in_range(v: &ConcaveValuation, frac: f64) -> Option<f64> {
    let hi = v.slope_at_zero().min(1e6);
    let lo = v.min_slope().max(1e-9);
    if !(hi > 0.0) || lo >= hi {
        return None;
    }
    Some(lo + frac * (hi - lo))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn supergradient_upper_bound(v in arb_valuation(), frac in 0.001f64..1.0) {
        prop_assume!(v.validate().is_ok());
        if let Some(s) = slope_in_range(&v, frac) {
            let sp = v.slope_point_from_slope(s).unwrap();
            let hi = sp.anchor.max(1.0) * 3.0;
            for k in 0..=300 {
                let x = hi * k as f64 / 300.0;
                prop_assert!(
                    sp.tangent_value(x) >= v.value(x) - 1e-9,
                    "line {} below v {} at x={x}", sp.tangent_value(x), v.value(x)
                );
            }
            // the line touches the function at its anchor
            prop_assert!((sp.tangent_value(sp.anchor) - v.value(sp.anchor)).abs() <= 1e-9);
        }
    }

    #[test]
    fn tangent_ordering(v in arb_valuation(), f1 in 0.01f64..1.0, f2 in 0.01f64..1.0) {
        prop_assume!(v.validate().is_ok());
        let (s1, s2) = match (slope_in_range(&v, f1), slope_in_range(&v, f2)) {
            (Some(a), Some(b)) => (a.max(b), a.min(b)),
            _ => return Ok(()),
        };
        let line1 = v.slope_point_from_slope(s1).unwrap(); // anchored earlier
        let line2 = v.slope_point_from_slope(s2).unwrap();
        prop_assume!(line1.anchor <= line2.anchor);
        // right of the later anchor the earlier (steeper) tangent is above;
        // left of the earlier anchor it is below
        let span = line2.anchor.max(1.0);
        for k in 0..=100 {
            let x = line2.anchor + span * k as f64 / 100.0;
            prop_assert!(line1.tangent_value(x) >= line2.tangent_value(x) - 1e-9);
            let xt = line1.anchor * k as f64 / 100.0;
            prop_assert!(line1.tangent_value(xt) <= line2.tangent_value(xt) + 1e-9);
        }
    }

    #[test]
    fn intercepts_monotone_in_anchor(v in arb_valuation(), t1 in 0.0f64..5.0, t2 in 0.0f64..5.0) {
        prop_assume!(v.validate().is_ok());
        let (lo, hi) = (t1.min(t2), t1.max(t2));
        let y_lo = v.slope_point_at(lo).intercept;
        let y_hi = v.slope_point_at(hi).intercept;
        prop_assert!(y_hi >= y_lo - 1e-9, "y({hi}) = {y_hi} < y({lo}) = {y_lo}");
    }

    #[test]
    fn slopes_non_increasing(v in arb_valuation(), u1 in 0.0f64..5.0, u2 in 0.0f64..5.0) {
        prop_assume!(v.validate().is_ok());
        let (lo, hi) = (u1.min(u2), u1.max(u2));
        prop_assert!(v.slope(lo) >= v.slope(hi));
        prop_assert!(v.value(lo) <= v.value(hi) + 1e-12);
    }

    #[test]
    fn descriptor_round_trip_is_bit_exact(v in arb_valuation()) {
        prop_assume!(v.validate().is_ok());
        let json = serde_json::to_string(&v).unwrap();
        let back: ConcaveValuation = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(v, back);
    }

    #[test]
    fn curvature_reports_certify(v in arb_valuation(), w in 0.1f64..2.0) {
        prop_assume!(v.validate().is_ok());
        if v.value(0.0) >= 0.0 {
            let mu = mult_curvature(&v, w).unwrap();
            prop_assert!(mu.value >= 1.0 - 1e-12);
            prop_assert!(mu.certify(&v, 1e-9), "mu witness failed: {mu:?}");
        }
        let alpha = add_curvature(&v, w).unwrap();
        prop_assert!(alpha.value >= -1e-12);
        prop_assert!(alpha.certify(&v, 1e-9), "alpha witness failed: {alpha:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn instance_round_trip(seed in 0u64..10_000, n in 1usize..4, m in 1usize..7) {
        let inst = gen_random(n, m, RandomFamily::Budget, seed);
        let back = Instance::from_json(&inst.to_json()).unwrap();
        prop_assert_eq!(inst, back);
    }

    #[test]
    fn weak_duality_on_random_states(seed in 0u64..10_000, t in 0.01f64..3.0) {
        let inst = gen_random(2, 4, RandomFamily::Budget, seed);
        let state = ica::dual::DualState {
            points: (0..inst.n()).map(|i| inst.agents[i].valuation.slope_point_at(t)).collect(),
            mode: ica::dual::DualMode::Multiplicative,
            epsilon: 0.0,
        };
        let (feasible, dual) = state.check_dual_feasible(&inst, 1.0);
        prop_assert!(feasible);
        let (opt, _) = brute_force_opt(&inst, Objective::Utilitarian).unwrap();
        prop_assert!(dual >= opt - 1e-9, "dual {dual} < opt {opt}");
    }

    #[test]
    fn dual_objective_telescopes_under_proper_assignment(seed in 0u64..10_000, f in 0.05f64..1.0) {
        let inst = gen_random(3, 5, RandomFamily::Budget, seed);
        let points: Vec<_> = (0..inst.n())
            .map(|i| {
                let v = &inst.agents[i].valuation;
                let s = v.min_slope().max(1e-6) + f * (v.slope_at_zero() - v.min_slope().max(1e-6));
                v.slope_point_from_slope(s).unwrap()
            })
            .collect();
        let state = ica::dual::DualState {
            points,
            mode: ica::dual::DualMode::Multiplicative,
            epsilon: 0.0,
        };
        let mut alloc = ica::instance::Allocation::unassigned(inst.m);
        for j in 0..inst.m {
            alloc.owner[j] = state.best_agent(&inst, j, None);
        }
        let (feasible, obj) = state.check_dual_feasible(&inst, 1.0);
        prop_assert!(feasible);
        let u = alloc.utilities(&inst);
        let d_sum: f64 = (0..inst.n()).map(|i| state.agent_dual_value(i, u[i])).sum();
        prop_assert!((obj - d_sum).abs() <= 1e-9, "obj {obj} vs sum D {d_sum}");
    }

    #[test]
    fn mult_solver_oracle_bound(seed in 0u64..10_000) {
        let n = 1 + (seed % 3) as usize;
        let m = 2 + (seed % 4) as usize;
        let inst = gen_random(n, m, RandomFamily::Budget, seed);
        let eps = 0.05;
        let report = solve_multiplicative(&inst, eps, TargetSpec::Auto).unwrap();
        prop_assert!(report.converged());
        prop_assert_eq!(report.under_allocation_events, 0);
        let mu = report.targets.iter().cloned().fold(1.0f64, f64::max);
        let (opt, _) = brute_force_opt(&inst, Objective::Utilitarian).unwrap();
        prop_assert!(report.primal >= opt / ((1.0 + eps) * mu) - 1e-9);
        prop_assert!(report.certificate <= (1.0 + eps) * mu + 1e-9);
    }

    #[test]
    fn additive_solver_oracle_bound(seed in 0u64..10_000, omega in 0.25f64..1.0) {
        let inst = gen_random(2, 4, RandomFamily::SmoothLog { omega }, seed);
        let eps = 0.05;
        let report = solve_additive(&inst, eps, TargetSpec::Auto).unwrap();
        prop_assert!(report.converged());
        let alpha_sum: f64 = report.targets.iter().sum();
        let (opt, _) = brute_force_opt(&inst, Objective::Utilitarian).unwrap();
        prop_assert!(
            report.primal >= opt - alpha_sum - eps - 1e-9,
            "primal {} opt {opt} alphas {alpha_sum}", report.primal
        );
    }
}

#[test]
fn closed_forms_agree_with_dense_oracle() {
    // closed-form paths against the independent 2048^2 grid
    let cases: Vec<(ConcaveValuation, f64)> = vec![
        (ConcaveValuation::budget(1.0), 1.0),
        (ConcaveValuation::budget(2.0), 1.0),
        (ConcaveValuation::budget(1.5), 0.7),
        (
            ConcaveValuation::piecewise(vec![0.0, 1.0], vec![2.0, 1.0]).unwrap(),
            1.0,
        ),
        (
            ConcaveValuation::piecewise(vec![0.0, 1.0, 2.5], vec![1.5, 0.8, 0.2]).unwrap(),
            0.9,
        ),
    ];
    for (v, w) in &cases {
        let mine = mult_curvature(v, *w).unwrap().value;
        let oracle = numeric_curvature_oracle(v, *w, CurvatureKind::Multiplicative).unwrap();
        assert!(
            (mine - oracle).abs() < 1e-5,
            "{v:?} w={w}: closed {mine} vs oracle {oracle}"
        );
        let mine_a = add_curvature(v, *w).unwrap().value;
        let oracle_a = numeric_curvature_oracle(v, *w, CurvatureKind::Additive).unwrap();
        assert!(
            (mine_a - oracle_a).abs() < 1e-5,
            "{v:?} w={w}: closed alpha {mine_a} vs oracle {oracle_a}"
        );
    }
    // smooth-log closed-form alpha and numeric mu
    for omega in [1.0f64, 0.5, 0.25] {
        let v = ConcaveValuation::smooth_log(1.0, omega);
        let mine = add_curvature(&v, 1.0).unwrap().value;
        let oracle = numeric_curvature_oracle(&v, 1.0, CurvatureKind::Additive).unwrap();
        assert!(
            (mine - oracle).abs() < 1e-5,
            "omega {omega}: {mine} vs {oracle}"
        );
    }
    let v = ConcaveValuation::smooth_log(1.0, 1.0);
    let mine = mult_curvature(&v, 1.0).unwrap();
    let oracle = numeric_curvature_oracle(&v, 1.0, CurvatureKind::Multiplicative).unwrap();
    assert!(
        (mine.value - oracle).abs() < 1e-5,
        "smooth-log mu {} vs oracle {oracle}",
        mine.value
    );
    assert!(
        mine.supremum,
        "smooth-log mu at z = 0 is an endpoint supremum"
    );
}
