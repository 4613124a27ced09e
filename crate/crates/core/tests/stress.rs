//! Large randomized sweeps, ignored by default. Run on demand with
//! `cargo test -p ica --test stress -- --ignored --nocapture`.

use ica::curvature::smooth_log_alpha_closed_form;
use ica::instance::{gen_random, Instance, RandomFamily};
use ica::oracle::{brute_force_opt, Objective};
use ica::solvers::{solve_additive_opts, solve_multiplicative_opts, SolveOptions, TargetSpec};
use ica::valuations::ConcaveValuation;
use ica::wbb::{normalize_instance, solve_wbb_opts};

#[test]
#[ignore]
fn stress_mult_solver_bounds() {
    let eps = 0.05;
    let opts = SolveOptions::with_epsilon(eps);
    let mut runs = 0u64;
    for family in [
        RandomFamily::Budget,
        RandomFamily::Piecewise,
        RandomFamily::Power,
        RandomFamily::Linear,
    ] {
        for k in 0..2000u64 {
            let seed = 1_000_000 + k;
            let n = 1 + (seed % 3) as usize;
            let m = 2 + (seed % 5) as usize;
            let inst = gen_random(n, m, family, seed);
            let report = solve_multiplicative_opts(&inst, TargetSpec::Auto, &opts).unwrap();
            assert!(report.converged(), "{family:?} seed {seed}");
            assert_eq!(report.under_allocation_events, 0, "{family:?} seed {seed}");
            assert!(report.dual_feasible, "{family:?} seed {seed}");
            let (opt, _) = brute_force_opt(&inst, Objective::Utilitarian).unwrap();
            let mu = report.targets.iter().cloned().fold(1.0f64, f64::max);
            assert!(
                report.primal >= opt / ((1.0 + eps) * mu) - 1e-9,
                "{family:?} seed {seed}: primal {} opt {opt} mu {mu}",
                report.primal
            );
            assert!(report.dual_objective >= opt - 1e-9, "{family:?} seed {seed}");
            assert!(
                report.certificate <= (1.0 + eps) * mu + 1e-9,
                "{family:?} seed {seed}: cert {}",
                report.certificate
            );
            runs += 1;
        }
    }
    println!("stress: {runs} multiplicative runs clean");
}

#[test]
#[ignore]
fn stress_additive_solver_bounds() {
    let eps = 0.05;
    let opts = SolveOptions::with_epsilon(eps);
    let mut runs = 0u64;
    for omega in [0.25, 0.5, 1.0] {
        for k in 0..2000u64 {
            let seed = 2_000_000 + k;
            let n = 1 + (seed % 3) as usize;
            let m = 2 + (seed % 5) as usize;
            let inst = gen_random(n, m, RandomFamily::SmoothLog { omega }, seed);
            let report = solve_additive_opts(&inst, TargetSpec::Auto, &opts).unwrap();
            assert!(report.converged(), "omega {omega} seed {seed}");
            assert_eq!(report.under_allocation_events, 0);
            assert!(report.dual_feasible, "omega {omega} seed {seed}");
            let alpha_sum: f64 = report.targets.iter().sum();
            assert!(
                report.certificate <= alpha_sum + eps + 1e-9,
                "omega {omega} seed {seed}: cert {}",
                report.certificate
            );
            let (opt, _) = brute_force_opt(&inst, Objective::Utilitarian).unwrap();
            assert!(
                report.primal >= opt - alpha_sum - eps - 1e-9,
                "omega {omega} seed {seed}"
            );
            runs += 1;
        }
    }
    println!("stress: {runs} additive runs clean");
}

fn smooth_log_counterpart(norm: &Instance, omega: f64) -> Instance {
    Instance {
        agents: norm
            .agents
            .iter()
            .map(|a| ica::instance::AgentSpec {
                valuation: ConcaveValuation::SmoothLog { eta: a.weight, omega, inner: None },
                weight: a.weight,
            })
            .collect(),
        m: norm.m,
        utilities: norm.utilities.clone(),
    }
}

#[test]
#[ignore]
fn stress_wbb_additive_trace_parity() {
    let mut total_events = 0u64;
    let mut runs = 0u64;
    for omega in [0.25, 0.5, 1.0] {
        let alpha_bar = smooth_log_alpha_closed_form(1.0, omega).unwrap();
        for k in 0..700u64 {
            let seed = 3_000_000 + k;
            let eps = 0.01 + (seed % 3) as f64 * 0.02;
            let mut opts = SolveOptions::with_epsilon(eps);
            opts.trace = true;
            let n = 2 + (seed % 3) as usize;
            let m = 3 + (seed % 5) as usize;
            let raw = gen_random(n, m, RandomFamily::Linear, seed);
            let (norm, _) = normalize_instance(&raw).unwrap();
            let wbb = solve_wbb_opts(&norm, omega, &opts).unwrap();
            let counterpart = smooth_log_counterpart(&norm, omega);
            let alphas: Vec<f64> =
                counterpart.agents.iter().map(|a| a.weight * alpha_bar).collect();
            let add =
                solve_additive_opts(&counterpart, TargetSpec::Explicit(alphas), &opts).unwrap();
            assert!(wbb.converged() && add.converged(), "omega {omega} seed {seed}");
            assert_eq!(
                wbb.allocation, add.allocation,
                "omega {omega} seed {seed}: allocations diverge"
            );
            let wt = wbb.trace.as_ref().unwrap();
            let at = add.trace.as_ref().unwrap();
            assert_eq!(wt.len(), at.len(), "omega {omega} seed {seed}: lengths diverge");
            for (we, ae) in wt.iter().zip(at.iter()) {
                assert!(
                    we.same_step(ae),
                    "omega {omega} seed {seed}: diverge at t={} ({:?} vs {:?})",
                    we.t,
                    we,
                    ae
                );
            }
            total_events += wt.len() as u64;
            runs += 1;
        }
    }
    println!("stress: {runs} wbb/additive pairs identical ({total_events} events)");
}
