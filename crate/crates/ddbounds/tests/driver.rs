use ddbounds::benchmarks::{cracked_problem, square_problem, CrackedGeometry, QOI_REGION};
use ddbounds::core::ddsolver::Termination;
use ddbounds::core::fem::Hypothesis;
use ddbounds::core::substructure::Substructured;
use ddbounds::driver::{
    converged_estimate, initial_guesses, run_adaptive, run_estimate, sequential_reference, termination_label,
    AdaptivePlan, InitialGuess, Outcome, RunOptions, StopPolicy,
};
use ddbounds::formats::ApproachFile;
use proptest::prelude::*;

fn options(stop: StopPolicy) -> RunOptions {
    RunOptions { stop, patch_refine: 2, ..RunOptions::default() }
}

#[test]
fn envelope_fires_at_first_crossing() {
    let problem = square_problem(12, (3, 3), 1.0).unwrap();
    for approach in [ApproachFile::Bdd, ApproachFile::Feti] {
        let opts = RunOptions { approach, estimate_every: true, ..options(StopPolicy::Envelope) };
        let c = &run_estimate(&problem, &opts).unwrap().cycles[0];
        assert_eq!(c.termination, termination_label(Termination::Stopped));
        let (last, before) = c.forward.split_last().unwrap();
        assert_eq!(last.iter, c.iterations);
        assert!(last.alpha < last.rho_discr);
        // the first pass only arms the criterion
        for r in &before[1..] {
            assert!(r.alpha >= r.rho_discr, "{approach:?} iteration {}", r.iter);
        }
    }
}

#[test]
fn sparse_envelope_uses_the_latest_pass() {
    let problem = square_problem(12, (3, 3), 1.0).unwrap();
    let c = &run_estimate(&problem, &options(StopPolicy::Envelope)).unwrap().cycles[0];
    assert_eq!(c.forward.len(), 2);
    assert_eq!(c.forward[0].iter, 1);
    let armed = c.forward[0].rho_discr;
    let alphas = &c.alpha_history;
    assert!(alphas[c.iterations] < armed);
    assert!(alphas[1..c.iterations].iter().all(|a| *a >= armed));
}

#[test]
fn tenth_runs_longer_than_envelope() {
    let problem = square_problem(12, (3, 3), 1.0).unwrap();
    let env = run_estimate(&problem, &options(StopPolicy::Envelope)).unwrap().cycles[0].iterations;
    let tenth = run_estimate(&problem, &options(StopPolicy::Tenth)).unwrap().cycles[0].iterations;
    assert!(tenth > env);
}

#[test]
fn budget_exhaustion_is_reported() {
    let problem = square_problem(12, (3, 3), 1.0).unwrap();
    let opts = RunOptions { max_iterations: 2, ..options(StopPolicy::Tolerance(1e-12)) };
    let report = run_estimate(&problem, &opts).unwrap();
    assert_eq!(report.outcome, Outcome::BudgetExhausted);
    assert_eq!(report.exit_code(), 2);
}

#[test]
fn single_subdomain_matches_sequential_reference() {
    let problem = square_problem(8, (1, 1), 1.0).unwrap();
    let (seq, _) = sequential_reference(&problem, 2).unwrap();
    let (dd, iterations, sa) = converged_estimate(&problem, &options(StopPolicy::Tolerance(1e-10))).unwrap();
    assert_eq!(iterations, 0);
    assert!(sa <= 1e-8);
    assert!((dd.theta - seq.theta).abs() <= 1e-10 * seq.theta);
    assert!((dd.rho - seq.rho).abs() <= 1e-10 * seq.rho);
    assert_eq!(dd.true_error, seq.true_error);
}

#[test]
fn recycling_does_not_change_converged_bounds() {
    let problem = square_problem(6, (2, 2), 1.0).unwrap();
    let opts = options(StopPolicy::Tolerance(1e-10));
    let run = |recycle| run_adaptive(&problem, &AdaptivePlan::new(1e-6, 2, recycle).unwrap(), &opts).unwrap();
    let (plain, recycled) = (run(false), run(true));
    let (a, b) = (plain.cycles.last().unwrap(), recycled.cycles.last().unwrap());
    assert!(b.augmentation_used > 0);
    assert!(b.iterations <= a.iterations);
    let (fa, fb) = (a.forward.last().unwrap(), b.forward.last().unwrap());
    assert!((fa.theta - fb.theta).abs() <= 1e-8 * fa.theta);
    assert!((fa.rho - fb.rho).abs() <= 1e-8 * fa.rho);
    let (ga, gb) = (a.goal.unwrap(), b.goal.unwrap());
    for (x, y) in [(ga.iexm, gb.iexm), (ga.iexp, gb.iexp)] {
        assert!((x - y).abs() <= 1e-8 * ga.width);
    }
}

#[test]
fn adaptive_plan_validation() {
    assert!(AdaptivePlan::new(0.0, 3, false).is_err());
    assert!(AdaptivePlan::new(f64::NAN, 3, false).is_err());
    assert!(AdaptivePlan::new(0.1, 0, false).is_err());
    let problem = ddbounds::benchmarks::Problem { qoi_region: None, ..square_problem(4, (1, 1), 1.0).unwrap() };
    let plan = AdaptivePlan::new(0.1, 1, false).unwrap();
    assert!(run_adaptive(&problem, &plan, &RunOptions::default()).is_err());
}

#[test]
fn cracked_lookalike_builds_and_solves() {
    let problem = cracked_problem(&CrackedGeometry::default(), (4, 4)).unwrap();
    assert_eq!(problem.material.hypothesis, Hypothesis::PlaneStress);
    assert_eq!(problem.partition.n_subdomains, 16);
    assert!(!problem.mesh.regions[QOI_REGION].is_empty());
    assert!(problem.exact.is_none());
    let report = run_estimate(&problem, &options(StopPolicy::Tolerance(1e-8))).unwrap();
    let c = &report.cycles[0];
    assert_eq!(c.termination, "converged");
    let last = c.forward.last().unwrap();
    assert!(last.theta > 0.0 && last.rho > 0.0 && last.rho <= last.theta);
    assert!(last.sa_residual <= 1e-8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn initial_guesses_are_reproducible(seed in any::<u64>(), amplitude in 1e-3f64..10.0, feti in any::<bool>()) {
        let problem = square_problem(6, (2, 2), 1.0).unwrap();
        let sub = Substructured::new(&problem.mesh, &problem.partition, &problem.material).unwrap();
        let approach = if feti { ApproachFile::Feti } else { ApproachFile::Bdd };
        let opts = RunOptions { approach, initial_guess: Some(InitialGuess { seed, amplitude }), ..RunOptions::default() };
        let a = initial_guesses(&sub, &opts, 2);
        prop_assert_eq!(&a, &initial_guesses(&sub, &opts, 2));
        let dim = if feti { sub.algebra.n_connections() } else { sub.algebra.n_interface() };
        for g in &a {
            let g = g.as_ref().unwrap();
            prop_assert_eq!(g.len(), dim);
            prop_assert!(g.iter().all(|v| v.abs() <= amplitude));
        }
        prop_assert_ne!(&a[0], &a[1]);
        let none = initial_guesses(&sub, &RunOptions { approach, ..RunOptions::default() }, 2);
        prop_assert!(none.iter().all(Option::is_none));
    }
}
