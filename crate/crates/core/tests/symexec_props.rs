use std::collections::HashMap;

use pcsat::dataset::{generate_programs, ShapeParams};
use pcsat::symexec::{self, run_concrete, Backend, RunOptions, RunReport};
use pcsat::Solver;
use proptest::prelude::*;

fn solver_only(p: &symexec::Program) -> RunReport {
    symexec::run(p, &mut Backend::SolverOnly, &RunOptions::default())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Every emitted input drives the concrete interpreter down the same
    /// branches to the same kind of leaf.
    #[test]
    fn tests_replay_concretely(seed in any::<u64>()) {
        let p = &generate_programs(1, seed, &ShapeParams::default())[0];
        let report = solver_only(p);
        prop_assert!(report.complete);
        prop_assert_eq!(report.tests.len(), report.leaf_states);
        for t in &report.tests {
            let inputs: HashMap<String, _> = t.inputs.clone().into_iter().collect();
            let outcome = run_concrete(p, &inputs);
            prop_assert_eq!(&outcome.decisions, &t.decisions, "path {}", t.path);
            prop_assert_eq!(outcome.leaf, t.leaf);
        }
    }

    #[test]
    fn runs_are_deterministic_and_ordered(seed in any::<u64>()) {
        let p = &generate_programs(1, seed, &ShapeParams::default())[0];
        let strip = |mut r: RunReport| { r.elapsed_ms = 0.0; r };
        let a = strip(solver_only(p));
        prop_assert_eq!(&a, &strip(solver_only(p)));
        prop_assert!(a.states_explored >= a.leaf_states);

        let mut cache = pcsat::cache::SolutionCache::new();
        let cached = symexec::run(p, &mut Backend::Cache(&mut cache), &RunOptions::default());
        prop_assert_eq!(cached.leaf_pc_set(), a.leaf_pc_set());
        prop_assert_eq!(cached.states_explored, a.states_explored);
    }
}

#[test]
fn budgeted_solver_reports_unknown_paths_instead_of_pruning() {
    let p = symexec::parse_program(
        "fn f(x, y) { if (3*x + 2*y >= 3001) { if (3*x - 2*y <= -2999) { halt; } } halt; }",
    )
    .unwrap();
    let opts = RunOptions {
        solver: Solver::new(1),
        ..RunOptions::default()
    };
    let r = symexec::run(&p, &mut Backend::SolverOnly, &opts);
    assert!(r.unknown_paths > 0);
    assert!(r.tests.iter().all(|t| !t.pc.contains("2999")));
}
