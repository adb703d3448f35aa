mod common;

use common::gradchecks::{end_to_end_checks, layer_checks, END_TO_END_TOL, LAYER_TOL};

#[test]
fn every_layer_matches_finite_differences() {
    for (name, report) in layer_checks().unwrap() {
        eprintln!("{name}: {:.2e}", report.max_rel_err);
        assert!(report.passed(), "{name}: max rel err {:.3e} >= {LAYER_TOL:e}", report.max_rel_err);
    }
}

#[test]
fn evaluator_and_cost_chain_match_finite_differences() {
    let records = common::small_records(40, 1);
    let model = common::tiny_evaluator(&records, 1);
    for seed in 0..3 {
        for (name, report) in end_to_end_checks(&model, seed).unwrap() {
            eprintln!("{name} seed {seed}: {:.2e}", report.max_rel_err);
            assert!(
                report.passed(),
                "{name} (seed {seed}): max rel err {:.3e} >= {END_TO_END_TOL:e}",
                report.max_rel_err
            );
        }
    }
}
