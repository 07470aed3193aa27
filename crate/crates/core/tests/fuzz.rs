use typedkb::edit::audit_run;
use typedkb::env::{desk_bank, household_contract};
use typedkb::fixtures::{scaffold_kb, solved_kb};
use typedkb::verify::Verdict;
use typedkb::{fuzz_apply, run_loop, FuzzConfig, FuzzEditor, LoopConfig};

#[test]
fn fuzzed_diffs_never_break_closure() {
    let report = fuzz_apply(
        &[scaffold_kb(), solved_kb()],
        &FuzzConfig {
            cases: 300,
            seed: 42,
            ..FuzzConfig::default()
        },
    );
    assert!(report.violations.is_empty(), "{:?}", report.violations);
    assert_eq!(report.cases, 300);
    assert_eq!(report.applied + report.rejected(), 300);
    assert!(report.applied > 0 && report.apply_rejected > 0 && report.schema_rejected > 0);
    assert!(
        report.by_kind.iter().all(|n| *n > 0),
        "{:?}",
        report.by_kind
    );
}

#[test]
fn fuzz_runs_are_reproducible() {
    let config = FuzzConfig {
        cases: 100,
        seed: 9,
        ..FuzzConfig::default()
    };
    assert_eq!(
        fuzz_apply(&[solved_kb()], &config),
        fuzz_apply(&[solved_kb()], &config)
    );
}

#[test]
fn no_fixtures_means_no_cases() {
    let report = fuzz_apply(&[], &FuzzConfig::default());
    assert_eq!(report.cases, 0);
}

#[test]
fn fuzz_editor_loop_never_moves_the_kb_on_rejection() {
    let mut bank = desk_bank();
    bank.tasks.truncate(3);
    let dir = tempfile::tempdir().unwrap();
    let kb0 = scaffold_kb();
    let config = LoopConfig {
        max_iters: 30,
        horizon: 50,
        health_declared: true,
        summary_seed: 1,
        run_dir: Some(dir.path().into()),
    };
    let out = run_loop(
        &kb0,
        &household_contract(),
        &mut FuzzEditor::new(5, 0.5),
        &bank,
        &bank,
        &config,
    )
    .unwrap();
    let mut deployed = kb0.hash();
    for it in &out.manifest.iterations {
        assert_eq!(it.hash_before, deployed);
        match it.decision.as_ref().map(|d| d.verdict) {
            Some(Verdict::Kept) => deployed = it.hash_after.clone(),
            _ => assert_eq!(it.hash_after, deployed),
        }
    }
    assert_eq!(out.kb.hash(), deployed);
    assert!(audit_run(dir.path()).unwrap().violations.is_empty());
}
