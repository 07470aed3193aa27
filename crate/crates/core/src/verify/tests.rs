use super::*;
use crate::ablate::{ablate_layer, UnknownVariant};
use crate::env::{desk_bank, Family};
use crate::exec::run_bank;
use crate::fixtures::{scaffold_kb, solved_kb, SMOKE_SUITE};
use crate::layer::LayerId;

fn metrics(bank: &str, successes: u64, total: u64) -> BankMetrics {
    BankMetrics {
        bank: bank.into(),
        seed: 0,
        kb_hash: "0".repeat(64),
        successes,
        total,
        health: HealthVector::from_trajectories(&[]),
    }
}

#[test]
fn strict_focused_gain_is_kept() {
    let (v, reason) = gate(
        &metrics("f", 3, 5),
        &metrics("f", 5, 5),
        &metrics("p", 10, 10),
        &metrics("p", 10, 10),
        false,
    );
    assert_eq!(v, Verdict::Kept);
    assert_eq!(reason, "focused 3/5 -> 5/5");
}

#[test]
fn protected_regression_is_reverted() {
    let (v, reason) = gate(
        &metrics("f", 5, 5),
        &metrics("f", 5, 5),
        &metrics("p", 10, 10),
        &metrics("p", 9, 10),
        true,
    );
    assert_eq!(v, Verdict::Reverted);
    assert!(reason.starts_with("protected regression"), "{reason}");
}

#[test]
fn regression_beats_focused_gain() {
    let (v, _) = gate(
        &metrics("f", 0, 5),
        &metrics("f", 5, 5),
        &metrics("p", 10, 10),
        &metrics("p", 9, 10),
        false,
    );
    assert_eq!(v, Verdict::Reverted);
}

#[test]
fn health_tie_break_needs_declaration() {
    let bank = desk_bank().filter("pick", &[Family::Pick]);
    let base = run_bank(&solved_kb(), &bank, 50).unwrap();
    let mut noisy = base.clone();
    let mut clean = base.clone();
    for (i, r) in noisy.iter_mut().enumerate() {
        r.invalid_action_count = [3, 2, 2][i % 3] * (i < 3) as usize;
    }
    for (i, r) in clean.iter_mut().enumerate() {
        r.invalid_action_count = (i < 3) as usize;
    }
    let before = BankMetrics::from_trajectories("pick", 7, "a", &noisy);
    let after = BankMetrics::from_trajectories("pick", 7, "b", &clean);
    assert_eq!(before.health.invalid_action_count, 7);
    assert_eq!(after.health.invalid_action_count, 3);
    assert_eq!(before.successes, after.successes);

    let (v, reason) = gate(&before, &after, &before, &after, true);
    assert_eq!(v, Verdict::Kept, "{reason}");
    let (v, _) = gate(&before, &after, &before, &after, false);
    assert_eq!(v, Verdict::Reverted);
    let (v, _) = gate(&after, &before, &after, &before, true);
    assert_eq!(v, Verdict::Reverted);
}

#[test]
fn health_order_is_lexicographic() {
    let h = |invalid, steps, recovery, progress| HealthVector {
        invalid_action_count: invalid,
        mean_success_steps: Ratio::from_integer(steps),
        recovery_count: recovery,
        subgoal_progress: Ratio::new(progress, 4),
    };
    assert!(h(1, 30, 5, 0).improves_on(&h(2, 10, 0, 4)));
    assert!(h(1, 10, 5, 0).improves_on(&h(1, 11, 0, 4)));
    assert!(h(1, 10, 0, 0).improves_on(&h(1, 10, 1, 4)));
    assert!(h(1, 10, 0, 3).improves_on(&h(1, 10, 0, 2)));
    assert!(!h(1, 10, 0, 3).improves_on(&h(1, 10, 0, 3)));
}

#[test]
fn decisions_recheck_consistently() {
    let d = decide(
        "a",
        "b",
        MetricPair {
            before: metrics("f", 3, 5),
            after: metrics("f", 5, 5),
        },
        MetricPair {
            before: metrics("p", 10, 10),
            after: metrics("p", 10, 10),
        },
        false,
    );
    assert_eq!(d.verdict, Verdict::Kept);
    assert!(d.consistent());
    let mut forged = d.clone();
    forged.protected.as_mut().unwrap().after.successes = 9;
    assert!(!forged.consistent());
    assert!(GateDecision::apply_failed("a", "f", "p", "bad").consistent());
}

#[test]
fn empty_bank_scores_zero() {
    let m = metrics("e", 0, 0);
    assert_eq!(m.m(), Ratio::from_integer(0));
    assert!(!m.is_perfect());
}

#[test]
fn smoke_suite_splits_seven_seven() {
    let r = smoke_apply(&scaffold_kb(), &SMOKE_SUITE);
    assert!(r.passed(), "{:?}", r.mismatches);
    assert_eq!(r.applied.len(), 7);
    assert_eq!(r.rejected.len(), 7);
}

#[test]
fn empty_smoke_suite_passes() {
    let r = smoke_apply(&scaffold_kb(), &[]);
    assert!(r.passed());
    assert!(r.applied.is_empty() && r.rejected.is_empty());
}

#[test]
fn single_valid_rule_applies() {
    let suite: Vec<_> = SMOKE_SUITE
        .iter()
        .copied()
        .filter(|f| f.name == "05_add_rule.valid")
        .collect();
    let r = smoke_apply(&scaffold_kb(), &suite);
    assert_eq!(r.applied, vec!["05_add_rule.valid".to_string()]);
}

#[test]
fn smoke_execute_solved_and_scaffold() {
    let bank = desk_bank();
    let solved = smoke_execute(&solved_kb(), &bank, SMOKE_EPISODES, 50).unwrap();
    assert_eq!((solved.successes, solved.episodes), (5, 5));
    assert!(solved.failures.is_empty());
    let scaffold = smoke_execute(&scaffold_kb(), &bank, SMOKE_EPISODES, 50).unwrap();
    assert_eq!((scaffold.successes, scaffold.episodes), (0, 5));
    assert_eq!(scaffold.failures.len(), 5);
    assert_eq!(
        scaffold.fired_rules.keys().collect::<Vec<_>>(),
        vec!["Fallback"]
    );
}

#[test]
fn smoke_execute_rejects_missing_skill() {
    let mut kb = scaffold_kb();
    for e in kb.entries_mut() {
        if let crate::kb::EntryContent::Rule(r) = &mut e.content {
            r.action = "TELEPORT".into();
        }
    }
    assert!(smoke_execute(&kb, &desk_bank(), 5, 50).is_err());
}

#[test]
fn scaffold_scores_zero_and_solved_scores_one() {
    let bank = desk_bank();
    assert_eq!(
        evaluate_bank(&scaffold_kb(), &bank, 50)
            .unwrap()
            .metrics
            .m(),
        Ratio::from_integer(0)
    );
    assert!(evaluate_bank(&solved_kb(), &bank, 50)
        .unwrap()
        .metrics
        .is_perfect());
}

#[test]
fn singleton_failing_bank() {
    let mut bank = desk_bank();
    bank.tasks.truncate(1);
    let m = evaluate_bank(&scaffold_kb(), &bank, 50).unwrap().metrics;
    assert_eq!(m.score(), "0/1");
}

#[test]
fn unknown_ablation_variant() {
    let err = ablate_layer(&solved_kb(), LayerId::L4, "shred").unwrap_err();
    assert_eq!(
        err,
        UnknownVariant {
            layer: LayerId::L4,
            variant: "shred".into()
        }
    );
}

#[test]
fn look_only_ablation_solves_nothing() {
    let kb = ablate_layer(&solved_kb(), LayerId::L4, "look_only").unwrap();
    assert!(kb.metadata.non_deployable);
    assert_eq!(
        evaluate_bank(&kb, &desk_bank(), 50)
            .unwrap()
            .metrics
            .successes,
        0
    );
}

#[test]
fn recovery_ablation_keeps_clean_rollouts_but_fails_stress() {
    let bank = desk_bank();
    let kb = ablate_layer(&solved_kb(), LayerId::L5, "disable_recovery").unwrap();
    assert!(evaluate_bank(&kb, &bank, 50).unwrap().metrics.is_perfect());
    assert!(stress_probe(&solved_kb(), &bank, 50).unwrap().success);
    assert!(!stress_probe(&kb, &bank, 50).unwrap().success);
}
