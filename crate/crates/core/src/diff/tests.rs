use super::*;
use crate::fixtures::{replay_diffs, scaffold_kb, solved_kb, SMOKE_SUITE};

fn diff(text: &str) -> KbDiff {
    parse_diff(text).unwrap()
}

fn rule_diff(name: &str, cond: &str, priority: Option<i64>) -> KbDiff {
    let priority = priority
        .map(|p| format!("\n    priority: {p}"))
        .unwrap_or_default();
    diff(&format!(
        "layer: L4\nkey: rule.{name}\nop: add_rule\npath: procedural.rules\nrationale: r\nexpected_effect: e\n\
         payload:\n  rule:\n    name: {name}\n    cond: {cond}\n    action: LOOK{priority}\n"
    ))
}

#[test]
fn smoke_fixtures_behave_as_labelled() {
    let kb = scaffold_kb();
    for f in SMOKE_SUITE {
        let applied = parse_diff(f.text)
            .ok()
            .and_then(|d| apply_diff(&kb, &d).ok());
        assert_eq!(applied.is_some(), f.valid, "{}", f.name);
    }
}

#[test]
fn apply_leaves_input_untouched_and_bumps_version() {
    let kb = scaffold_kb();
    let hash = kb.hash();
    let (new, audit) = apply_diff(&kb, &rule_diff("Peek", "task_bound", Some(3))).unwrap();
    assert_eq!(kb.hash(), hash);
    assert_eq!(new.version, kb.version + 1);
    let commit = new.metadata.commits.last().unwrap();
    assert_eq!(commit.op, "add_rule");
    assert_eq!(commit.key, "rule.Peek");
    assert_eq!(audit.outcome, AuditOutcome::Applied);
    assert_eq!(audit.before_snippet.as_deref(), Some("null"));
    assert!(audit.after_snippet.unwrap().contains("Peek"));
}

#[test]
fn implicit_priority_goes_above_existing_rules() {
    let kb = solved_kb();
    let max = kb
        .all_rules()
        .iter()
        .map(|(_, _, r)| r.priority)
        .max()
        .unwrap();
    let (new, _) = apply_diff(&kb, &rule_diff("Peek", "task_bound", None)).unwrap();
    let (_, _, r) = new
        .all_rules()
        .into_iter()
        .find(|(_, _, r)| r.name == "Peek")
        .unwrap();
    assert_eq!(r.priority, max + 10);
    assert!(
        !rule_diff("Peek", "task_bound", None).to_document()["payload"]["rule"]
            .as_object()
            .unwrap()
            .contains_key("priority")
    );
}

#[test]
fn duplicate_rule_name_rejected() {
    let rej = apply_diff(
        &scaffold_kb(),
        &rule_diff("Fallback", "task_bound", Some(1)),
    )
    .unwrap_err();
    assert_eq!(rej.kind, RejectionKind::Payload);
    assert!(rej.reason.contains("duplicate"), "{}", rej.reason);
    assert!(matches!(rej.audit.outcome, AuditOutcome::ApplyFailed(_)));
}

#[test]
fn unknown_predicate_in_guard_rejected() {
    let rej = apply_diff(
        &scaffold_kb(),
        &rule_diff("Peek", "nonexistent_pred", Some(1)),
    )
    .unwrap_err();
    assert!(
        matches!(rej.kind, RejectionKind::Payload | RejectionKind::Reference),
        "{rej:?}"
    );
}

#[test]
fn op_outside_its_layer_rejected() {
    let mut d = rule_diff("Peek", "task_bound", Some(1));
    d.layer = LayerId::L2;
    let rej = apply_diff(&scaffold_kb(), &d).unwrap_err();
    assert_eq!(rej.kind, RejectionKind::Admission);
    assert!(!validate_diff(&scaffold_kb(), &d).is_ok());
}

#[test]
fn modify_of_missing_rule_is_a_path_error() {
    let d = diff(
        "layer: L4\nkey: rule.Nope\nop: modify_priority\npath: procedural.rules.Nope.priority\n\
         rationale: r\nexpected_effect: e\npayload:\n  priority: 3\n",
    );
    assert_eq!(
        apply_diff(&scaffold_kb(), &d).unwrap_err().kind,
        RejectionKind::Path
    );
}

#[test]
fn wrong_container_path_rejected() {
    let mut d = rule_diff("Peek", "task_bound", Some(1));
    d.path = "procedural.schemas".into();
    assert_eq!(
        apply_diff(&scaffold_kb(), &d).unwrap_err().kind,
        RejectionKind::Path
    );
}

#[test]
fn document_round_trip() {
    for d in replay_diffs() {
        let back = diff_from_json(&d.to_document()).unwrap();
        assert_eq!(back, d);
        assert_eq!(back.digest(), d.digest());
        assert_eq!(parse_diff(&d.to_json()).unwrap(), d);
    }
}

#[test]
fn unknown_top_level_field_rejected() {
    let mut doc = rule_diff("Peek", "task_bound", Some(1)).to_document();
    doc["comment"] = json!("hi");
    assert_eq!(diff_from_json(&doc).unwrap_err().field, "comment");
}

#[test]
fn replay_reaches_solved_kb() {
    let mut kb = scaffold_kb();
    for (i, d) in replay_diffs().iter().enumerate() {
        kb = apply_diff(&kb, d).unwrap().0;
        assert_eq!(kb.version, i as u64 + 1);
    }
    assert_eq!(kb.hash(), solved_kb().hash());
    assert!(resolve_references(&kb).is_empty());
}

#[test]
fn replay_diffs_do_not_apply_twice() {
    let kb = solved_kb();
    for d in replay_diffs() {
        assert!(apply_diff(&kb, &d).is_err(), "{}", d.key);
    }
}

#[test]
fn admission_matrix_covers_every_op() {
    let m = admission_matrix();
    for op in Op::ALL {
        assert!(m.values().flatten().any(|(o, _)| *o == op), "{op}");
        assert_eq!(op.as_str().parse::<Op>().unwrap(), op);
    }
    assert!(admits(LayerId::L4, Op::AddRule));
    assert!(!admits(LayerId::L4, Op::AddPredicate));
}
