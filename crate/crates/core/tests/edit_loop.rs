use std::fs;
use std::path::Path;
use std::time::Duration;

use typedkb::edit::*;
use typedkb::env::{desk_bank, household_contract, TaskBank};
use typedkb::exec::run_bank;
use typedkb::fixtures::*;
use typedkb::verify::Verdict;
use typedkb::{apply_diff, KnowledgeBase};

fn config(max_iters: usize, run_dir: Option<&Path>) -> LoopConfig {
    LoopConfig {
        max_iters,
        horizon: 50,
        health_declared: true,
        summary_seed: 7,
        run_dir: run_dir.map(Path::to_path_buf),
    }
}

fn replay_editor() -> ScriptedEditor {
    let items = [
        ("1_pick", PICK_PLACE_DIFF),
        ("2_light", LIGHT_USE_DIFF),
        ("3_process", PROCESS_TOOL_DIFF),
    ]
    .iter()
    .map(|(n, t)| (n.to_string(), t.to_string()))
    .collect();
    ScriptedEditor::from_texts("replay", items)
}

fn run(
    kb: &KnowledgeBase,
    editor: &mut dyn Editor,
    bank: &TaskBank,
    cfg: &LoopConfig,
) -> LoopOutcome {
    run_loop(kb, &household_contract(), editor, bank, bank, cfg).unwrap()
}

fn verdicts(m: &RunManifest) -> Vec<Verdict> {
    m.iterations
        .iter()
        .map(|i| i.decision.as_ref().unwrap().verdict)
        .collect()
}

#[test]
fn summary_samples_at_most_five_failures() {
    let (round1, _) = apply_diff(&scaffold_kb(), &replay_diffs()[0]).unwrap();
    let records = run_bank(&round1, &desk_bank(), 50).unwrap();
    let s = summarize(&records, 3);
    assert_eq!((s.successes, s.total), (10, 30));
    assert_eq!(s.failures.len(), SUMMARY_FAILURES);
    assert!(s
        .failures
        .iter()
        .all(|f| f.outcome != typedkb::exec::Outcome::Success));
    assert_eq!(s.families.values().map(|(_, t)| t).sum::<usize>(), 30);
    assert_eq!(summarize(&records, 3), s);
    assert!(serde_json::to_string(&s).unwrap().len() <= SUMMARY_BYTE_BUDGET);
}

#[test]
fn summary_of_successes_has_no_failures() {
    let records = run_bank(&solved_kb(), &desk_bank(), 50).unwrap();
    let s = summarize(&records, 0);
    assert_eq!(s.successes, 30);
    assert!(s.failures.is_empty());
    assert!(s.health.mean_success_steps > 0.into());
}

#[test]
fn summary_of_nothing_is_empty() {
    let s = summarize(&[], 0);
    assert_eq!(s.total, 0);
    assert!(s.failures.is_empty() && s.families.is_empty() && s.fired_rules.is_empty());
}

#[test]
fn scripted_replay_solves_the_bank() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &scaffold_kb(),
        &mut replay_editor(),
        &desk_bank(),
        &config(10, Some(dir.path())),
    );
    assert_eq!(verdicts(&out.manifest), vec![Verdict::Kept; 3]);
    assert_eq!(out.manifest.stop_reason, "focused_solved");
    assert_eq!(
        out.manifest.final_focused.as_ref().unwrap().score(),
        "30/30"
    );
    assert_eq!(out.kb.version, 3);
    let budget = record_budget(&out.manifest);
    assert_eq!(
        (
            budget.proposals,
            budget.accepted,
            budget.apply_failed,
            budget.verifier_rejected
        ),
        (3, 3, 0, 0)
    );
    assert_eq!(budget.eval_episodes, 120);
    assert!(!budget.result_only);

    let experience = out.kb.layer_entries(typedkb::LayerId::L6).count();
    assert_eq!(experience, 3);
    for f in [
        CONTRACT_FILE,
        GATES_FILE,
        BUDGET_FILE,
        MANIFEST_FILE,
        "kb.v0",
        "kb.v3",
    ] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let audit = audit_run(dir.path()).unwrap();
    assert_eq!((audit.kept, audit.checked), (3, 3));
    assert!(audit.violations.is_empty(), "{:?}", audit.violations);
    let snapshot =
        typedkb::parse_kb(&fs::read_to_string(snapshot_path(dir.path(), 3)).unwrap()).unwrap();
    assert_eq!(snapshot.hash(), out.kb.hash());
}

#[test]
fn audit_detects_tampered_trajectories() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &scaffold_kb(),
        &mut replay_editor(),
        &desk_bank(),
        &config(10, Some(dir.path())),
    );
    let d = out.manifest.iterations[0].decision.clone().unwrap();
    let after = &d.focused.unwrap().after;
    let path = trajectory_path(dir.path(), &after.bank, &after.kb_hash);
    let text =
        fs::read_to_string(&path)
            .unwrap()
            .replacen("\"success\":true", "\"success\":false", 1);
    fs::write(&path, text).unwrap();
    assert!(!audit_run(dir.path()).unwrap().violations.is_empty());
}

#[test]
fn malformed_editor_never_changes_the_kb() {
    let items = (0..4)
        .map(|i| (format!("bad{i}"), "layer: L4\nop: add_rule\n".to_string()))
        .collect();
    let mut editor = ScriptedEditor::from_texts("bad", items);
    let kb = scaffold_kb();
    let out = run(&kb, &mut editor, &desk_bank(), &config(4, None));
    assert_eq!(verdicts(&out.manifest), vec![Verdict::ApplyFailed; 4]);
    assert_eq!(out.kb.hash(), kb.hash());
    assert_eq!(out.kb.version, kb.version);
    assert!(out
        .manifest
        .iterations
        .iter()
        .all(|i| i.hash_before == i.hash_after));
    assert_eq!(record_budget(&out.manifest).apply_failed, 4);
}

#[test]
fn applier_rejection_is_apply_failed() {
    let items = vec![("dup".to_string(), PICK_PLACE_DIFF.to_string())];
    let kb = apply_diff(&scaffold_kb(), &replay_diffs()[0]).unwrap().0;
    let out = run(
        &kb,
        &mut ScriptedEditor::from_texts("dup", items),
        &desk_bank(),
        &config(1, None),
    );
    assert_eq!(verdicts(&out.manifest), vec![Verdict::ApplyFailed]);
    assert_eq!(out.kb.hash(), kb.hash());
}

#[test]
fn zero_iterations_return_the_initial_kb() {
    let kb = scaffold_kb();
    let out = run(&kb, &mut replay_editor(), &desk_bank(), &config(0, None));
    assert!(out.manifest.iterations.is_empty());
    assert_eq!(out.manifest.final_hash, out.manifest.initial_hash);
    assert_eq!(out.kb.hash(), kb.hash());
}

#[test]
fn null_editor_stops_at_once() {
    let out = run(
        &scaffold_kb(),
        &mut NullEditor,
        &desk_bank(),
        &config(5, None),
    );
    assert!(out.manifest.iterations.is_empty());
    assert_eq!(out.manifest.stop_reason, "no_proposal");
    assert_eq!(out.manifest.budget.attempts, 0);
}

#[test]
fn kept_and_reverted_are_counted() {
    let neutral = SMOKE_SUITE
        .iter()
        .find(|f| f.name == "05_add_rule.valid")
        .unwrap()
        .text;
    let items = vec![
        ("1".to_string(), PICK_PLACE_DIFF.to_string()),
        ("2".to_string(), neutral.to_string()),
        ("3".to_string(), LIGHT_USE_DIFF.to_string()),
    ];
    let kb = scaffold_kb();
    let out = run(
        &kb,
        &mut ScriptedEditor::from_texts("mixed", items),
        &desk_bank(),
        &config(3, None),
    );
    assert_eq!(
        verdicts(&out.manifest),
        vec![Verdict::Kept, Verdict::Reverted, Verdict::Kept]
    );
    let b = record_budget(&out.manifest);
    assert_eq!((b.proposals, b.accepted, b.verifier_rejected), (3, 2, 1));
    let reverted = &out.manifest.iterations[1];
    assert_eq!(reverted.hash_before, reverted.hash_after);
}

#[test]
fn missing_gate_record_marks_result_only() {
    let out = run(
        &scaffold_kb(),
        &mut replay_editor(),
        &desk_bank(),
        &config(10, None),
    );
    let mut m = out.manifest.clone();
    m.iterations[1].decision = None;
    assert!(record_budget(&m).result_only);
    assert!(!record_budget(&out.manifest).result_only);
}

#[test]
fn scripted_editor_reads_a_directory_in_order() {
    let dir = tempfile::tempdir().unwrap();
    for (i, t) in [PICK_PLACE_DIFF, LIGHT_USE_DIFF, PROCESS_TOOL_DIFF]
        .iter()
        .enumerate()
    {
        fs::write(dir.path().join(format!("{i}.yaml")), t).unwrap();
    }
    fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
    let mut e = ScriptedEditor::from_dir(dir.path()).unwrap();
    assert_eq!(e.remaining(), 3);
    let req = request();
    let keys: Vec<String> = (0..4)
        .map(|_| {
            e.propose(&req)
                .unwrap()
                .diff
                .map(|d| d.key)
                .unwrap_or_default()
        })
        .collect();
    let want: Vec<String> = replay_diffs()
        .into_iter()
        .map(|d| d.key)
        .chain([String::new()])
        .collect();
    assert_eq!(keys, want);
}

fn request() -> EditorRequest {
    EditorRequest {
        attempt: 0,
        summary: summarize(&[], 0),
        contract: household_contract(),
        kb_text: typedkb::canonical_serialize(&scaffold_kb()),
        allowed_ops: Default::default(),
    }
}

fn framed(body: &serde_json::Value) -> Vec<u8> {
    let mut out = Vec::new();
    write_frame(&mut out, body).unwrap();
    out
}

fn script(dir: &Path, response: &[u8]) -> String {
    let path = dir.join("response.frame");
    fs::write(&path, response).unwrap();
    format!("cat > /dev/null; cat '{}'", path.display())
}

#[test]
fn frames_round_trip() {
    let body = serde_json::json!({ "kind": "no_proposal", "text": "π" });
    assert_eq!(read_frame(&framed(&body)[..]).unwrap(), body);
    assert!(read_frame(&b"12\n{}"[..]).is_err());
    assert!(read_frame(&b"x\n{}"[..]).is_err());
}

#[test]
fn external_editor_returns_a_diff() {
    let dir = tempfile::tempdir().unwrap();
    let diff = open_goal_recep_diff();
    let cmd = script(
        dir.path(),
        &framed(&serde_json::json!({ "kind": "diff", "layer": "L4", "diff": diff.to_document() })),
    );
    let p = ExternalEditor::new(&cmd).propose(&request()).unwrap();
    assert_eq!(p.diff, Some(diff));
    assert_eq!(p.layer_hypothesis, Some(typedkb::LayerId::L4));

    let cmd = script(
        dir.path(),
        &framed(&serde_json::json!({ "kind": "diff", "diff": OPEN_GOAL_RECEP_DIFF })),
    );
    assert_eq!(
        ExternalEditor::new(&cmd).propose(&request()).unwrap().diff,
        Some(open_goal_recep_diff())
    );
}

#[test]
fn external_editor_sees_the_request() {
    let dir = tempfile::tempdir().unwrap();
    let seen = dir.path().join("seen");
    let reply = dir.path().join("reply");
    fs::write(
        &reply,
        framed(&serde_json::json!({ "kind": "no_proposal" })),
    )
    .unwrap();
    let cmd = format!("cat > '{}'; cat '{}'", seen.display(), reply.display());
    let p = ExternalEditor::new(&cmd).propose(&request()).unwrap();
    assert!(p.diff.is_none());
    let got = read_frame(fs::File::open(&seen).unwrap()).unwrap();
    assert_eq!(got["kind"], "propose");
    assert!(got["request"]["kb_text"]
        .as_str()
        .unwrap()
        .contains("Fallback"));
}

#[test]
fn external_editor_invalid_document_is_a_protocol_error() {
    let dir = tempfile::tempdir().unwrap();
    let cmd = script(
        dir.path(),
        &framed(&serde_json::json!({ "kind": "diff", "diff": { "op": "delete_everything" } })),
    );
    let err = ExternalEditor::new(&cmd).propose(&request()).unwrap_err();
    assert!(matches!(err, EditorError::Protocol(_)));
    let mut editor = ExternalEditor::new(&cmd);
    let out = run(&scaffold_kb(), &mut editor, &desk_bank(), &config(2, None));
    assert_eq!(verdicts(&out.manifest), vec![Verdict::ApplyFailed; 2]);
    assert_eq!(out.manifest.budget.apply_failed, 2);
}

#[test]
fn external_editor_rejects_diff_batches() {
    let dir = tempfile::tempdir().unwrap();
    let doc = open_goal_recep_diff().to_document();
    let cmd = script(
        dir.path(),
        &framed(&serde_json::json!({ "kind": "diff", "diff": [doc.clone(), doc] })),
    );
    let err = ExternalEditor::new(&cmd).propose(&request()).unwrap_err();
    assert_eq!(err, EditorError::Protocol("one diff per iteration".into()));
}

#[test]
fn external_editor_times_out() {
    let mut e = ExternalEditor::new("sleep 5").with_timeout(Duration::from_millis(200));
    assert_eq!(e.propose(&request()).unwrap_err(), EditorError::Timeout);
    let out = run(&scaffold_kb(), &mut e, &desk_bank(), &config(3, None));
    assert!(out.manifest.iterations.is_empty());
    assert_eq!(out.manifest.stop_reason, "no_proposal");
}

#[test]
fn editor_calls_are_counted() {
    let before = editor_calls();
    run(
        &scaffold_kb(),
        &mut replay_editor(),
        &desk_bank(),
        &config(10, None),
    );
    assert!(editor_calls() >= before + 3);
}
