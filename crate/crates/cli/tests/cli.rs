use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use typedkb::canonical_serialize;
use typedkb::fixtures::{
    scaffold_kb, solved_kb, LIGHT_USE_DIFF, PICK_PLACE_DIFF, PROCESS_TOOL_DIFF,
};

fn typedkb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_typedkb"))
        .args(args)
        .env_remove("KINTSUGI_SEED")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join("solved.json"),
            canonical_serialize(&solved_kb()),
        )
        .unwrap();
        fs::write(
            dir.path().join("scaffold.json"),
            canonical_serialize(&scaffold_kb()),
        )
        .unwrap();
        Fixture { dir }
    }

    fn p(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

#[test]
fn validate_exit_codes() {
    let f = Fixture::new();
    let ok = typedkb(&["kb-validate", path(&f.p("solved.json"))]);
    assert_eq!(ok.status.code(), Some(0));
    assert!(stdout(&ok).contains(&format!("kb={}", solved_kb().hash())));

    let text = fs::read_to_string(f.p("solved.json")).unwrap();
    let dangling = text.replacen("\"action\": \"PUT\"", "\"action\": \"TELEPORT\"", 1);
    assert_ne!(dangling, text);
    fs::write(f.p("dangling.json"), dangling).unwrap();
    let bad = typedkb(&["kb-validate", path(&f.p("dangling.json"))]);
    assert_eq!(
        bad.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&bad.stderr)
    );

    let missing = typedkb(&["kb-validate", path(&f.p("absent.json"))]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("error code=1"));
}

#[test]
fn exec_scores_solved_and_scaffold() {
    let f = Fixture::new();
    let solved = stdout(&typedkb(&["kb-exec", path(&f.p("solved.json"))]));
    assert!(solved.contains("score=30/30"), "{solved}");
    assert!(solved.contains("seed=7") && solved.contains("editor_calls=0"));
    let scaffold = stdout(&typedkb(&["kb-exec", path(&f.p("scaffold.json"))]));
    assert!(scaffold.contains("score=0/30"), "{scaffold}");
}

#[test]
fn exec_is_independent_of_job_count() {
    let f = Fixture::new();
    let kb = f.p("solved.json");
    let a = typedkb(&[
        "kb-exec",
        path(&kb),
        "--jobs",
        "1",
        "--out",
        path(&f.p("a.jsonl")),
    ]);
    let b = typedkb(&[
        "kb-exec",
        path(&kb),
        "--jobs",
        "4",
        "--out",
        path(&f.p("b.jsonl")),
    ]);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(
        fs::read(f.p("a.jsonl")).unwrap(),
        fs::read(f.p("b.jsonl")).unwrap()
    );
}

#[test]
fn seed_env_selects_the_bank() {
    let f = Fixture::new();
    let o = Command::new(env!("CARGO_BIN_EXE_typedkb"))
        .args(["kb-exec", path(&f.p("solved.json"))])
        .env("KINTSUGI_SEED", "11")
        .output()
        .unwrap();
    assert!(stdout(&o).contains("seed=11"));
}

#[test]
fn trace_renders_the_heat_chain() {
    let f = Fixture::new();
    let traj = f.p("t.jsonl");
    typedkb(&["kb-exec", path(&f.p("solved.json")), "--out", path(&traj)]);
    let text = fs::read_to_string(&traj).unwrap();
    let at = text
        .find("\"task_id\":\"heat-")
        .expect("bank has a heat task");
    let task = text[at + 11..].split('"').next().unwrap();
    let o = typedkb(&[
        "kb-trace",
        path(&traj),
        "--kb",
        path(&f.p("solved.json")),
        "--task",
        task,
    ]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    for rule in [
        "SearchUnvisited",
        "GrabTarget",
        "GoToProcessTool",
        "ProcessHere",
        "TransportToGoal",
        "DepositHeld",
    ] {
        assert!(
            out.contains(&format!("rule={rule} ")),
            "{rule} missing:\n{out}"
        );
    }
    assert!(out.contains("bind=[skill.TAKE]"));

    let beyond = typedkb(&[
        "kb-trace",
        path(&traj),
        "--kb",
        path(&f.p("solved.json")),
        "--step",
        "500",
    ]);
    assert_eq!(beyond.status.code(), Some(2));
}

#[test]
fn trace_rejects_a_foreign_kb() {
    let f = Fixture::new();
    let traj = f.p("t.jsonl");
    typedkb(&["kb-exec", path(&f.p("solved.json")), "--out", path(&traj)]);
    let o = typedkb(&["kb-trace", path(&traj), "--kb", path(&f.p("scaffold.json"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn diff_apply_and_reject() {
    let f = Fixture::new();
    fs::write(f.p("pick.yaml"), PICK_PLACE_DIFF).unwrap();
    let o = typedkb(&[
        "diff-apply",
        path(&f.p("scaffold.json")),
        path(&f.p("pick.yaml")),
        "--out",
        path(&f.p("v1.json")),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(stdout(&o).contains("\"outcome\":\"applied\""));
    let again = typedkb(&["diff-apply", path(&f.p("v1.json")), path(&f.p("pick.yaml"))]);
    assert_eq!(again.status.code(), Some(2));
    assert!(stdout(&again).contains("rejected kb="));
}

#[test]
fn verify_gates_candidates() {
    let f = Fixture::new();
    let keep = typedkb(&[
        "verify",
        path(&f.p("scaffold.json")),
        "--candidate",
        path(&f.p("solved.json")),
    ]);
    assert_eq!(keep.status.code(), Some(0));
    assert!(stdout(&keep).contains("verdict=kept"));
    let revert = typedkb(&[
        "verify",
        path(&f.p("solved.json")),
        "--candidate",
        path(&f.p("scaffold.json")),
    ]);
    assert_eq!(revert.status.code(), Some(2));
    assert!(stdout(&revert).contains("verdict=reverted"));
    let smoke = typedkb(&["verify", path(&f.p("scaffold.json"))]);
    assert!(stdout(&smoke).contains("applied=7 rejected=7 mismatches=0"));
}

#[test]
fn scripted_loop_replays_and_audits() {
    let f = Fixture::new();
    let ed = f.p("editor");
    fs::create_dir(&ed).unwrap();
    for (i, text) in [PICK_PLACE_DIFF, LIGHT_USE_DIFF, PROCESS_TOOL_DIFF]
        .iter()
        .enumerate()
    {
        fs::write(ed.join(format!("{i}.yaml")), text).unwrap();
    }
    let run = f.p("run");
    let editor = format!("scripted:{}", path(&ed));
    let o = typedkb(&[
        "loop",
        path(&f.p("scaffold.json")),
        "--editor",
        &editor,
        "--run-dir",
        path(&run),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let out = stdout(&o);
    assert_eq!(out.matches("verdict=kept").count(), 3, "{out}");
    assert!(
        out.contains("proposals=3 accepted=3 apply_failed=0 verifier_rejected=0 eval_episodes=120")
    );
    assert!(out.contains("stop=focused_solved"));

    let final_kb = run.join("kb.v3");
    let exec = stdout(&typedkb(&["kb-exec", path(&final_kb)]));
    assert!(exec.contains("score=30/30"));

    let budget = typedkb(&["budget", path(&run)]);
    assert_eq!(budget.status.code(), Some(0));
    assert!(stdout(&budget).contains("kept=3 checked=3 violations=0"));
}

#[test]
fn budget_flags_tampered_trajectories() {
    let f = Fixture::new();
    let ed = f.p("editor");
    fs::create_dir(&ed).unwrap();
    fs::write(ed.join("0.yaml"), PICK_PLACE_DIFF).unwrap();
    let run = f.p("run");
    let editor = format!("scripted:{}", path(&ed));
    typedkb(&[
        "loop",
        path(&f.p("scaffold.json")),
        "--editor",
        &editor,
        "--run-dir",
        path(&run),
    ]);
    for entry in fs::read_dir(run.join("traj")).unwrap() {
        let p = entry.unwrap().path();
        let text = fs::read_to_string(&p).unwrap();
        fs::write(&p, text.replace("\"success\":true", "\"success\":false")).unwrap();
    }
    let o = typedkb(&["budget", path(&run)]);
    assert_eq!(o.status.code(), Some(2), "{}", stdout(&o));
}

#[test]
fn null_and_silent_editors_stop_cleanly() {
    let f = Fixture::new();
    let o = typedkb(&[
        "loop",
        path(&f.p("scaffold.json")),
        "--editor",
        "null",
        "--run-dir",
        path(&f.p("null")),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("proposals=0") && stdout(&o).contains("stop=no_proposal"));

    let o = typedkb(&[
        "loop",
        path(&f.p("scaffold.json")),
        "--editor",
        "external:cat > /dev/null",
        "--run-dir",
        path(&f.p("ext")),
        "--max-iters",
        "2",
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(stdout(&o).contains("final=0/30"));

    let bad = typedkb(&[
        "loop",
        path(&f.p("scaffold.json")),
        "--editor",
        "oracle",
        "--run-dir",
        path(&f.p("x")),
    ]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn ablation_rows() {
    let f = Fixture::new();
    let kb = path(&f.p("solved.json")).to_string();
    let row = |layer: &str, variant: &str| {
        stdout(&typedkb(&[
            "ablate",
            &kb,
            "--layer",
            layer,
            "--variant",
            variant,
        ]))
    };
    assert!(row("L4", "look_only").contains("exec=0/30"));
    let l3 = row("L3", "remove_effects");
    assert!(
        l3.contains("exec=30/30") && l3.contains("effect_probe=0/10"),
        "{l3}"
    );
    let l7 = row("L7", "remove_goals");
    assert!(l7.contains("plan=0/30"), "{l7}");
    let unknown = typedkb(&["ablate", &kb, "--layer", "L4", "--variant", "shred"]);
    assert_eq!(unknown.status.code(), Some(2));
}

#[test]
fn bank_gen_round_trips() {
    let f = Fixture::new();
    let bank = f.p("bank.json");
    let o = typedkb(&[
        "bank-gen",
        "--seed",
        "5",
        "--mix",
        "pick=2,cool=1",
        "--out",
        path(&bank),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("tasks=3"));
    let exec = stdout(&typedkb(&[
        "kb-exec",
        path(&f.p("solved.json")),
        "--bank",
        path(&bank),
    ]));
    assert!(
        exec.contains("score=3/3") && exec.contains("seed=5"),
        "{exec}"
    );
    let bad = typedkb(&["bank-gen", "--mix", "juggle=2", "--out", path(&bank)]);
    assert_eq!(bad.status.code(), Some(1));
}
