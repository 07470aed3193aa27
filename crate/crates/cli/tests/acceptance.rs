//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use typedkb::ablate::{ablate_layer, full_row, AblationRow};
use typedkb::edit::{trajectory_path, LoopOutcome};
use typedkb::env::{desk_bank, household_contract, solve, Family, TaskBank, World};
use typedkb::exec::{read_trajectories, run_bank, TrajectoryRecord};
use typedkb::fixtures::{
    scaffold_kb, solved_kb, LIGHT_USE_DIFF, PICK_PLACE_DIFF, PROCESS_TOOL_DIFF,
};
use typedkb::verify::Verdict;
use typedkb::{
    audit_run, canonical_serialize, editor_calls, fuzz_apply, record_budget, run_loop, FuzzConfig,
    FuzzEditor, LayerId, LoopConfig, ScriptedEditor,
};

const H: usize = 50;

struct Report {
    lines: Vec<String>,
    failed: usize,
}

impl Report {
    fn record(&mut self, n: usize, ok: bool, detail: String) {
        let line = format!(
            "criterion {n} {} {detail}",
            if ok { "PASS" } else { "FAIL" }
        );
        println!("{line}");
        self.failed += !ok as usize;
        self.lines.push(line);
    }
}

fn group(f: Family) -> &'static str {
    match f {
        Family::Pick => "pick",
        Family::Light => "light",
        _ => "process",
    }
}

fn per_group(
    bank: &TaskBank,
    records: &[TrajectoryRecord],
) -> BTreeMap<&'static str, (usize, usize)> {
    let family: BTreeMap<&str, Family> = bank
        .tasks
        .iter()
        .map(|t| (t.id.as_str(), t.family))
        .collect();
    let mut out = BTreeMap::new();
    for r in records {
        let e = out
            .entry(group(family[r.task_id.as_str()]))
            .or_insert((0, 0));
        e.0 += r.success as usize;
        e.1 += 1;
    }
    out
}

fn load(path: &Path) -> Vec<TrajectoryRecord> {
    read_trajectories(BufReader::new(fs::File::open(path).unwrap()))
        .unwrap()
        .1
}

fn replay(bank: &TaskBank, dir: &Path) -> LoopOutcome {
    let texts = [
        ("pick_place", PICK_PLACE_DIFF),
        ("light_use", LIGHT_USE_DIFF),
        ("process_tool", PROCESS_TOOL_DIFF),
    ];
    let mut editor = ScriptedEditor::from_texts(
        "replay",
        texts
            .iter()
            .map(|(n, t)| (n.to_string(), t.to_string()))
            .collect(),
    );
    let config = LoopConfig {
        max_iters: 10,
        horizon: H,
        health_declared: false,
        summary_seed: 0,
        run_dir: Some(dir.into()),
    };
    run_loop(
        &scaffold_kb(),
        &household_contract(),
        &mut editor,
        bank,
        bank,
        &config,
    )
    .unwrap()
}

fn criterion_1(r: &mut Report, bank: &TaskBank, dir: &Path, out: &LoopOutcome) {
    let start = Instant::now();
    let oracle: BTreeMap<&str, usize> = bank
        .tasks
        .iter()
        .filter(|t| solve(&World::new((*t).clone()), H).is_some())
        .fold(BTreeMap::new(), |mut m, t| {
            *m.entry(group(t.family)).or_default() += 1;
            m
        });
    let m = &out.manifest;
    let mut rounds = vec![per_group(
        bank,
        &load(&trajectory_path(dir, &bank.name, &m.initial_hash)),
    )];
    let mut ok = m.iterations.len() == 3;
    for it in &m.iterations {
        let d = it.decision.as_ref().unwrap();
        ok &= d.verdict == Verdict::Kept;
        rounds.push(per_group(
            bank,
            &load(&trajectory_path(dir, &bank.name, &d.candidate_hash)),
        ));
    }
    let order = ["pick", "light", "process"];
    for (i, round) in rounds.iter().enumerate() {
        for (g, name) in order.iter().enumerate() {
            let (s, n) = round.get(name).copied().unwrap_or((0, 0));
            let want = if g < i {
                oracle.get(name).copied().unwrap_or(0)
            } else {
                0
            };
            ok &= s == want;
            if i > 0 {
                ok &= s >= rounds[i - 1].get(name).map_or(0, |p| p.0);
            }
            ok &= n
                == bank
                    .tasks
                    .iter()
                    .filter(|t| group(t.family) == *name)
                    .count();
        }
    }
    let solvable: usize = oracle.values().sum();
    let (initial, last) = (
        m.initial_focused.as_ref().unwrap(),
        m.final_focused.as_ref().unwrap(),
    );
    ok &= solvable == bank.len() && initial.successes == 0 && last.successes as usize == solvable;
    ok &= fs::read_to_string(dir.join("kb.v3")).unwrap() == canonical_serialize(&out.kb);
    let shown: Vec<String> = rounds
        .iter()
        .map(|r| {
            order
                .iter()
                .map(|g| format!("{g}={}/{}", r[g].0, r[g].1))
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect();
    ok &= start.elapsed().as_secs() < 30;
    r.record(
        1,
        ok,
        format!(
            "{} -> {} rounds [{}] oracle_solvable={solvable}",
            initial.score(),
            last.score(),
            shown.join(" | ")
        ),
    );
}

fn criterion_2(r: &mut Report) {
    let start = Instant::now();
    let report = fuzz_apply(
        &[scaffold_kb(), solved_kb()],
        &FuzzConfig {
            cases: 1000,
            ..FuzzConfig::default()
        },
    );
    let secs = start.elapsed().as_secs_f64();
    let ok = report.cases >= 1000
        && report.corrupted * 10 >= report.cases * 4
        && report.applied > 0
        && report.violations.is_empty()
        && secs < 20.0;
    r.record(
        2,
        ok,
        format!(
            "cases={} corrupted={} applied={} rejected={} violations={} secs={secs:.1}",
            report.cases,
            report.corrupted,
            report.applied,
            report.rejected(),
            report.violations.len()
        ),
    );
}

fn criterion_3(r: &mut Report, fuzz_bank: &TaskBank, dir: &Path) -> LoopOutcome {
    let report = fuzz_apply(
        &[scaffold_kb(), solved_kb()],
        &FuzzConfig {
            cases: 400,
            seed: 3,
            ..FuzzConfig::default()
        },
    );
    let mut violations = report.violations.len();

    let kb0 = scaffold_kb();
    let mut editor = FuzzEditor::new(11, 0.5);
    let config = LoopConfig {
        max_iters: 150,
        horizon: H,
        health_declared: true,
        summary_seed: 0,
        run_dir: Some(dir.into()),
    };
    let out = run_loop(
        &kb0,
        &household_contract(),
        &mut editor,
        fuzz_bank,
        fuzz_bank,
        &config,
    )
    .unwrap();
    let mut reverted = 0;
    let mut loop_rejected = 0;
    let mut deployed = kb0.hash();
    for it in &out.manifest.iterations {
        let verdict = it.decision.as_ref().map(|d| d.verdict);
        if verdict == Some(Verdict::Kept) {
            deployed = it.hash_after.clone();
            continue;
        }
        match verdict {
            Some(Verdict::Reverted) => reverted += 1,
            _ => loop_rejected += 1,
        }
        if it.hash_before != deployed || it.hash_after != deployed {
            violations += 1;
        }
    }
    violations += (out.kb.hash() != deployed) as usize;
    let total = report.rejected() + reverted + loop_rejected;
    r.record(
        3,
        total >= 200 && reverted > 0 && violations == 0,
        format!(
            "rejected={total} (applier={} loop_apply_failed={loop_rejected} verifier_reverted={reverted}) violations={violations}",
            report.rejected()
        ),
    );
    out
}

fn criterion_4(r: &mut Report, dirs: &[&Path]) {
    let mut kept = 0;
    let mut checked = 0;
    let mut violations = Vec::new();
    for dir in dirs {
        match audit_run(dir) {
            Ok(a) => {
                kept += a.kept;
                checked += a.checked;
                violations.extend(a.violations);
            }
            Err(e) => violations.push(e.to_string()),
        }
    }
    r.record(
        4,
        kept > 0 && checked == kept && violations.is_empty(),
        format!(
            "kept={kept} rechecked={checked} violations={}",
            violations.len()
        ),
    );
}

fn kb_exec(kb: &Path, jobs: usize, out: &Path) -> String {
    let o = Command::new(env!("CARGO_BIN_EXE_typedkb"))
        .arg("kb-exec")
        .arg(kb)
        .args(["--bank", "desk", "--jobs", &jobs.to_string(), "--out"])
        .arg(out)
        .env_remove("KINTSUGI_SEED")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn criteria_5_6(r: &mut Report, tmp: &Path) {
    let kb = tmp.join("solved.kb.json");
    fs::write(&kb, canonical_serialize(&solved_kb())).unwrap();
    let runs: Vec<(String, Vec<u8>)> = [(1, "a"), (1, "b"), (1, "c"), (4, "d")]
        .iter()
        .map(|(jobs, name)| {
            let path = tmp.join(format!("{name}.traj.jsonl"));
            let stdout = kb_exec(&kb, *jobs, &path);
            (stdout, fs::read(&path).unwrap())
        })
        .collect();
    let identical = runs.iter().all(|run| *run == runs[0]);
    let calls_before = editor_calls();
    let in_process = run_bank(&solved_kb(), &desk_bank(), H).unwrap();
    let in_process_calls = editor_calls() - calls_before;
    r.record(
        5,
        identical && !runs[0].1.is_empty(),
        format!(
            "runs=4 (jobs 1,1,1,4) identical_trajectories_and_metrics={identical} bytes={}",
            runs[0].1.len()
        ),
    );
    let cli_zero = runs
        .iter()
        .all(|(stdout, _)| stdout.contains(" editor_calls=0"));
    r.record(
        6,
        cli_zero && in_process_calls == 0 && in_process.len() == 30,
        format!("cli_editor_calls_zero={cli_zero} in_process_delta={in_process_calls}"),
    );
}

fn criterion_7(r: &mut Report, bank: &TaskBank) {
    let kb = solved_kb();
    let full = full_row(&kb, bank, H).unwrap();
    let row = |layer, variant| {
        let ablated = ablate_layer(&kb, layer, variant).unwrap();
        let row = AblationRow::measure(&kb, &ablated, Some(layer), variant, bank, H).unwrap();
        println!("  {}", row.to_line());
        row
    };
    println!("  {}", full.to_line());
    let l1 = row(LayerId::L1, "all_false");
    let l4 = row(LayerId::L4, "look_only");
    let l7 = row(LayerId::L7, "remove_goals");
    let l5 = row(LayerId::L5, "disable_recovery");
    let l3 = row(LayerId::L3, "remove_effects");
    let checks = [
        ("L1", l1.exec.0 == 0),
        ("L4", l4.exec.0 == 0),
        ("L7", l7.plan.0 == 0 && l7.exec.0 * 2 <= full.exec.0),
        (
            "L5",
            l5.exec == full.exec && full.stress_probe.0 == 1 && l5.stress_probe.0 == 0,
        ),
        (
            "L3",
            l3.exec == full.exec && l3.effect_probe.0 == 0 && full.effect_probe.0 > 0,
        ),
    ];
    let shown: Vec<String> = checks
        .iter()
        .map(|(l, ok)| format!("{l}={}", if *ok { "ok" } else { "no" }))
        .collect();
    r.record(
        7,
        checks.iter().all(|c| c.1),
        format!(
            "full_exec={}/{} {}",
            full.exec.0,
            full.exec.1,
            shown.join(" ")
        ),
    );
}

fn criterion_8(r: &mut Report, bank: &TaskBank, out: &LoopOutcome) {
    let b = record_budget(&out.manifest);
    let want = (out.manifest.iterations.len() as u64 + 1) * bank.len() as u64;
    let ok = b.proposals == 3
        && b.accepted == 3
        && b.apply_failed == 0
        && b.verifier_rejected == 0
        && b.eval_episodes == want
        && !b.result_only;
    r.record(
        8,
        ok,
        format!(
            "proposals={} accepted={} apply_failed={} verifier_rejected={} eval_episodes={} expected={want}",
            b.proposals, b.accepted, b.apply_failed, b.verifier_rejected, b.eval_episodes
        ),
    );
}

#[test]
fn acceptance_criteria() {
    let tmp = tempfile::tempdir().unwrap();
    let bank = desk_bank();
    let mut r = Report {
        lines: Vec::new(),
        failed: 0,
    };

    let replay_dir = tmp.path().join("replay");
    let replayed = replay(&bank, &replay_dir);
    criterion_1(&mut r, &bank, &replay_dir, &replayed);
    criterion_2(&mut r);
    let mut fuzz_bank = bank.clone();
    fuzz_bank.name = "fuzz".into();
    fuzz_bank.tasks = bank.tasks.iter().step_by(6).cloned().collect();
    let fuzz_dir = tmp.path().join("fuzz");
    criterion_3(&mut r, &fuzz_bank, &fuzz_dir);
    criterion_4(&mut r, &[&replay_dir, &fuzz_dir]);
    criteria_5_6(&mut r, tmp.path());
    criterion_7(&mut r, &bank);
    criterion_8(&mut r, &bank, &replayed);

    assert_eq!(r.lines.len(), 8);
    assert_eq!(r.failed, 0, "{}", r.lines.join("\n"));
}
