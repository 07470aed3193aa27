//! Operator CLI for typed KB policies.
//!
//! Exit codes: 0 success, 1 I/O or usage error, 2 diagnostics (invalid KB,
//! rejected diff, reverted candidate, failed audit).

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use typedkb::ablate::{ablate_layer, full_row, variants, AblationRow};
use typedkb::edit::{audit_run, editor_calls, snapshot_path, ExternalEditor, MANIFEST_FILE};
use typedkb::env::{desk_bank, generate_bank, household_contract, Family, TaskBank};
use typedkb::exec::{read_trajectories, run_bank, write_trajectories, Role, TrajectoryHeader};
use typedkb::fixtures::SMOKE_SUITE;
use typedkb::verify::{smoke_apply, smoke_execute, BankMetrics, Verdict, SMOKE_EPISODES};
use typedkb::{
    accept, apply_diff, canonical_serialize, parse_diff, parse_kb, record_budget, run_loop,
    type_check_kb, Editor, KnowledgeBase, LayerId, LoopConfig, NullEditor, RunManifest,
    ScriptedEditor,
};

const DEFAULT_SEED: u64 = 7;
const DEFAULT_HORIZON: usize = typedkb::env::DEFAULT_HORIZON;

#[derive(Parser)]
#[command(
    name = "typedkb",
    version,
    about = "Validate, run, edit and audit typed KB policies"
)]
struct Cli {
    /// Default seed for generated banks.
    #[arg(long, global = true, env = "KINTSUGI_SEED", default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse, type-check and reference-check a KB file.
    KbValidate { kb: PathBuf },
    /// Run a KB on every task of a bank.
    KbExec {
        kb: PathBuf,
        /// Bank file, or `desk` for the built-in desk bank.
        #[arg(long, default_value = "desk")]
        bank: String,
        #[arg(long, default_value_t = DEFAULT_HORIZON)]
        horizon: usize,
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Trajectory file to write.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render decision traces from a trajectory file.
    KbTrace {
        trajectories: PathBuf,
        /// KB the trajectories were produced with.
        #[arg(long)]
        kb: PathBuf,
        /// Task id; defaults to the first episode.
        #[arg(long)]
        task: Option<String>,
        #[arg(long)]
        step: Option<usize>,
    },
    /// Apply one diff document to a KB.
    DiffApply {
        kb: PathBuf,
        diff: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Gate a candidate against a baseline, or smoke-test a single KB.
    Verify {
        kb: PathBuf,
        #[arg(long)]
        candidate: Option<PathBuf>,
        #[arg(long, default_value = "desk")]
        focused: String,
        #[arg(long, default_value = "desk")]
        protected: String,
        /// Break focused ties on trajectory health.
        #[arg(long)]
        health: bool,
        #[arg(long, default_value_t = DEFAULT_HORIZON)]
        horizon: usize,
    },
    /// Run the edit loop.
    Loop {
        kb: PathBuf,
        /// `scripted:DIR`, `external:CMD` or `null`.
        #[arg(long)]
        editor: String,
        #[arg(long, default_value = "desk")]
        focused: String,
        #[arg(long, default_value = "desk")]
        protected: String,
        #[arg(long, default_value_t = 10)]
        max_iters: usize,
        #[arg(long, default_value_t = DEFAULT_HORIZON)]
        horizon: usize,
        #[arg(long)]
        health: bool,
        /// Seconds an external editor gets per request.
        #[arg(long, default_value_t = 120)]
        editor_timeout: u64,
        #[arg(long)]
        run_dir: PathBuf,
    },
    /// Ablate one layer and measure the result.
    Ablate {
        kb: PathBuf,
        /// Layer id, or `full` for the unablated row.
        #[arg(long)]
        layer: String,
        #[arg(long, default_value = "default")]
        variant: String,
        #[arg(long, default_value = "desk")]
        bank: String,
        /// KB that answers the query probe; defaults to the input KB.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_HORIZON)]
        horizon: usize,
    },
    /// Recount the budget table of a run directory and audit its kept decisions.
    Budget { run: PathBuf },
    /// Generate a task bank.
    BankGen {
        #[arg(long, default_value = "desk")]
        name: String,
        /// Family counts, e.g. `pick=10,light=6,clean=5,heat=5,cool=4`.
        #[arg(long, default_value = "pick=10,light=6,clean=5,heat=5,cool=4")]
        mix: String,
        #[arg(long)]
        out: PathBuf,
    },
}

/// An error reported with exit code 2.
#[derive(Debug)]
struct Diagnostics(String);

impl std::fmt::Display for Diagnostics {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Diagnostics {}

fn diagnostics(message: impl Into<String>) -> anyhow::Error {
    Diagnostics(message.into()).into()
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_kb(path: &Path) -> anyhow::Result<KnowledgeBase> {
    let text = read(path)?;
    parse_kb(&text).map_err(|e| diagnostics(format!("{}: {} error: {e}", path.display(), e.kind())))
}

fn load_bank(spec: &str, seed: u64) -> anyhow::Result<TaskBank> {
    if spec == "desk" {
        let bank = desk_bank();
        return Ok(if seed == bank.seed {
            bank
        } else {
            generate_bank("desk", seed, &bank.mix)
        });
    }
    TaskBank::from_json(&read(Path::new(spec))?).with_context(|| format!("parsing bank {spec}"))
}

fn header(kb: &str, bank: &TaskBank) -> String {
    format!("kb={kb} bank={} seed={}", bank.name, bank.seed)
}

fn metrics_line(m: &BankMetrics) -> String {
    format!(
        "successes={} total={} score={} invalid={} mean_success_steps={} recovery={} subgoal={}",
        m.successes,
        m.total,
        m.score(),
        m.health.invalid_action_count,
        m.health.mean_success_steps,
        m.health.recovery_count,
        m.health.subgoal_progress
    )
}

fn kb_validate(path: &Path) -> anyhow::Result<()> {
    let kb = load_kb(path)?;
    let checked = type_check_kb(&kb);
    if !checked.is_ok() {
        for d in &checked.diagnostics {
            println!("diagnostic {d}");
        }
        return Err(diagnostics(format!(
            "{} type errors",
            checked.diagnostics.len()
        )));
    }
    println!(
        "valid kb={} version={} entries={}",
        kb.hash(),
        kb.version,
        kb.entries().len()
    );
    Ok(())
}

fn kb_exec(
    path: &Path,
    bank: &TaskBank,
    horizon: usize,
    jobs: usize,
    out: Option<&Path>,
) -> anyhow::Result<()> {
    let kb = load_kb(path)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .context("building worker pool")?;
    let records = pool
        .install(|| run_bank(&kb, bank, horizon))
        .map_err(|e| diagnostics(e.to_string()))?;
    let hash = kb.hash();
    if let Some(out) = out {
        let header = TrajectoryHeader {
            kind: "trajectories".into(),
            kb_hash: hash.clone(),
            bank: bank.name.clone(),
            seed: bank.seed,
            horizon,
            episodes: records.len(),
        };
        let file = fs::File::create(out).with_context(|| format!("creating {}", out.display()))?;
        write_trajectories(BufWriter::new(file), &header, &records)?;
    }
    let m = BankMetrics::from_trajectories(&bank.name, bank.seed, &hash, &records);
    println!(
        "exec {} horizon={horizon} {} editor_calls={}",
        header(&hash, bank),
        metrics_line(&m),
        editor_calls()
    );
    Ok(())
}

fn kb_trace(
    traj: &Path,
    kb_path: &Path,
    task: Option<&str>,
    step: Option<usize>,
) -> anyhow::Result<()> {
    let kb = load_kb(kb_path)?;
    let file = fs::File::open(traj).with_context(|| format!("opening {}", traj.display()))?;
    let (header, records) =
        read_trajectories(BufReader::new(file)).context("reading trajectories")?;
    if header.kb_hash != kb.hash() {
        return Err(diagnostics(format!(
            "trajectory kb {} does not match kb {}",
            header.kb_hash,
            kb.hash()
        )));
    }
    let rec = match task {
        Some(id) => records.iter().find(|r| r.task_id == id),
        None => records.first(),
    }
    .ok_or_else(|| diagnostics("no such episode"))?;
    if rec.kb_hash != header.kb_hash {
        return Err(diagnostics(format!(
            "episode {} carries kb {}",
            rec.task_id, rec.kb_hash
        )));
    }
    for s in &rec.steps {
        for e in s.trace.all_entries() {
            if kb.get(e.layer, &e.key).is_none() {
                return Err(diagnostics(format!(
                    "step {}: trace names {}.{} which is not in the kb",
                    s.step, e.layer, e.key
                )));
            }
        }
    }
    let steps: Vec<_> = match step {
        Some(n) if n >= rec.steps.len() => {
            return Err(diagnostics(format!(
                "step {n} beyond episode length {}",
                rec.steps.len()
            )));
        }
        Some(n) => vec![&rec.steps[n]],
        None => rec.steps.iter().collect(),
    };
    println!(
        "trace kb={} bank={} seed={} task={} success={} steps={}",
        header.kb_hash,
        header.bank,
        header.seed,
        rec.task_id,
        rec.success,
        rec.steps.len()
    );
    for s in steps {
        let fired = s.trace.rule_evals.iter().find(|e| e.fired);
        let preds = |want: bool| -> String {
            let set: BTreeSet<&str> = fired
                .map(|e| {
                    e.predicates
                        .iter()
                        .filter(|(_, v)| *v == want)
                        .map(|(p, _)| p.as_str())
                        .collect()
                })
                .unwrap_or_default();
            set.into_iter().collect::<Vec<_>>().join(",")
        };
        let bind: Vec<String> = s
            .trace
            .role_entries(Role::Bind)
            .map(|e| e.key.clone())
            .collect();
        println!(
            "step={} rule={} true=[{}] false=[{}] bind=[{}] command={:?} response={:?}{}",
            s.step,
            s.trace.fired_rule,
            preds(true),
            preds(false),
            bind.join(","),
            s.command,
            s.response,
            if s.trace.recovered { " recovered" } else { "" }
        );
    }
    Ok(())
}

fn diff_apply(kb_path: &Path, diff_path: &Path, out: Option<&Path>) -> anyhow::Result<()> {
    let kb = load_kb(kb_path)?;
    let diff = parse_diff(&read(diff_path)?)
        .map_err(|e| diagnostics(format!("schema error at {}: {}", e.field, e.message)))?;
    match apply_diff(&kb, &diff) {
        Ok((new, audit)) => {
            if let Some(out) = out {
                fs::write(out, canonical_serialize(&new))
                    .with_context(|| format!("writing {}", out.display()))?;
            }
            println!(
                "applied kb={} new_kb={} version={} {}",
                kb.hash(),
                new.hash(),
                new.version,
                serde_json::to_string(&audit)?
            );
            Ok(())
        }
        Err(rej) => {
            for d in &rej.diagnostics.diagnostics {
                println!("diagnostic {d}");
            }
            println!(
                "rejected kb={} {}",
                kb.hash(),
                serde_json::to_string(&rej.audit)?
            );
            Err(diagnostics(format!(
                "{:?} rejection: {}",
                rej.kind, rej.reason
            )))
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn verify(
    kb_path: &Path,
    candidate: Option<&Path>,
    focused: &TaskBank,
    protected: &TaskBank,
    health: bool,
    horizon: usize,
) -> anyhow::Result<()> {
    let kb = load_kb(kb_path)?;
    let Some(candidate) = candidate else {
        let smoke = smoke_apply(&kb, &SMOKE_SUITE);
        println!(
            "smoke_apply kb={} applied={} rejected={} mismatches={}",
            kb.hash(),
            smoke.applied.len(),
            smoke.rejected.len(),
            smoke.mismatches.len()
        );
        let exec = smoke_execute(&kb, focused, SMOKE_EPISODES, horizon)
            .map_err(|e| diagnostics(e.to_string()))?;
        println!(
            "smoke_execute {} episodes={} successes={} mean_steps={} admissible_misses={}",
            header(&exec.kb_hash, focused),
            exec.episodes,
            exec.successes,
            exec.mean_steps,
            exec.admissible_misses
        );
        if !smoke.passed() {
            return Err(diagnostics(format!(
                "smoke mismatches: {}",
                smoke.mismatches.join(",")
            )));
        }
        return Ok(());
    };
    let cand = load_kb(candidate)?;
    let d = accept(&kb, &cand, focused, protected, health, horizon)
        .map_err(|e| diagnostics(e.to_string()))?;
    let score = |p: &Option<typedkb::verify::MetricPair>| {
        p.as_ref().map_or("-".to_string(), |p| {
            format!("{}->{}", p.before.score(), p.after.score())
        })
    };
    println!(
        "gate verdict={} baseline={} candidate={} focused={} focused_seed={} protected={} protected_seed={} focused_m={} protected_m={} reason={:?}",
        d.verdict.as_str(),
        d.baseline_hash,
        d.candidate_hash,
        focused.name,
        focused.seed,
        protected.name,
        protected.seed,
        score(&d.focused),
        score(&d.protected),
        d.reason
    );
    if d.verdict != Verdict::Kept {
        return Err(diagnostics(d.reason));
    }
    Ok(())
}

fn editor(spec: &str, timeout: Duration) -> anyhow::Result<Box<dyn Editor>> {
    if spec == "null" {
        return Ok(Box::new(NullEditor));
    }
    if let Some(dir) = spec.strip_prefix("scripted:") {
        return Ok(Box::new(
            ScriptedEditor::from_dir(dir).with_context(|| format!("reading {dir}"))?,
        ));
    }
    if let Some(cmd) = spec.strip_prefix("external:") {
        return Ok(Box::new(ExternalEditor::new(cmd).with_timeout(timeout)));
    }
    bail!("unknown editor `{spec}`: expected scripted:DIR, external:CMD or null")
}

fn print_budget(m: &RunManifest) {
    let b = record_budget(m);
    println!(
        "budget initial_kb={} final_kb={} focused={} focused_seed={} initial={} final={} proposals={} accepted={} apply_failed={} verifier_rejected={} eval_episodes={} result_only={}",
        m.initial_hash,
        m.final_hash,
        m.focused.name,
        m.focused.seed,
        b.initial,
        b.final_score,
        b.proposals,
        b.accepted,
        b.apply_failed,
        b.verifier_rejected,
        b.eval_episodes,
        b.result_only
    );
}

fn budget(run: &Path) -> anyhow::Result<()> {
    let (dir, manifest_path) = if run.is_dir() {
        (run.to_path_buf(), run.join(MANIFEST_FILE))
    } else {
        (
            run.parent().unwrap_or(Path::new(".")).to_path_buf(),
            run.to_path_buf(),
        )
    };
    let m: RunManifest =
        serde_json::from_str(&read(&manifest_path)?).context("parsing manifest")?;
    print_budget(&m);
    let audit = audit_run(&dir).map_err(|e| diagnostics(e.to_string()))?;
    println!(
        "audit kb={} kept={} checked={} violations={}",
        m.final_hash,
        audit.kept,
        audit.checked,
        audit.violations.len()
    );
    for v in &audit.violations {
        println!("violation {v}");
    }
    if !audit.violations.is_empty() {
        return Err(diagnostics("audit failed"));
    }
    Ok(())
}

fn parse_mix(mix: &str) -> anyhow::Result<BTreeMap<Family, usize>> {
    let mut out = BTreeMap::new();
    for part in mix.split(',').filter(|s| !s.trim().is_empty()) {
        let (f, n) = part
            .split_once('=')
            .with_context(|| format!("mix entry `{part}` is not FAMILY=COUNT"))?;
        let family: Family = f.trim().parse().map_err(anyhow::Error::msg)?;
        out.insert(
            family,
            n.trim()
                .parse()
                .with_context(|| format!("count in `{part}`"))?,
        );
    }
    Ok(out)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::KbValidate { kb } => kb_validate(&kb),
        Command::KbExec {
            kb,
            bank,
            horizon,
            jobs,
            out,
        } => kb_exec(&kb, &load_bank(&bank, seed)?, horizon, jobs, out.as_deref()),
        Command::KbTrace {
            trajectories,
            kb,
            task,
            step,
        } => kb_trace(&trajectories, &kb, task.as_deref(), step),
        Command::DiffApply { kb, diff, out } => diff_apply(&kb, &diff, out.as_deref()),
        Command::Verify {
            kb,
            candidate,
            focused,
            protected,
            health,
            horizon,
        } => verify(
            &kb,
            candidate.as_deref(),
            &load_bank(&focused, seed)?,
            &load_bank(&protected, seed)?,
            health,
            horizon,
        ),
        Command::Loop {
            kb,
            editor: spec,
            focused,
            protected,
            max_iters,
            horizon,
            health,
            editor_timeout,
            run_dir,
        } => {
            let kb = load_kb(&kb)?;
            let mut ed = editor(&spec, Duration::from_secs(editor_timeout))?;
            let (focused, protected) = (load_bank(&focused, seed)?, load_bank(&protected, seed)?);
            let config = LoopConfig {
                max_iters,
                horizon,
                health_declared: health,
                summary_seed: seed,
                run_dir: Some(run_dir.clone()),
            };
            let out = run_loop(
                &kb,
                &household_contract(),
                ed.as_mut(),
                &focused,
                &protected,
                &config,
            )?;
            for it in &out.manifest.iterations {
                let d = it.decision.as_ref();
                println!(
                    "iteration={} verdict={} op={} key={} kb_before={} kb_after={} reason={:?}",
                    it.iteration,
                    d.map_or("-", |d| d.verdict.as_str()),
                    it.proposal.as_ref().map_or("-", |p| p.op.as_str()),
                    it.proposal.as_ref().map_or("-", |p| p.key.as_str()),
                    it.hash_before,
                    it.hash_after,
                    d.map_or("", |d| d.reason.as_str())
                );
            }
            print_budget(&out.manifest);
            println!(
                "manifest={} final_kb={} stop={}",
                run_dir.join(MANIFEST_FILE).display(),
                snapshot_path(&run_dir, out.kb.version).display(),
                out.manifest.stop_reason
            );
            Ok(())
        }
        Command::Ablate {
            kb,
            layer,
            variant,
            bank,
            reference,
            horizon,
        } => {
            let kb = load_kb(&kb)?;
            let reference = match reference {
                Some(p) => load_kb(&p)?,
                None => kb.clone(),
            };
            let bank = load_bank(&bank, seed)?;
            let row = if layer == "full" {
                full_row(&kb, &bank, horizon)
            } else {
                let layer: LayerId = layer.parse().map_err(|e: String| diagnostics(e))?;
                let variant = if variant == "default" {
                    variants(layer)[0]
                } else {
                    variant.as_str()
                };
                let ablated =
                    ablate_layer(&kb, layer, variant).map_err(|e| diagnostics(e.to_string()))?;
                AblationRow::measure(&reference, &ablated, Some(layer), variant, &bank, horizon)
            }
            .map_err(|e| diagnostics(e.to_string()))?;
            println!("{}", row.to_line());
            Ok(())
        }
        Command::Budget { run } => budget(&run),
        Command::BankGen { name, mix, out } => {
            let bank = generate_bank(&name, seed, &parse_mix(&mix)?);
            fs::write(&out, bank.to_json())
                .with_context(|| format!("writing {}", out.display()))?;
            let digest = typedkb::sha256_hex(bank.to_json());
            println!(
                "bank name={} seed={} tasks={} digest={digest} out={}",
                bank.name,
                bank.seed,
                bank.len(),
                out.display()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {
            let _ = std::io::stdout().flush();
            ExitCode::SUCCESS
        }
        Err(e) => {
            let code = if e.is::<Diagnostics>() { 2 } else { 1 };
            eprintln!("error code={code} message={:?}", format!("{e:#}"));
            ExitCode::from(code)
        }
    }
}
