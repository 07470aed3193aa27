//! The edit loop: evaluate, summarize evidence, ask an editor for one
//! typed diff, apply it, gate it, and commit or roll back.

mod editors;

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use crate::diff::{admission_matrix, apply_diff, KbDiff};
use crate::env::{InterfaceContract, TaskBank};
use crate::exec::{
    read_trajectories, write_trajectories, ExecutableError, Executor, TrajectoryHeader,
    TrajectoryRecord,
};
use crate::hash::sha256_hex;
use crate::kb::{
    canonical_serialize, parse_kb, EntryContent, ExperienceRecord, ExperienceStatus, KbEntry,
    KnowledgeBase, ProvenanceRecord,
};
use crate::layer::LayerId;
use crate::ledger::{read_records, Ledger, LedgerError};
use crate::verify::{
    admissible_misses, decide, evaluate_bank, fired_histogram, gate, BankMetrics, Evaluation,
    FailureSample, GateDecision, HealthVector, MetricPair, Verdict,
};

pub use editors::{
    decode_response, read_frame, write_frame, ExternalEditor, NullEditor, ScriptedEditor,
    DEFAULT_EDITOR_TIMEOUT,
};

/// Failure traces kept in an evidence summary.
pub const SUMMARY_FAILURES: usize = 5;
/// Successful-but-wasteful traces kept in an evidence summary.
pub const SUMMARY_WASTE: usize = 2;
/// Upper bound on a serialized evidence summary.
pub const SUMMARY_BYTE_BUDGET: usize = 16 * 1024;

static EDITOR_CALLS: AtomicU64 = AtomicU64::new(0);

/// Editor invocations made by this process.
pub fn editor_calls() -> u64 {
    EDITOR_CALLS.load(Ordering::SeqCst)
}

/// Evidence handed to the editor, derived only from trajectories.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceSummary {
    pub kb_hash: String,
    pub successes: u64,
    pub total: u64,
    pub health: HealthVector,
    /// Family to (successes, total).
    pub families: BTreeMap<String, (usize, usize)>,
    pub failures: Vec<FailureSample>,
    /// Successes that still issued invalid commands or needed recovery.
    pub waste: Vec<FailureSample>,
    pub fired_rules: BTreeMap<String, usize>,
    pub admissible_misses: usize,
}

fn family_of(task_id: &str) -> &str {
    task_id.split_once('-').map_or(task_id, |(f, _)| f)
}

fn sample(items: Vec<&TrajectoryRecord>, k: usize, rng: &mut ChaCha8Rng) -> Vec<FailureSample> {
    let mut picked: Vec<&TrajectoryRecord> = items.choose_multiple(rng, k).copied().collect();
    picked.sort_by(|a, b| a.task_id.cmp(&b.task_id));
    picked
        .into_iter()
        .map(|r| FailureSample::from_record(r, 5))
        .collect()
}

/// Seeded, bounded summary of a set of trajectories.
pub fn summarize(trajectories: &[TrajectoryRecord], seed: u64) -> EvidenceSummary {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut families: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for r in trajectories {
        let e = families
            .entry(family_of(&r.task_id).to_string())
            .or_default();
        e.0 += r.success as usize;
        e.1 += 1;
    }
    let failures = trajectories.iter().filter(|r| !r.success).collect();
    let waste = trajectories
        .iter()
        .filter(|r| r.success && (r.invalid_action_count > 0 || r.recovery_count > 0))
        .collect();
    let mut s = EvidenceSummary {
        kb_hash: trajectories
            .first()
            .map(|r| r.kb_hash.clone())
            .unwrap_or_default(),
        successes: trajectories.iter().filter(|r| r.success).count() as u64,
        total: trajectories.len() as u64,
        health: HealthVector::from_trajectories(trajectories),
        families,
        failures: sample(failures, SUMMARY_FAILURES, &mut rng),
        waste: sample(waste, SUMMARY_WASTE, &mut rng),
        fired_rules: fired_histogram(trajectories),
        admissible_misses: admissible_misses(trajectories),
    };
    while serde_json::to_string(&s).map_or(0, |t| t.len()) > SUMMARY_BYTE_BUDGET {
        if s.waste.pop().is_none() && s.failures.pop().is_none() {
            break;
        }
    }
    s
}

/// Everything an editor sees: no environment, no evaluation handle.
#[derive(Debug, Clone, Serialize)]
pub struct EditorRequest {
    pub attempt: usize,
    pub summary: EvidenceSummary,
    pub contract: InterfaceContract,
    pub kb_text: String,
    /// Layer to admitted op names.
    pub allowed_ops: BTreeMap<LayerId, Vec<String>>,
}

impl EditorRequest {
    pub fn digest(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("request serializes"))
    }
}

/// One editor answer: a typed diff or nothing.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub layer_hypothesis: Option<LayerId>,
    pub diff: Option<KbDiff>,
    pub editor_id: String,
    pub note: Option<String>,
}

impl Proposal {
    pub fn none(editor_id: String) -> Self {
        Proposal {
            layer_hypothesis: None,
            diff: None,
            editor_id,
            note: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EditorError {
    #[error("editor protocol error: {0}")]
    Protocol(String),
    #[error("editor timed out")]
    Timeout,
}

/// A proposal module. It is only ever called between rollouts.
pub trait Editor {
    fn id(&self) -> String;
    fn propose(&mut self, request: &EditorRequest) -> Result<Proposal, EditorError>;
}

fn call_editor(editor: &mut dyn Editor, request: &EditorRequest) -> Result<Proposal, EditorError> {
    EDITOR_CALLS.fetch_add(1, Ordering::SeqCst);
    editor.propose(request)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetLedger {
    pub attempts: u64,
    pub accepted: u64,
    pub apply_failed: u64,
    pub verifier_rejected: u64,
    pub eval_episodes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalRecord {
    pub layer_hypothesis: Option<LayerId>,
    pub op: String,
    pub key: String,
    pub diff_digest: String,
    pub diff: Json,
}

/// One attempted edit and its gate decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub request_digest: String,
    pub editor_id: String,
    pub proposal: Option<ProposalRecord>,
    pub decision: Option<GateDecision>,
    pub version_before: u64,
    pub version_after: u64,
    pub hash_before: String,
    pub hash_after: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BankRef {
    pub name: String,
    pub seed: u64,
    pub size: usize,
    pub digest: String,
}

impl BankRef {
    fn of(bank: &TaskBank) -> Self {
        BankRef {
            name: bank.name.clone(),
            seed: bank.seed,
            size: bank.len(),
            digest: sha256_hex(bank.to_json()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub contract_hash: String,
    pub initial_hash: String,
    pub final_hash: String,
    pub focused: BankRef,
    pub protected: BankRef,
    pub editor_id: String,
    pub iterations: Vec<IterationRecord>,
    pub budget: BudgetLedger,
    pub request_digests: Vec<String>,
    pub initial_focused: Option<BankMetrics>,
    pub final_focused: Option<BankMetrics>,
    pub stop_reason: String,
    pub notes: Vec<String>,
    /// Set when some attempt lacks a gate record.
    pub result_only: bool,
}

/// The budget row of one run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetTable {
    pub initial: String,
    #[serde(rename = "final")]
    pub final_score: String,
    pub proposals: u64,
    pub accepted: u64,
    pub apply_failed: u64,
    pub verifier_rejected: u64,
    pub eval_episodes: u64,
    pub result_only: bool,
}

/// Recounts the budget from the gate records. A manifest whose records do
/// not cover every attempt is reported as result-only.
pub fn record_budget(manifest: &RunManifest) -> BudgetTable {
    let count = |v: Verdict| {
        manifest
            .iterations
            .iter()
            .filter(|i| i.decision.as_ref().is_some_and(|d| d.verdict == v))
            .count() as u64
    };
    let (accepted, apply_failed, verifier_rejected) = (
        count(Verdict::Kept),
        count(Verdict::ApplyFailed),
        count(Verdict::Reverted),
    );
    let proposals = manifest.iterations.len() as u64;
    let complete = manifest.iterations.iter().all(|i| i.decision.is_some())
        && proposals == manifest.budget.attempts
        && accepted == manifest.budget.accepted
        && apply_failed == manifest.budget.apply_failed
        && verifier_rejected == manifest.budget.verifier_rejected;
    let score = |m: &Option<BankMetrics>| m.as_ref().map_or("-".to_string(), BankMetrics::score);
    BudgetTable {
        initial: score(&manifest.initial_focused),
        final_score: score(&manifest.final_focused),
        proposals,
        accepted,
        apply_failed,
        verifier_rejected,
        eval_episodes: manifest.budget.eval_episodes,
        result_only: manifest.result_only || !complete,
    }
}

#[derive(Debug, Clone)]
pub struct LoopConfig {
    pub max_iters: usize,
    pub horizon: usize,
    pub health_declared: bool,
    /// Seed for evidence sampling; iteration `i` uses `summary_seed + i`.
    pub summary_seed: u64,
    /// Where run artifacts go; `None` keeps everything in memory.
    pub run_dir: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum LoopError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Executable(#[from] ExecutableError),
    #[error("snapshot integrity: {0}")]
    Snapshot(String),
}

#[derive(Debug, Clone)]
pub struct LoopOutcome {
    pub kb: KnowledgeBase,
    pub manifest: RunManifest,
}

/// Canonical KB text plus its hash.
struct Snapshot {
    text: String,
    hash: String,
}

impl Snapshot {
    fn take(kb: &KnowledgeBase) -> Self {
        let text = canonical_serialize(kb);
        Snapshot {
            hash: sha256_hex(&text),
            text,
        }
    }

    fn restore(&self) -> Result<KnowledgeBase, LoopError> {
        let kb = parse_kb(&self.text).map_err(|e| LoopError::Snapshot(e.to_string()))?;
        if kb.hash() != self.hash {
            return Err(LoopError::Snapshot(format!(
                "restored hash {} != {}",
                kb.hash(),
                self.hash
            )));
        }
        Ok(kb)
    }
}

pub const CONTRACT_FILE: &str = "contract.json";
pub const GATES_FILE: &str = "run.gates.jsonl";
pub const BUDGET_FILE: &str = "run.budget.json";
pub const MANIFEST_FILE: &str = "run.manifest.json";
pub const TRAJ_DIR: &str = "traj";

/// Trajectory file of one KB on one bank inside a run directory.
pub fn trajectory_path(run_dir: &Path, bank: &str, kb_hash: &str) -> PathBuf {
    run_dir.join(TRAJ_DIR).join(format!(
        "{bank}.{}.traj.jsonl",
        &kb_hash[..16.min(kb_hash.len())]
    ))
}

pub fn snapshot_path(run_dir: &Path, version: u64) -> PathBuf {
    run_dir.join(format!("kb.v{version}"))
}

struct Run<'a> {
    config: &'a LoopConfig,
    focused: &'a TaskBank,
    protected: &'a TaskBank,
    same_bank: bool,
    episodes: u64,
    gates: Option<Ledger>,
}

impl Run<'_> {
    fn evaluate(&mut self, kb: &KnowledgeBase, bank: &TaskBank) -> Result<Evaluation, LoopError> {
        let e = evaluate_bank(kb, bank, self.config.horizon)?;
        self.episodes += e.trajectories.len() as u64;
        if let Some(dir) = &self.config.run_dir {
            let path = trajectory_path(dir, &bank.name, &e.metrics.kb_hash);
            let header = TrajectoryHeader {
                kind: "trajectories".into(),
                kb_hash: e.metrics.kb_hash.clone(),
                bank: bank.name.clone(),
                seed: bank.seed,
                horizon: self.config.horizon,
                episodes: e.trajectories.len(),
            };
            write_trajectories(
                BufWriter::new(fs::File::create(path)?),
                &header,
                &e.trajectories,
            )?;
        }
        Ok(e)
    }

    /// Focused and protected evaluations; one run when both banks are the same.
    fn evaluate_pair(&mut self, kb: &KnowledgeBase) -> Result<(Evaluation, Evaluation), LoopError> {
        let f = self.evaluate(kb, self.focused)?;
        let p = if self.same_bank {
            f.clone()
        } else {
            self.evaluate(kb, self.protected)?
        };
        Ok((f, p))
    }

    fn record(&mut self, rec: &IterationRecord) -> Result<(), LoopError> {
        if let Some(g) = &mut self.gates {
            g.append(rec)?;
        }
        Ok(())
    }
}

fn commit(
    candidate: KnowledgeBase,
    iteration: usize,
    diff: &KbDiff,
    decision: &GateDecision,
) -> KnowledgeBase {
    let mut kb = candidate;
    let (f, p) = (
        decision.focused.as_ref().expect("kept has metrics"),
        decision.protected.as_ref().expect("kept has metrics"),
    );
    let record = ExperienceRecord {
        evidence_id: format!("iter{iteration}_{}", &diff.digest()[..12]),
        trajectory_refs: vec![
            format!("{}.{}", f.after.bank, &f.after.kb_hash[..16]),
            format!("{}.{}", p.after.bank, &p.after.kb_hash[..16]),
        ],
        hypothesis: diff.to_document(),
        focused_before: f.before.score(),
        focused_after: f.after.score(),
        protected_before: p.before.score(),
        protected_after: p.after.score(),
        status: ExperienceStatus::Kept,
    };
    let provenance = ProvenanceRecord {
        origin: "commit".into(),
        op: "append_experience".into(),
        version: kb.version,
        ..Default::default()
    };
    kb.insert(KbEntry::new(
        EntryContent::Experience(record),
        vec![provenance],
    ))
    .expect("experience ids carry the diff digest");
    kb
}

/// Runs the edit loop from `kb0`. Stops at `max_iters`, when the editor
/// has nothing to propose, or once the focused bank is fully solved.
pub fn run_loop(
    kb0: &KnowledgeBase,
    contract: &InterfaceContract,
    editor: &mut dyn Editor,
    focused: &TaskBank,
    protected: &TaskBank,
    config: &LoopConfig,
) -> Result<LoopOutcome, LoopError> {
    Executor::new(kb0)?;
    let gates = match &config.run_dir {
        Some(dir) => {
            fs::create_dir_all(dir.join(TRAJ_DIR))?;
            fs::write(
                dir.join(CONTRACT_FILE),
                serde_json::to_string_pretty(contract).map_err(io::Error::other)?,
            )?;
            fs::write(snapshot_path(dir, kb0.version), canonical_serialize(kb0))?;
            Some(Ledger::open(dir.join(GATES_FILE))?)
        }
        None => None,
    };
    let same_bank = BankRef::of(focused) == BankRef::of(protected);
    let mut run = Run {
        config,
        focused,
        protected,
        same_bank,
        episodes: 0,
        gates,
    };
    let mut manifest = RunManifest {
        contract_hash: contract.hash(),
        initial_hash: kb0.hash(),
        final_hash: kb0.hash(),
        focused: BankRef::of(focused),
        protected: BankRef::of(protected),
        editor_id: editor.id(),
        iterations: Vec::new(),
        budget: BudgetLedger::default(),
        request_digests: Vec::new(),
        initial_focused: None,
        final_focused: None,
        stop_reason: "max_iters".into(),
        notes: Vec::new(),
        result_only: false,
    };
    let mut kb = kb0.clone();
    let mut current: Option<(Evaluation, Evaluation)> = None;
    let allowed_ops: BTreeMap<LayerId, Vec<String>> = admission_matrix()
        .into_iter()
        .map(|(l, ops)| {
            (
                l,
                ops.into_iter()
                    .map(|(o, _)| o.as_str().to_string())
                    .collect(),
            )
        })
        .collect();

    for iteration in 0..config.max_iters {
        let (fe, pe) = match current.take() {
            Some(c) => c,
            None => run.evaluate_pair(&kb)?,
        };
        manifest
            .initial_focused
            .get_or_insert_with(|| fe.metrics.clone());
        if fe.metrics.is_perfect() {
            manifest.stop_reason = "focused_solved".into();
            current = Some((fe, pe));
            break;
        }

        let snapshot = Snapshot::take(&kb);
        let request = EditorRequest {
            attempt: iteration,
            summary: summarize(
                &fe.trajectories,
                config.summary_seed.wrapping_add(iteration as u64),
            ),
            contract: contract.clone(),
            kb_text: snapshot.text.clone(),
            allowed_ops: allowed_ops.clone(),
        };
        let request_digest = request.digest();
        manifest.request_digests.push(request_digest.clone());

        let mut rec = IterationRecord {
            iteration,
            request_digest,
            editor_id: editor.id(),
            proposal: None,
            decision: None,
            version_before: kb.version,
            version_after: kb.version,
            hash_before: snapshot.hash.clone(),
            hash_after: snapshot.hash.clone(),
        };
        let (fname, pname) = (focused.name.as_str(), protected.name.as_str());
        let proposal = match call_editor(editor, &request) {
            Ok(p) => p,
            Err(EditorError::Timeout) => {
                manifest.notes.push(format!(
                    "iteration {iteration}: editor timed out; treated as no proposal"
                ));
                manifest.stop_reason = "no_proposal".into();
                current = Some((fe, pe));
                break;
            }
            Err(EditorError::Protocol(m)) => Proposal {
                note: Some(m),
                ..Proposal::none(editor.id())
            },
        };
        let Some(diff) = proposal.diff.clone() else {
            if let Some(m) = proposal.note {
                manifest.budget.attempts += 1;
                manifest.budget.apply_failed += 1;
                rec.decision = Some(GateDecision::apply_failed(
                    &snapshot.hash,
                    fname,
                    pname,
                    format!("protocol: {m}"),
                ));
                kb = snapshot.restore()?;
                run.record(&rec)?;
                manifest.iterations.push(rec);
                current = Some((fe, pe));
                continue;
            }
            manifest.stop_reason = "no_proposal".into();
            current = Some((fe, pe));
            break;
        };
        manifest.budget.attempts += 1;
        rec.proposal = Some(ProposalRecord {
            layer_hypothesis: proposal.layer_hypothesis,
            op: diff.op.as_str().into(),
            key: diff.key.clone(),
            diff_digest: diff.digest(),
            diff: diff.to_document(),
        });

        let candidate = match apply_diff(&kb, &diff) {
            Ok((c, _)) => c,
            Err(rej) => {
                manifest.budget.apply_failed += 1;
                rec.decision = Some(GateDecision::apply_failed(
                    &snapshot.hash,
                    fname,
                    pname,
                    rej.reason,
                ));
                kb = snapshot.restore()?;
                run.record(&rec)?;
                manifest.iterations.push(rec);
                current = Some((fe, pe));
                continue;
            }
        };
        let decision = match Executor::new(&candidate) {
            Err(e) => GateDecision {
                candidate_hash: candidate.hash(),
                verdict: Verdict::Reverted,
                reason: format!("execution smoke: {e}"),
                ..GateDecision::apply_failed(&snapshot.hash, fname, pname, "")
            },
            Ok(_) => {
                let (cf, cp) = run.evaluate_pair(&candidate)?;
                let d = decide(
                    &snapshot.hash,
                    &candidate.hash(),
                    MetricPair {
                        before: fe.metrics.clone(),
                        after: cf.metrics.clone(),
                    },
                    MetricPair {
                        before: pe.metrics.clone(),
                        after: cp.metrics.clone(),
                    },
                    config.health_declared,
                );
                if d.verdict == Verdict::Kept {
                    current = Some((cf, cp));
                }
                d
            }
        };
        if decision.verdict == Verdict::Kept {
            manifest.budget.accepted += 1;
            kb = commit(candidate, iteration, &diff, &decision);
            if let Some(dir) = &config.run_dir {
                fs::write(snapshot_path(dir, kb.version), canonical_serialize(&kb))?;
            }
        } else {
            manifest.budget.verifier_rejected += 1;
            kb = snapshot.restore()?;
            current = Some((fe, pe));
        }
        rec.version_after = kb.version;
        rec.hash_after = kb.hash();
        rec.decision = Some(decision);
        run.record(&rec)?;
        manifest.iterations.push(rec);
    }

    let final_focused = match current {
        Some((f, _)) => f.metrics,
        None => run.evaluate(&kb, focused)?.metrics,
    };
    manifest
        .initial_focused
        .get_or_insert_with(|| final_focused.clone());
    manifest.final_focused = Some(final_focused);
    manifest.final_hash = kb.hash();
    manifest.budget.eval_episodes = run.episodes;
    if let Some(dir) = &config.run_dir {
        let budget = record_budget(&manifest);
        fs::write(
            dir.join(BUDGET_FILE),
            serde_json::to_string_pretty(&budget).map_err(io::Error::other)?,
        )?;
        fs::write(
            dir.join(MANIFEST_FILE),
            serde_json::to_string_pretty(&manifest).map_err(io::Error::other)?,
        )?;
    }
    Ok(LoopOutcome { kb, manifest })
}

/// Result of re-deriving kept decisions from persisted trajectories.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct AuditReport {
    pub kept: usize,
    pub checked: usize,
    pub violations: Vec<String>,
}

fn load_metrics(run_dir: &Path, m: &BankMetrics) -> Result<BankMetrics, String> {
    let path = trajectory_path(run_dir, &m.bank, &m.kb_hash);
    let file = fs::File::open(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let (header, records) =
        read_trajectories(BufReader::new(file)).map_err(|e| format!("{}: {e}", path.display()))?;
    if header.kb_hash != m.kb_hash || records.iter().any(|r| r.kb_hash != m.kb_hash) {
        return Err(format!("{}: kb hash mismatch", path.display()));
    }
    Ok(BankMetrics::from_trajectories(
        &header.bank,
        header.seed,
        &header.kb_hash,
        &records,
    ))
}

/// Recomputes every kept decision of a run directory from its trajectory
/// files and checks the acceptance rule holds exactly.
pub fn audit_run(run_dir: &Path) -> Result<AuditReport, LedgerError> {
    let records: Vec<IterationRecord> = read_records(run_dir.join(GATES_FILE))?;
    let mut report = AuditReport::default();
    for rec in &records {
        let Some(d) = &rec.decision else {
            report
                .violations
                .push(format!("iteration {}: no gate record", rec.iteration));
            continue;
        };
        if d.verdict != Verdict::Kept {
            if rec.hash_after != rec.hash_before {
                report.violations.push(format!(
                    "iteration {}: rejected edit changed the KB",
                    rec.iteration
                ));
            }
            continue;
        }
        report.kept += 1;
        let (Some(f), Some(p)) = (&d.focused, &d.protected) else {
            report
                .violations
                .push(format!("iteration {}: kept without metrics", rec.iteration));
            continue;
        };
        let loaded: Result<Vec<BankMetrics>, String> = [&f.before, &f.after, &p.before, &p.after]
            .into_iter()
            .map(|m| load_metrics(run_dir, m))
            .collect();
        match loaded {
            Err(e) => report
                .violations
                .push(format!("iteration {}: {e}", rec.iteration)),
            Ok(m) => {
                report.checked += 1;
                if m[0] != f.before || m[1] != f.after || m[2] != p.before || m[3] != p.after {
                    report.violations.push(format!(
                        "iteration {}: recorded metrics differ from trajectories",
                        rec.iteration
                    ));
                }
                if m[3].m() < m[2].m() {
                    report
                        .violations
                        .push(format!("iteration {}: protected regressed", rec.iteration));
                }
                let (v, _) = gate(&m[0], &m[1], &m[2], &m[3], d.health_declared);
                if v != Verdict::Kept {
                    report.violations.push(format!(
                        "iteration {}: focused branch does not hold",
                        rec.iteration
                    ));
                }
            }
        }
    }
    Ok(report)
}
