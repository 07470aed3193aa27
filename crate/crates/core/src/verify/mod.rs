//! Gates and metrics: applier smoke, execution smoke, bank evaluation and
//! the focused/protected acceptance rule.

mod probe;

use std::cmp::Ordering;
use std::collections::BTreeMap;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::diff::{apply_diff, parse_diff};
use crate::env::TaskBank;
use crate::exec::{run_bank, ExecutableError, Executor, Outcome, TrajectoryRecord};
use crate::fixtures::SmokeFixture;
use crate::kb::KnowledgeBase;

pub use probe::{
    effect_probe, plan_coverage, query_probe, stress_probe, EffectProbe, OperatorEffect,
    QuerySuite, StressProbe,
};

/// Default episode count of the execution smoke test.
pub const SMOKE_EPISODES: usize = 5;
/// Failure traces kept in an [`ExecReport`].
pub const MAX_FAILURE_SAMPLES: usize = 5;

/// Trajectory health, compared lexicographically: fewer invalid actions,
/// then shorter successes, then fewer recoveries, then more subgoal progress.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HealthVector {
    pub invalid_action_count: u64,
    pub mean_success_steps: Ratio<u64>,
    pub recovery_count: u64,
    pub subgoal_progress: Ratio<u64>,
}

impl HealthVector {
    pub fn from_trajectories(records: &[TrajectoryRecord]) -> Self {
        let successes: Vec<&TrajectoryRecord> = records.iter().filter(|r| r.success).collect();
        let mean_success_steps = if successes.is_empty() {
            Ratio::from_integer(0)
        } else {
            Ratio::new(
                successes.iter().map(|r| r.step_count as u64).sum(),
                successes.len() as u64,
            )
        };
        let subgoal_progress = if records.is_empty() {
            Ratio::from_integer(0)
        } else {
            let sum = records
                .iter()
                .filter(|r| r.subgoal_progress.total > 0)
                .map(|r| {
                    Ratio::new(
                        r.subgoal_progress.satisfied as u64,
                        r.subgoal_progress.total as u64,
                    )
                })
                .fold(Ratio::from_integer(0), |a, b| a + b);
            sum / records.len() as u64
        };
        HealthVector {
            invalid_action_count: records.iter().map(|r| r.invalid_action_count as u64).sum(),
            mean_success_steps,
            recovery_count: records.iter().map(|r| r.recovery_count as u64).sum(),
            subgoal_progress,
        }
    }

    /// `Greater` means `self` is healthier than `other`.
    pub fn compare(&self, other: &HealthVector) -> Ordering {
        other
            .invalid_action_count
            .cmp(&self.invalid_action_count)
            .then(other.mean_success_steps.cmp(&self.mean_success_steps))
            .then(other.recovery_count.cmp(&self.recovery_count))
            .then(self.subgoal_progress.cmp(&other.subgoal_progress))
    }

    pub fn improves_on(&self, other: &HealthVector) -> bool {
        self.compare(other) == Ordering::Greater
    }
}

/// Success counts and health of one KB on one bank.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BankMetrics {
    pub bank: String,
    pub seed: u64,
    pub kb_hash: String,
    pub successes: u64,
    pub total: u64,
    pub health: HealthVector,
}

impl BankMetrics {
    pub fn from_trajectories(
        bank: &str,
        seed: u64,
        kb_hash: &str,
        records: &[TrajectoryRecord],
    ) -> Self {
        BankMetrics {
            bank: bank.to_string(),
            seed,
            kb_hash: kb_hash.to_string(),
            successes: records.iter().filter(|r| r.success).count() as u64,
            total: records.len() as u64,
            health: HealthVector::from_trajectories(records),
        }
    }

    /// Success fraction; an empty bank scores 0.
    pub fn m(&self) -> Ratio<u64> {
        if self.total == 0 {
            Ratio::from_integer(0)
        } else {
            Ratio::new(self.successes, self.total)
        }
    }

    pub fn is_perfect(&self) -> bool {
        self.total > 0 && self.successes == self.total
    }

    /// `successes/total` as printed in reports.
    pub fn score(&self) -> String {
        format!("{}/{}", self.successes, self.total)
    }
}

/// Metrics plus the trajectories they were computed from.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub metrics: BankMetrics,
    pub trajectories: Vec<TrajectoryRecord>,
}

/// Runs `kb` on every task of `bank`.
pub fn evaluate_bank(
    kb: &KnowledgeBase,
    bank: &TaskBank,
    horizon: usize,
) -> Result<Evaluation, ExecutableError> {
    let trajectories = run_bank(kb, bank, horizon)?;
    let metrics = BankMetrics::from_trajectories(&bank.name, bank.seed, &kb.hash(), &trajectories);
    Ok(Evaluation {
        metrics,
        trajectories,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Kept,
    Reverted,
    ApplyFailed,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Kept => "kept",
            Verdict::Reverted => "reverted",
            Verdict::ApplyFailed => "apply_failed",
        }
    }
}

/// Metric pair of one bank before and after a candidate edit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricPair {
    pub before: BankMetrics,
    pub after: BankMetrics,
}

/// The verifier verdict for one candidate KB.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateDecision {
    pub baseline_hash: String,
    pub candidate_hash: String,
    pub focused_bank: String,
    pub protected_bank: String,
    pub health_declared: bool,
    pub focused: Option<MetricPair>,
    pub protected: Option<MetricPair>,
    pub verdict: Verdict,
    pub reason: String,
}

impl GateDecision {
    /// A decision for a candidate that never reached evaluation.
    pub fn apply_failed(
        baseline_hash: &str,
        focused: &str,
        protected: &str,
        reason: impl Into<String>,
    ) -> Self {
        GateDecision {
            baseline_hash: baseline_hash.to_string(),
            candidate_hash: String::new(),
            focused_bank: focused.to_string(),
            protected_bank: protected.to_string(),
            health_declared: false,
            focused: None,
            protected: None,
            verdict: Verdict::ApplyFailed,
            reason: reason.into(),
        }
    }

    /// Rechecks a kept verdict against its own metrics.
    pub fn consistent(&self) -> bool {
        match (&self.focused, &self.protected) {
            (Some(f), Some(p)) => {
                let (v, _) = gate(
                    &f.before,
                    &f.after,
                    &p.before,
                    &p.after,
                    self.health_declared,
                );
                v == self.verdict
            }
            _ => self.verdict != Verdict::Kept,
        }
    }
}

/// The acceptance rule on exact counts: protected must not regress, and
/// focused must strictly gain, or (when health is declared) tie with
/// strictly better health.
pub fn gate(
    focus_before: &BankMetrics,
    focus_after: &BankMetrics,
    protect_before: &BankMetrics,
    protect_after: &BankMetrics,
    health_declared: bool,
) -> (Verdict, String) {
    if protect_after.m() < protect_before.m() {
        return (
            Verdict::Reverted,
            format!(
                "protected regression {} -> {}",
                protect_before.score(),
                protect_after.score()
            ),
        );
    }
    let (fb, fa) = (focus_before.m(), focus_after.m());
    if fa > fb {
        return (
            Verdict::Kept,
            format!(
                "focused {} -> {}",
                focus_before.score(),
                focus_after.score()
            ),
        );
    }
    if fa == fb && health_declared && focus_after.health.improves_on(&focus_before.health) {
        return (
            Verdict::Kept,
            format!("focused {} with improved health", focus_after.score()),
        );
    }
    let reason = if fa < fb {
        format!(
            "focused regression {} -> {}",
            focus_before.score(),
            focus_after.score()
        )
    } else if health_declared {
        format!(
            "no focused gain at {} and no health gain",
            focus_after.score()
        )
    } else {
        format!("no focused gain at {}", focus_after.score())
    };
    (Verdict::Reverted, reason)
}

/// Builds the decision from precomputed metrics.
pub fn decide(
    baseline_hash: &str,
    candidate_hash: &str,
    focused: MetricPair,
    protected: MetricPair,
    health_declared: bool,
) -> GateDecision {
    let (verdict, reason) = gate(
        &focused.before,
        &focused.after,
        &protected.before,
        &protected.after,
        health_declared,
    );
    GateDecision {
        baseline_hash: baseline_hash.to_string(),
        candidate_hash: candidate_hash.to_string(),
        focused_bank: focused.before.bank.clone(),
        protected_bank: protected.before.bank.clone(),
        health_declared,
        focused: Some(focused),
        protected: Some(protected),
        verdict,
        reason,
    }
}

/// Evaluates both KBs on both banks and applies the acceptance rule.
pub fn accept(
    baseline: &KnowledgeBase,
    candidate: &KnowledgeBase,
    focused: &TaskBank,
    protected: &TaskBank,
    health_declared: bool,
    horizon: usize,
) -> Result<GateDecision, ExecutableError> {
    let m =
        |kb: &KnowledgeBase, bank: &TaskBank| evaluate_bank(kb, bank, horizon).map(|e| e.metrics);
    let focused_pair = MetricPair {
        before: m(baseline, focused)?,
        after: m(candidate, focused)?,
    };
    let protected_pair = MetricPair {
        before: m(baseline, protected)?,
        after: m(candidate, protected)?,
    };
    Ok(decide(
        &baseline.hash(),
        &candidate.hash(),
        focused_pair,
        protected_pair,
        health_declared,
    ))
}

/// Outcome of the applier smoke suite.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SmokeApplyReport {
    pub applied: Vec<String>,
    /// Fixture name and rejection message.
    pub rejected: Vec<(String, String)>,
    /// Fixtures whose outcome contradicts their label.
    pub mismatches: Vec<String>,
}

impl SmokeApplyReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Applies every fixture to `kb` independently. Valid fixtures must apply;
/// corrupted ones must fail with a schema error. No environment is touched.
pub fn smoke_apply(kb: &KnowledgeBase, suite: &[SmokeFixture]) -> SmokeApplyReport {
    let mut report = SmokeApplyReport::default();
    for f in suite {
        let name = f.name.to_string();
        match parse_diff(f.text) {
            Err(e) => {
                if f.valid {
                    report.mismatches.push(name.clone());
                }
                report.rejected.push((name, e.to_string()));
            }
            Ok(d) => match apply_diff(kb, &d) {
                Ok(_) => {
                    if !f.valid {
                        report.mismatches.push(name.clone());
                    }
                    report.applied.push(name);
                }
                Err(r) => {
                    report.mismatches.push(name.clone());
                    report.rejected.push((name, r.reason));
                }
            },
        }
    }
    report
}

/// Compact view of a failed episode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureSample {
    pub task_id: String,
    pub goal: String,
    pub outcome: Outcome,
    /// `(fired rule, command, response)` of the last steps.
    pub last_steps: Vec<(String, String, String)>,
    pub fired_rules: Vec<String>,
    /// Predicates that evaluated false at the last step.
    pub false_predicates: Vec<String>,
}

impl FailureSample {
    pub fn from_record(r: &TrajectoryRecord, last: usize) -> Self {
        let skip = r.steps.len().saturating_sub(last);
        let mut fired_rules: Vec<String> = r.fired_rules().map(str::to_string).collect();
        fired_rules.sort();
        fired_rules.dedup();
        let mut false_predicates: Vec<String> = r
            .steps
            .last()
            .map(|s| {
                s.trace
                    .rule_evals
                    .iter()
                    .flat_map(|e| &e.predicates)
                    .filter(|(_, v)| !v)
                    .map(|(p, _)| p.clone())
                    .collect()
            })
            .unwrap_or_default();
        false_predicates.sort();
        false_predicates.dedup();
        FailureSample {
            task_id: r.task_id.clone(),
            goal: r.goal.clone(),
            outcome: r.outcome,
            last_steps: r.steps[skip..]
                .iter()
                .map(|s| {
                    (
                        s.trace.fired_rule.clone(),
                        s.command.clone(),
                        s.response.clone(),
                    )
                })
                .collect(),
            fired_rules,
            false_predicates,
        }
    }
}

/// Histogram of fired rules over a set of trajectories.
pub fn fired_histogram(records: &[TrajectoryRecord]) -> BTreeMap<String, usize> {
    let mut h = BTreeMap::new();
    for r in records {
        for f in r.fired_rules() {
            *h.entry(f.to_string()).or_insert(0) += 1;
        }
    }
    h
}

/// Commands the environment refused.
pub fn admissible_misses(records: &[TrajectoryRecord]) -> usize {
    records
        .iter()
        .flat_map(|r| &r.steps)
        .filter(|s| !s.accepted)
        .count()
}

/// Result of a few-episode execution smoke run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecReport {
    pub kb_hash: String,
    pub episodes: usize,
    pub successes: usize,
    pub mean_steps: Ratio<u64>,
    pub fired_rules: BTreeMap<String, usize>,
    pub admissible_misses: usize,
    pub failures: Vec<FailureSample>,
}

/// Runs the first `n` tasks of `bank`. Fails before any episode when the
/// KB cannot be loaded, e.g. a rule names a missing skill.
pub fn smoke_execute(
    kb: &KnowledgeBase,
    bank: &TaskBank,
    n: usize,
    horizon: usize,
) -> Result<ExecReport, ExecutableError> {
    Executor::new(kb)?;
    let mut head = bank.clone();
    head.tasks.truncate(n);
    let records = run_bank(kb, &head, horizon)?;
    let steps: u64 = records.iter().map(|r| r.step_count as u64).sum();
    Ok(ExecReport {
        kb_hash: kb.hash(),
        episodes: records.len(),
        successes: records.iter().filter(|r| r.success).count(),
        mean_steps: if records.is_empty() {
            Ratio::from_integer(0)
        } else {
            Ratio::new(steps, records.len() as u64)
        },
        fired_rules: fired_histogram(&records),
        admissible_misses: admissible_misses(&records),
        failures: records
            .iter()
            .filter(|r| !r.success)
            .take(MAX_FAILURE_SAMPLES)
            .map(|r| FailureSample::from_record(r, 5))
            .collect(),
    })
}

#[cfg(test)]
mod tests;
