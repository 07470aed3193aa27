//! Decision traces and trajectory records.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::layer::LayerId;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EntryRef {
    pub layer: LayerId,
    pub key: String,
}

impl EntryRef {
    pub fn new(layer: LayerId, key: &str) -> Self {
        EntryRef {
            layer,
            key: key.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Ground,
    Select,
    Monitor,
    Recover,
    Bind,
}

/// One rule tested during selection, with the predicates it evaluated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleEval {
    pub rule: String,
    pub priority: i64,
    pub fired: bool,
    pub predicates: Vec<(String, bool)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionTrace {
    pub step_index: usize,
    pub entries_used: BTreeMap<Role, BTreeSet<EntryRef>>,
    /// Rule name, `monitor:<name>`, `fallback`, `terminal` or `none`.
    pub fired_rule: String,
    pub rule_evals: Vec<RuleEval>,
    pub skill: Option<String>,
    pub candidates: Vec<String>,
    pub emitted_command: String,
    /// The bound command was not admissible.
    pub invalid: bool,
    pub recovered: bool,
}

impl DecisionTrace {
    pub fn new(step_index: usize) -> Self {
        DecisionTrace {
            step_index,
            entries_used: BTreeMap::new(),
            fired_rule: "none".into(),
            rule_evals: Vec::new(),
            skill: None,
            candidates: Vec::new(),
            emitted_command: String::new(),
            invalid: false,
            recovered: false,
        }
    }

    pub fn add(&mut self, role: Role, entry: EntryRef) {
        self.entries_used.entry(role).or_default().insert(entry);
    }

    pub fn extend(&mut self, role: Role, entries: impl IntoIterator<Item = EntryRef>) {
        let set = self.entries_used.entry(role).or_default();
        set.extend(entries);
    }

    pub fn all_entries(&self) -> BTreeSet<&EntryRef> {
        self.entries_used.values().flatten().collect()
    }

    pub fn is_empty(&self) -> bool {
        self.entries_used.values().all(BTreeSet::is_empty)
    }

    pub fn role_entries(&self, role: Role) -> impl Iterator<Item = &EntryRef> {
        self.entries_used.get(&role).into_iter().flatten()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub observation_digest: String,
    pub state_digest: String,
    pub trace: DecisionTrace,
    pub command: String,
    pub response: String,
    /// Whether the environment accepted the command.
    pub accepted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Horizon,
    Terminal,
    DeadEnd,
    GroundingError,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubgoalProgress {
    pub satisfied: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub task_id: String,
    pub goal: String,
    pub kb_hash: String,
    pub seed: u64,
    pub horizon: usize,
    pub steps: Vec<StepRecord>,
    pub success: bool,
    pub outcome: Outcome,
    pub step_count: usize,
    pub invalid_action_count: usize,
    pub recovery_count: usize,
    pub subgoal_progress: SubgoalProgress,
}

impl TrajectoryRecord {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("trajectory serializes")
    }

    pub fn digest(&self) -> String {
        crate::hash::sha256_hex(self.to_json_line())
    }

    pub fn fired_rules(&self) -> impl Iterator<Item = &str> {
        self.steps.iter().map(|s| s.trace.fired_rule.as_str())
    }
}

/// First line of a `.traj.jsonl` file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryHeader {
    pub kind: String,
    pub kb_hash: String,
    pub bank: String,
    pub seed: u64,
    pub horizon: usize,
    pub episodes: usize,
}

pub fn write_trajectories(
    mut out: impl Write,
    header: &TrajectoryHeader,
    records: &[TrajectoryRecord],
) -> io::Result<()> {
    writeln!(out, "{}", serde_json::to_string(header)?)?;
    for r in records {
        writeln!(out, "{}", r.to_json_line())?;
    }
    Ok(())
}

pub fn read_trajectories(
    input: impl BufRead,
) -> io::Result<(TrajectoryHeader, Vec<TrajectoryRecord>)> {
    let mut lines = input.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, "empty trajectory file"))??;
    let header: TrajectoryHeader = serde_json::from_str(&header_line)?;
    let mut records = Vec::new();
    for line in lines {
        let line = line?;
        if !line.trim().is_empty() {
            records.push(serde_json::from_str(&line)?);
        }
    }
    Ok((header, records))
}
