//! Grounding: folds raw observations into a [`GroundedState`].

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::Observation;
use crate::env::parse_display_id;
use crate::kb::ExtractorKind;
use crate::value::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpenState {
    Open,
    Closed,
    NotOpenable,
}

impl OpenState {
    pub fn as_str(self) -> &'static str {
        match self {
            OpenState::Open => "open",
            OpenState::Closed => "closed",
            OpenState::NotOpenable => "not_openable",
        }
    }
}

/// The executor's per-step view of the world, built only from observations.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GroundedState {
    pub current_receptacle: Option<String>,
    pub inventory: Vec<String>,
    pub known_receptacles: BTreeSet<String>,
    /// Last observed contents per receptacle.
    pub visible_contents: BTreeMap<String, Vec<String>>,
    pub open_state: BTreeMap<String, OpenState>,
    pub processed_flags: BTreeMap<String, BTreeSet<String>>,
    pub visited: BTreeSet<String>,
    /// Receptacles whose contents have been observed.
    pub searched: BTreeSet<String>,
    pub lamp_used: bool,
    pub admissible_commands: Vec<String>,
    pub step_index: usize,
    pub goal_text: Option<String>,
    pub last_rejected: bool,
    /// Observation fields not declared by the source contract.
    pub unknown_field_warnings: usize,
}

impl GroundedState {
    pub fn initial() -> Self {
        GroundedState {
            visited: BTreeSet::from(["start".to_string()]),
            ..Default::default()
        }
    }

    pub fn digest(&self) -> String {
        crate::hash::short_digest(
            serde_json::to_string(self)
                .expect("state serializes")
                .as_bytes(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("grounding error: required observation field `{0}` is absent")]
pub struct GroundingError(pub String);

/// Applies the given extractors, in their fixed order, to one observation.
/// Extractors reading a field the source contract does not declare are
/// skipped and counted as warnings.
pub fn ground_with(
    observation: &Observation,
    prev: &GroundedState,
    extractors: &[(ExtractorKind, String)],
    declared_fields: &BTreeSet<String>,
) -> Result<GroundedState, GroundingError> {
    let mut s = prev.clone();
    s.unknown_field_warnings += observation
        .fields
        .keys()
        .filter(|k| !declared_fields.contains(*k))
        .count();
    for (kind, source) in extractors {
        if !declared_fields.contains(source) {
            s.unknown_field_warnings += 1;
            continue;
        }
        let source_value = match observation.fields.get(source) {
            Some(v) => v,
            None => return Err(GroundingError(source.clone())),
        };
        let feedback = observation.feedback().unwrap_or_default();
        match kind {
            ExtractorKind::Location => location(&mut s, feedback),
            ExtractorKind::Inventory => inventory(&mut s, feedback),
            ExtractorKind::Contents => contents(&mut s, feedback),
            ExtractorKind::Frontier => frontier(&mut s, feedback),
            ExtractorKind::Semantics => {}
            ExtractorKind::Task => task(&mut s, feedback),
            ExtractorKind::Status => {
                if let Value::List(items) = source_value {
                    s.admissible_commands = items
                        .iter()
                        .filter_map(|v| v.as_str().map(str::to_string))
                        .collect();
                }
                status(&mut s, feedback);
            }
        }
    }
    Ok(s)
}

fn list_items(text: &str) -> Vec<String> {
    let text = text.trim().trim_end_matches('.');
    if text == "nothing" || text.is_empty() {
        return Vec::new();
    }
    text.split(", ").map(parse_display_id).collect()
}

/// Text between `prefix` and the next sentence end.
fn sentence_after<'a>(fb: &'a str, prefix: &str) -> Option<&'a str> {
    let start = fb.find(prefix)? + prefix.len();
    let rest = &fb[start..];
    Some(
        rest.find(". ")
            .map_or(rest.trim_end_matches('.'), |i| &rest[..i]),
    )
}

fn location(s: &mut GroundedState, fb: &str) {
    if let Some(r) = sentence_after(fb, "You arrive at ") {
        let id = parse_display_id(r);
        s.current_receptacle = Some(id.clone());
        s.visited.insert(id.clone());
        let st = if fb.contains("It is closed.") {
            Some(OpenState::Closed)
        } else if fb.contains("It is open.") {
            Some(OpenState::Open)
        } else if fb.contains("On it, you see") {
            Some(OpenState::NotOpenable)
        } else {
            None
        };
        if let Some(st) = st {
            s.open_state.insert(id, st);
        }
    } else if let Some(r) = sentence_after(fb, "You open ") {
        s.open_state.insert(parse_display_id(r), OpenState::Open);
    } else if let Some(r) = sentence_after(fb, "You close ") {
        s.open_state.insert(parse_display_id(r), OpenState::Closed);
    } else if let Some(r) = sentence_after(fb, "You are at ") {
        s.current_receptacle = Some(parse_display_id(r));
    }
}

fn inventory(s: &mut GroundedState, fb: &str) {
    if let Some(rest) = sentence_after(fb, "You pick up ") {
        if let Some((obj, _)) = rest.split_once(" from ") {
            s.inventory = vec![parse_display_id(obj)];
        }
    } else if let Some(rest) = sentence_after(fb, "You move ") {
        if let Some((obj, _)) = rest.split_once(" to ") {
            let id = parse_display_id(obj);
            s.inventory.retain(|o| *o != id);
        }
    } else if let Some(rest) = sentence_after(fb, "You are carrying: ") {
        s.inventory = vec![parse_display_id(rest)];
    } else if fb.starts_with("You are not carrying anything") {
        s.inventory.clear();
    }
}

fn contents(s: &mut GroundedState, fb: &str) {
    let here = s.current_receptacle.clone();
    for marker in ["In it, you see ", "On it, you see "] {
        if let (Some(items), Some(r)) = (sentence_after(fb, marker), here.as_ref()) {
            s.visible_contents.insert(r.clone(), list_items(items));
            s.searched.insert(r.clone());
        }
    }
    if let Some(rest) = sentence_after(fb, "You pick up ") {
        if let Some((obj, r)) = rest.split_once(" from ") {
            let (obj, r) = (parse_display_id(obj), parse_display_id(r));
            if let Some(items) = s.visible_contents.get_mut(&r) {
                items.retain(|o| *o != obj);
            }
        }
    } else if let Some(rest) = sentence_after(fb, "You move ") {
        if let Some((obj, r)) = rest.split_once(" to ") {
            let (obj, r) = (parse_display_id(obj), parse_display_id(r));
            let items = s.visible_contents.entry(r).or_default();
            if !items.contains(&obj) {
                items.push(obj);
                items.sort();
            }
        }
    }
}

fn frontier(s: &mut GroundedState, fb: &str) {
    if fb.starts_with("Your task is to ") {
        if let Some(list) = sentence_after(fb, "You see ") {
            s.known_receptacles.extend(list_items(list));
        }
    }
    if let Some(r) = sentence_after(fb, "You arrive at ") {
        s.known_receptacles.insert(parse_display_id(r));
    }
}

fn task(s: &mut GroundedState, fb: &str) {
    if let Some(goal) = sentence_after(fb, "Your task is to ") {
        s.goal_text = Some(goal.to_string());
    }
}

fn status(s: &mut GroundedState, fb: &str) {
    s.last_rejected = fb.trim() == "Nothing happens.";
    if fb.starts_with("You turn on ") && !s.inventory.is_empty() {
        s.lamp_used = true;
    }
    for verb in crate::kb::PROCESS_VERBS {
        if let Some(rest) = sentence_after(fb, &format!("You {verb} ")) {
            if let Some((obj, _)) = rest.split_once(" with ") {
                s.processed_flags
                    .entry(parse_display_id(obj))
                    .or_default()
                    .insert(verb.to_string());
            }
        }
    }
}
