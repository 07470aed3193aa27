//! Typed field view over a grounded state, and skill argument sources.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};

use super::ground::GroundedState;
use super::trace::EntryRef;
use super::{Executor, TaskBinding};
use crate::env::class_of;
use crate::kb::ArgSource;
use crate::layer::LayerId;
use crate::value::Value;

/// Policy outcome flags exposed as `policy.*` fields while recovery triggers are checked.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PolicyFlags {
    pub inadmissible: bool,
    pub bind_failed: bool,
    pub no_rule: bool,
}

pub(crate) struct View<'a, 'kb> {
    pub exec: &'a Executor<'kb>,
    pub state: &'a GroundedState,
    pub binding: Option<&'a TaskBinding>,
    pub flags: PolicyFlags,
    /// L2 entries consulted while computing fields or arguments.
    pub used: RefCell<BTreeSet<EntryRef>>,
}

impl<'a, 'kb> View<'a, 'kb> {
    pub fn new(
        exec: &'a Executor<'kb>,
        state: &'a GroundedState,
        binding: Option<&'a TaskBinding>,
    ) -> Self {
        View {
            exec,
            state,
            binding,
            flags: PolicyFlags::default(),
            used: RefCell::new(BTreeSet::new()),
        }
    }

    fn fact(&self, class: &str, key: &str) -> Option<&'kb Value> {
        let (entry_key, fact) = self.exec.facts.get(class)?;
        self.used
            .borrow_mut()
            .insert(EntryRef::new(LayerId::L2, entry_key));
        fact.facts.get(key)
    }

    fn target(&self) -> Option<&'a str> {
        self.binding
            .and_then(|b| b.slots.get("target"))
            .map(String::as_str)
    }

    fn verb(&self) -> Option<&'a str> {
        self.binding.and_then(|b| b.process_verb())
    }

    fn is_target(&self, obj: &str) -> bool {
        self.target().is_some_and(|t| class_of(obj) == t)
    }

    fn is_processed(&self, obj: &str) -> bool {
        match self.verb() {
            Some(v) => self
                .state
                .processed_flags
                .get(obj)
                .is_some_and(|s| s.contains(v)),
            None => true,
        }
    }

    fn is_goal(&self, recep: &str) -> bool {
        match self.binding {
            Some(b) if b.uses_deposit() => {
                b.slots.get("recep").is_some_and(|r| class_of(recep) == r)
            }
            _ => false,
        }
    }

    fn tool_for(&self, recep: &str) -> Option<&'kb str> {
        self.fact(class_of(recep), "tool_for")
            .and_then(Value::as_str)
    }

    fn is_task_tool(&self, recep: &str) -> bool {
        match self.verb() {
            Some(v) => self.tool_for(recep) == Some(v),
            None => false,
        }
    }

    fn is_lamp(&self, obj: &str) -> bool {
        self.fact(class_of(obj), "light_source")
            .and_then(Value::as_bool)
            .unwrap_or(false)
    }

    fn contents(&self, recep: &str) -> &'a [String] {
        self.state
            .visible_contents
            .get(recep)
            .map_or(&[], Vec::as_slice)
    }

    fn current(&self) -> Option<&'a str> {
        self.state.current_receptacle.as_deref()
    }

    fn held(&self) -> Option<&'a str> {
        self.state.inventory.first().map(String::as_str)
    }

    fn targets_in(&self, recep: &str) -> impl Iterator<Item = &'a String> + '_ {
        self.contents(recep).iter().filter(|o| self.is_target(o))
    }

    fn placed_count(&self) -> usize {
        self.state
            .visible_contents
            .iter()
            .filter(|(r, _)| self.is_goal(r))
            .map(|(_, objs)| {
                objs.iter()
                    .filter(|o| self.is_target(o) && self.is_processed(o))
                    .count()
            })
            .sum()
    }

    fn task_count(&self) -> i64 {
        self.binding.map_or(1, TaskBinding::count)
    }

    /// Value of a field path, or `None` when the field is not exported by
    /// any grounding entry or has no value in this state.
    pub fn field(&self, path: &str) -> Option<Value> {
        if !self.exec.fields.contains(path) {
            return None;
        }
        self.compute(path)
    }

    fn compute(&self, path: &str) -> Option<Value> {
        let s = self.state;
        let cur = self.current();
        let b = self.binding;
        Some(match path {
            "current.present" => cur.is_some().into(),
            "current.id" => cur?.into(),
            "current.class" => class_of(cur?).into(),
            "current.open_state" => s.open_state.get(cur?)?.as_str().into(),
            "current.searched" => s.searched.contains(cur?).into(),
            "inventory.count" => s.inventory.len().into(),
            "held.id" => self.held()?.into(),
            "held.class" => class_of(self.held()?).into(),
            "held.is_target" => self.held().is_some_and(|h| self.is_target(h)).into(),
            "held.task_processed" => self
                .held()
                .is_some_and(|h| self.verb().is_some() && self.is_processed(h))
                .into(),
            "current.takeable_target_count" => match cur {
                Some(r) if !self.is_goal(r) => self.targets_in(r).count().into(),
                _ => 0usize.into(),
            },
            "current.unprocessed_target_count" => match (cur, self.verb()) {
                (Some(r), Some(_)) => self
                    .targets_in(r)
                    .filter(|o| !self.is_processed(o))
                    .count()
                    .into(),
                _ => 0usize.into(),
            },
            "search.known_target_elsewhere" => (!self.target_elsewhere().is_empty()).into(),
            "goal.placed_count" => self.placed_count().into(),
            "goal.remaining" => (self.task_count() - self.placed_count() as i64)
                .max(0)
                .into(),
            "search.unsearched_count" => s
                .known_receptacles
                .iter()
                .filter(|r| !s.searched.contains(*r))
                .count()
                .into(),
            "search.unvisited_count" => s
                .known_receptacles
                .iter()
                .filter(|r| !s.visited.contains(*r))
                .count()
                .into(),
            "goal.recep_known" => s.known_receptacles.iter().any(|r| self.is_goal(r)).into(),
            "current.tool_for" => self.tool_for(cur?)?.into(),
            "current.is_task_tool" => cur.is_some_and(|r| self.is_task_tool(r)).into(),
            "current.is_goal" => cur.is_some_and(|r| self.is_goal(r)).into(),
            "current.has_lamp" => cur
                .is_some_and(|r| self.contents(r).iter().any(|o| self.is_lamp(o)))
                .into(),
            "lamp.known" => s
                .visible_contents
                .values()
                .flatten()
                .any(|o| self.is_lamp(o))
                .into(),
            "tool.known" => s
                .known_receptacles
                .iter()
                .any(|r| self.is_task_tool(r))
                .into(),
            "task.bound" => b.is_some().into(),
            "task.family" => b?.family.as_str().into(),
            "task.uses_deposit" => b?.uses_deposit().into(),
            "task.uses_light" => b?.uses_light().into(),
            "task.uses_process" => b?.process_verb().is_some().into(),
            "task.process_verb" => b?.process_verb()?.into(),
            "task.count" => b?.count().into(),
            "task.target" => b?.slots.get("target")?.as_str().into(),
            "task.recep" => b?.slots.get("recep")?.as_str().into(),
            "lamp.used" => s.lamp_used.into(),
            "policy.inadmissible" => self.flags.inadmissible.into(),
            "policy.bind_failed" => self.flags.bind_failed.into(),
            "policy.no_rule" => self.flags.no_rule.into(),
            "step.index" => s.step_index.into(),
            _ => return None,
        })
    }

    fn target_elsewhere(&self) -> Vec<String> {
        let cur = self.current();
        self.state
            .visible_contents
            .iter()
            .filter(|(r, objs)| {
                Some(r.as_str()) != cur
                    && !self.is_goal(r)
                    && objs.iter().any(|o| self.is_target(o))
            })
            .map(|(r, _)| r.clone())
            .collect()
    }

    /// Receptacles ranked by the spatial prior for `class`, then by id.
    fn ranked(&self, class: Option<&str>, mut receps: Vec<String>) -> Vec<String> {
        let prior = class.and_then(|c| self.exec.priors.get(c));
        if let Some((key, p)) = prior {
            self.used
                .borrow_mut()
                .insert(EntryRef::new(LayerId::L2, key));
            let rank: BTreeMap<&str, usize> = p
                .ranked
                .iter()
                .enumerate()
                .map(|(i, c)| (c.as_str(), i))
                .collect();
            receps.sort_by_key(|r| {
                (
                    rank.get(class_of(r)).copied().unwrap_or(usize::MAX),
                    r.clone(),
                )
            });
        }
        receps
    }

    fn lamp_class(&self) -> Option<&'a str> {
        self.binding
            .and_then(|b| b.slots.get("lamp").or_else(|| b.slots.get("recep")))
            .map(String::as_str)
    }

    /// Ordered candidate values for a skill argument source.
    pub fn candidates(&self, source: ArgSource) -> Vec<String> {
        let s = self.state;
        let cur = self.current();
        let not_current = |r: &&String| Some(r.as_str()) != cur;
        match source {
            ArgSource::Current => cur.map(str::to_string).into_iter().collect(),
            ArgSource::Held => self.held().map(str::to_string).into_iter().collect(),
            ArgSource::TargetHere => match cur {
                Some(r) => self.targets_in(r).cloned().collect(),
                None => Vec::new(),
            },
            ArgSource::UnprocessedTargetHere => match cur {
                Some(r) => self
                    .targets_in(r)
                    .filter(|o| !self.is_processed(o))
                    .cloned()
                    .collect(),
                None => Vec::new(),
            },
            ArgSource::LampHere => match cur {
                Some(r) => self
                    .contents(r)
                    .iter()
                    .filter(|o| self.is_lamp(o))
                    .cloned()
                    .collect(),
                None => Vec::new(),
            },
            ArgSource::UnsearchedForTarget => {
                let receps = s
                    .known_receptacles
                    .iter()
                    .filter(not_current)
                    .filter(|r| !s.searched.contains(*r))
                    .cloned()
                    .collect();
                self.ranked(self.target(), receps)
            }
            ArgSource::UnvisitedForLamp => {
                let receps = s
                    .known_receptacles
                    .iter()
                    .filter(not_current)
                    .filter(|r| !s.visited.contains(*r))
                    .cloned()
                    .collect();
                self.ranked(self.lamp_class(), receps)
            }
            ArgSource::TargetElsewhere => self.target_elsewhere(),
            ArgSource::GoalReceptacles => s
                .known_receptacles
                .iter()
                .filter(not_current)
                .filter(|r| self.is_goal(r))
                .cloned()
                .collect(),
            ArgSource::TaskTools => s
                .known_receptacles
                .iter()
                .filter(not_current)
                .filter(|r| self.is_task_tool(r))
                .cloned()
                .collect(),
            ArgSource::LampReceptacles => s
                .visible_contents
                .iter()
                .filter(|(r, objs)| Some(r.as_str()) != cur && objs.iter().any(|o| self.is_lamp(o)))
                .map(|(r, _)| r.clone())
                .collect(),
            ArgSource::TaskVerb => self.verb().map(str::to_string).into_iter().collect(),
        }
    }
}
