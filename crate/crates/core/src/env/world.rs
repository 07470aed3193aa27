//! World state, command semantics and observation text.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{Family, TaskSpec};

pub const LAMP_CLASS: &str = "desklamp";

/// Process verb realized by a receptacle class, if any.
pub fn tool_verb(class: &str) -> Option<&'static str> {
    match class {
        "sinkbasin" => Some("clean"),
        "microwave" => Some("heat"),
        "fridge" => Some("cool"),
        _ => None,
    }
}

pub fn is_openable(class: &str) -> bool {
    matches!(
        class,
        "cabinet" | "drawer" | "fridge" | "microwave" | "safe"
    )
}

/// `cup_2` -> `cup 2`.
pub fn display_id(id: &str) -> String {
    match id.rsplit_once('_') {
        Some((class, n)) if n.chars().all(|c| c.is_ascii_digit()) => format!("{class} {n}"),
        _ => id.to_string(),
    }
}

/// `cup 2` -> `cup_2`.
pub fn parse_display_id(text: &str) -> String {
    match text.trim().rsplit_once(' ') {
        Some((class, n)) if n.chars().all(|c| c.is_ascii_digit()) => format!("{class}_{n}"),
        _ => text.trim().to_string(),
    }
}

pub fn class_of(id: &str) -> &str {
    id.rsplit_once('_').map_or(id, |(c, _)| c)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReceptacleSpec {
    pub id: String,
    pub class: String,
    pub openable: bool,
    pub open: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub id: String,
    pub class: String,
    /// Receptacle id holding the object at reset.
    pub location: String,
    pub takeable: bool,
}

/// Initial world of one task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldSpec {
    pub receptacles: Vec<ReceptacleSpec>,
    pub objects: Vec<ObjectSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Loc {
    In(u8),
    Held,
}

/// Mutable world state; indexes refer to the task's receptacle and object lists.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WorldState {
    pub open: Vec<bool>,
    pub loc: Vec<Loc>,
    /// Bitmask per object: 1 clean, 2 heat, 4 cool.
    pub processed: Vec<u8>,
    pub agent_at: Option<u8>,
    pub holding: Option<u8>,
    pub lit_with_target: bool,
}

pub fn verb_bit(verb: &str) -> u8 {
    match verb {
        "clean" => 1,
        "heat" => 2,
        "cool" => 4,
        _ => 0,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    GoTo(u8),
    Open(u8),
    Close(u8),
    Take(u8, u8),
    Move(u8, u8),
    Use(u8),
    Process(&'static str, u8, u8),
    Look,
    Inventory,
}

/// Static facts of a task plus the transition function over [`WorldState`].
#[derive(Debug, Clone)]
pub struct World {
    pub task: TaskSpec,
}

impl World {
    pub fn new(task: TaskSpec) -> Self {
        World { task }
    }

    fn spec(&self) -> &WorldSpec {
        &self.task.world
    }

    pub fn initial(&self) -> WorldState {
        let spec = self.spec();
        let rec_index = |id: &str| {
            spec.receptacles
                .iter()
                .position(|r| r.id == id)
                .expect("object location exists") as u8
        };
        WorldState {
            open: spec.receptacles.iter().map(|r| r.open).collect(),
            loc: spec
                .objects
                .iter()
                .map(|o| Loc::In(rec_index(&o.location)))
                .collect(),
            processed: vec![0; spec.objects.len()],
            agent_at: None,
            holding: None,
            lit_with_target: false,
        }
    }

    fn rec(&self, i: u8) -> &ReceptacleSpec {
        &self.spec().receptacles[i as usize]
    }

    fn obj(&self, i: u8) -> &ObjectSpec {
        &self.spec().objects[i as usize]
    }

    fn accessible(&self, s: &WorldState, r: u8) -> bool {
        !self.rec(r).openable || s.open[r as usize]
    }

    fn contents(&self, s: &WorldState, r: u8) -> Vec<u8> {
        (0..s.loc.len() as u8)
            .filter(|&o| s.loc[o as usize] == Loc::In(r))
            .collect()
    }

    pub fn command_text(&self, a: &Action) -> String {
        let r = |i: &u8| display_id(&self.rec(*i).id);
        let o = |i: &u8| display_id(&self.obj(*i).id);
        match a {
            Action::GoTo(x) => format!("go to {}", r(x)),
            Action::Open(x) => format!("open {}", r(x)),
            Action::Close(x) => format!("close {}", r(x)),
            Action::Take(ob, x) => format!("take {} from {}", o(ob), r(x)),
            Action::Move(ob, x) => format!("move {} to {}", o(ob), r(x)),
            Action::Use(ob) => format!("use {}", o(ob)),
            Action::Process(v, ob, x) => format!("{v} {} with {}", o(ob), r(x)),
            Action::Look => "look".into(),
            Action::Inventory => "inventory".into(),
        }
    }

    /// Every action whose preconditions hold, unordered.
    pub fn actions(&self, s: &WorldState) -> Vec<Action> {
        let mut out = vec![Action::Look, Action::Inventory];
        let n_rec = self.spec().receptacles.len() as u8;
        for r in 0..n_rec {
            if s.agent_at != Some(r) {
                out.push(Action::GoTo(r));
            }
        }
        let Some(at) = s.agent_at else { return out };
        let rec = self.rec(at);
        if rec.openable {
            out.push(if s.open[at as usize] {
                Action::Close(at)
            } else {
                Action::Open(at)
            });
        }
        if !self.accessible(s, at) {
            return out;
        }
        for o in self.contents(s, at) {
            let obj = self.obj(o);
            if obj.takeable && s.holding.is_none() {
                out.push(Action::Take(o, at));
            }
            if obj.class == LAMP_CLASS {
                out.push(Action::Use(o));
            }
            if obj.takeable {
                if let Some(v) = tool_verb(&rec.class) {
                    out.push(Action::Process(v, o, at));
                }
            }
        }
        if let Some(h) = s.holding {
            out.push(Action::Move(h, at));
        }
        out
    }

    /// Sorted admissible command texts.
    pub fn admissible(&self, s: &WorldState) -> Vec<String> {
        let mut cmds: Vec<String> = self
            .actions(s)
            .iter()
            .map(|a| self.command_text(a))
            .collect();
        cmds.sort();
        cmds.dedup();
        cmds
    }

    pub fn find_action(&self, s: &WorldState, command: &str) -> Option<Action> {
        let command = command.trim();
        self.actions(s)
            .into_iter()
            .find(|a| self.command_text(a) == command)
    }

    fn list_text(&self, items: &[u8]) -> String {
        if items.is_empty() {
            "nothing".into()
        } else {
            items
                .iter()
                .map(|o| display_id(&self.obj(*o).id))
                .collect::<Vec<_>>()
                .join(", ")
        }
    }

    fn describe_contents(&self, s: &WorldState, r: u8) -> String {
        let items = self.contents(s, r);
        if self.rec(r).openable {
            format!("In it, you see {}.", self.list_text(&items))
        } else {
            format!("On it, you see {}.", self.list_text(&items))
        }
    }

    /// Applies an admissible action and returns the feedback text.
    pub fn apply(&self, s: &mut WorldState, a: &Action) -> String {
        match *a {
            Action::GoTo(r) => {
                s.agent_at = Some(r);
                let name = display_id(&self.rec(r).id);
                if self.rec(r).openable && !s.open[r as usize] {
                    format!("You arrive at {name}. It is closed.")
                } else if self.rec(r).openable {
                    format!(
                        "You arrive at {name}. It is open. {}",
                        self.describe_contents(s, r)
                    )
                } else {
                    format!("You arrive at {name}. {}", self.describe_contents(s, r))
                }
            }
            Action::Open(r) => {
                s.open[r as usize] = true;
                format!(
                    "You open {}. {}",
                    display_id(&self.rec(r).id),
                    self.describe_contents(s, r)
                )
            }
            Action::Close(r) => {
                s.open[r as usize] = false;
                format!("You close {}.", display_id(&self.rec(r).id))
            }
            Action::Take(o, r) => {
                s.loc[o as usize] = Loc::Held;
                s.holding = Some(o);
                format!(
                    "You pick up {} from {}.",
                    display_id(&self.obj(o).id),
                    display_id(&self.rec(r).id)
                )
            }
            Action::Move(o, r) => {
                s.loc[o as usize] = Loc::In(r);
                s.holding = None;
                format!(
                    "You move {} to {}.",
                    display_id(&self.obj(o).id),
                    display_id(&self.rec(r).id)
                )
            }
            Action::Use(o) => {
                if let Some(h) = s.holding {
                    if self.obj(h).class == self.task.target_class {
                        s.lit_with_target = true;
                    }
                }
                format!("You turn on {}.", display_id(&self.obj(o).id))
            }
            Action::Process(v, o, r) => {
                s.processed[o as usize] |= verb_bit(v);
                format!(
                    "You {v} {} with {}.",
                    display_id(&self.obj(o).id),
                    display_id(&self.rec(r).id)
                )
            }
            Action::Look => match s.agent_at {
                Some(r) => format!("You are at {}.", display_id(&self.rec(r).id)),
                None => "You are in the middle of the room.".into(),
            },
            Action::Inventory => match s.holding {
                Some(h) => format!("You are carrying: {}.", display_id(&self.obj(h).id)),
                None => "You are not carrying anything.".into(),
            },
        }
    }

    pub fn reset_text(&self) -> String {
        let mut names: Vec<String> = self
            .spec()
            .receptacles
            .iter()
            .map(|r| display_id(&r.id))
            .collect();
        names.sort();
        format!(
            "Your task is to {}. You see {}.",
            self.task.goal,
            names.join(", ")
        )
    }

    /// Ground-truth success for the task family; reads world state only.
    pub fn success(&self, s: &WorldState) -> bool {
        let t = &self.task;
        let placed = |need_verb: Option<&str>| {
            (0..s.loc.len())
                .filter(|&o| {
                    let obj = &self.spec().objects[o];
                    let in_goal =
                        matches!(s.loc[o], Loc::In(r) if self.rec(r).class == t.recep_class);
                    obj.class == t.target_class
                        && in_goal
                        && need_verb.is_none_or(|v| s.processed[o] & verb_bit(v) != 0)
                })
                .count()
        };
        match t.family {
            Family::Pick => placed(None) >= 1,
            Family::Two => placed(None) >= 2,
            Family::Clean | Family::Heat | Family::Cool => placed(t.family.process_verb()) >= 1,
            Family::Light => {
                s.lit_with_target
                    && s.holding
                        .is_some_and(|h| self.obj(h).class == t.target_class)
            }
        }
    }

    /// Receptacle indexes whose class matches.
    pub fn receptacles_of(&self, class: &str) -> BTreeSet<u8> {
        (0..self.spec().receptacles.len() as u8)
            .filter(|&r| self.rec(r).class == class)
            .collect()
    }
}
