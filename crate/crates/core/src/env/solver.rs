//! Breadth-first search over world states. Used by the generator to certify
//! solvability and by tests as the independent oracle for success counts and
//! shortest plans.

use std::collections::{HashMap, VecDeque};

use super::world::{tool_verb, Action, Loc, World, WorldState, LAMP_CLASS};
use super::Family;

/// Shortest command sequence reaching success within `horizon` steps.
///
/// The search skips actions that can never shorten a plan (`look`,
/// `inventory`, `close`) and restricts take/move/process to the task's target
/// class, goal receptacles and task tool, which keeps the frontier small
/// without excluding any shortest plan.
pub fn solve(world: &World, horizon: usize) -> Option<Vec<String>> {
    let start = world.initial();
    if world.success(&start) {
        return Some(Vec::new());
    }
    let task = &world.task;
    let verb = task.family.process_verb();
    let mut parent: HashMap<WorldState, (WorldState, String)> = HashMap::new();
    let mut depth: HashMap<WorldState, usize> = HashMap::new();
    depth.insert(start.clone(), 0);
    let mut queue = VecDeque::from([start.clone()]);
    while let Some(s) = queue.pop_front() {
        let d = depth[&s];
        if d >= horizon {
            continue;
        }
        for a in world.actions(&s) {
            if !useful(world, &s, &a, verb) {
                continue;
            }
            let mut next = s.clone();
            let text = world.command_text(&a);
            world.apply(&mut next, &a);
            if depth.contains_key(&next) {
                continue;
            }
            depth.insert(next.clone(), d + 1);
            parent.insert(next.clone(), (s.clone(), text));
            if world.success(&next) {
                let mut plan = Vec::new();
                let mut cur = next;
                while let Some((prev, cmd)) = parent.get(&cur) {
                    plan.push(cmd.clone());
                    cur = prev.clone();
                }
                plan.reverse();
                return Some(plan);
            }
            queue.push_back(next);
        }
    }
    None
}

fn useful(world: &World, s: &WorldState, a: &Action, verb: Option<&str>) -> bool {
    let task = &world.task;
    let spec = &task.world;
    let is_target = |o: u8| spec.objects[o as usize].class == task.target_class;
    match a {
        Action::Look | Action::Inventory | Action::Close(_) => false,
        Action::GoTo(_) | Action::Open(_) => true,
        Action::Take(o, _) => is_target(*o),
        Action::Move(o, r) => {
            let class = &spec.receptacles[*r as usize].class;
            is_target(*o)
                && task.family != Family::Light
                && (*class == task.recep_class || (verb.is_some() && tool_verb(class) == verb))
        }
        Action::Use(o) => {
            task.family == Family::Light
                && spec.objects[*o as usize].class == LAMP_CLASS
                && s.holding.is_some_and(is_target)
        }
        Action::Process(v, o, _) => {
            Some(*v) == verb && is_target(*o) && s.loc[*o as usize] != Loc::Held
        }
    }
}
