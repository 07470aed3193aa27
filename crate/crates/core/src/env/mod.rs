//! A seed-generated household text environment: one room of receptacles,
//! takeable objects, process tools and a desk lamp, with the six task
//! families of the desk benchmark.

mod gen;
mod solver;
mod world;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::exec::{Environment, Observation, StepOutcome};
use crate::kb::SourceContract;
use crate::layer::LayerId;

pub use gen::{generate_bank, generate_task, DEFAULT_HORIZON};
pub use solver::solve;
pub use world::{
    class_of, display_id, is_openable, parse_display_id, tool_verb, ObjectSpec, ReceptacleSpec,
    World, WorldSpec, WorldState, LAMP_CLASS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "pick_and_place")]
    Pick,
    #[serde(rename = "look_at_obj_in_light")]
    Light,
    #[serde(rename = "pick_clean_then_place")]
    Clean,
    #[serde(rename = "pick_heat_then_place")]
    Heat,
    #[serde(rename = "pick_cool_then_place")]
    Cool,
    #[serde(rename = "pick_two_obj_and_place")]
    Two,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::Pick,
        Family::Light,
        Family::Clean,
        Family::Heat,
        Family::Cool,
        Family::Two,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Pick => "pick_and_place",
            Family::Light => "look_at_obj_in_light",
            Family::Clean => "pick_clean_then_place",
            Family::Heat => "pick_heat_then_place",
            Family::Cool => "pick_cool_then_place",
            Family::Two => "pick_two_obj_and_place",
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            Family::Pick => "pick",
            Family::Light => "light",
            Family::Clean => "clean",
            Family::Heat => "heat",
            Family::Cool => "cool",
            Family::Two => "two",
        }
    }

    pub fn process_verb(self) -> Option<&'static str> {
        match self {
            Family::Clean => Some("clean"),
            Family::Heat => Some("heat"),
            Family::Cool => Some("cool"),
            _ => None,
        }
    }

    pub fn is_process(self) -> bool {
        self.process_verb().is_some()
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Family::ALL
            .into_iter()
            .find(|f| f.as_str() == s || f.short() == s)
            .ok_or_else(|| format!("unknown task family `{s}`"))
    }
}

/// One generated task with its world and solver certificate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: String,
    pub family: Family,
    pub target_class: String,
    /// Goal receptacle class, or the lamp class for light tasks.
    pub recep_class: String,
    pub seed: u64,
    pub goal: String,
    pub world: WorldSpec,
    /// Shortest successful command sequence found by the solver.
    pub certificate: Vec<String>,
}

/// An ordered, reproducible set of tasks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskBank {
    pub name: String,
    pub seed: u64,
    pub mix: BTreeMap<Family, usize>,
    pub horizon: usize,
    pub tasks: Vec<TaskSpec>,
}

impl TaskBank {
    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn task(&self, id: &str) -> Option<&TaskSpec> {
        self.tasks.iter().find(|t| t.id == id)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("bank serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Sub-bank with the tasks of the given families, in bank order.
    pub fn filter(&self, name: &str, families: &[Family]) -> TaskBank {
        let tasks: Vec<TaskSpec> = self
            .tasks
            .iter()
            .filter(|t| families.contains(&t.family))
            .cloned()
            .collect();
        let mix = self
            .mix
            .iter()
            .filter(|(f, _)| families.contains(f))
            .map(|(f, n)| (*f, *n))
            .collect();
        TaskBank {
            name: name.to_string(),
            seed: self.seed,
            mix,
            horizon: self.horizon,
            tasks,
        }
    }
}

/// The desk bank: seed 7 with 10 pick, 6 light, 5 clean, 5 heat, 4 cool.
pub fn desk_bank() -> TaskBank {
    let mix = BTreeMap::from([
        (Family::Pick, 10),
        (Family::Light, 6),
        (Family::Clean, 5),
        (Family::Heat, 5),
        (Family::Cool, 4),
    ]);
    generate_bank("desk", 7, &mix)
}

/// The environment's public interface: observation schema, action
/// vocabulary, success signal and the editable mutation surface.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterfaceContract {
    pub name: String,
    pub version: String,
    pub observation_fields: BTreeMap<String, String>,
    /// Feedback sentence forms, for grounding authors.
    pub observation_grammar: Vec<String>,
    pub actions: Vec<String>,
    pub success_signal: String,
    pub object_classes: Vec<String>,
    pub receptacle_classes: Vec<String>,
    pub task_families: Vec<String>,
    pub notes: Vec<String>,
    /// Layer to the operations an editor may propose there.
    pub mutation_surface: BTreeMap<LayerId, Vec<String>>,
}

impl InterfaceContract {
    pub fn to_source_contract(&self) -> SourceContract {
        SourceContract {
            source: self.name.clone(),
            observation_fields: self.observation_fields.clone(),
            actions: self.actions.clone(),
            success_signal: self.success_signal.clone(),
            object_classes: self.object_classes.clone(),
            receptacle_classes: self.receptacle_classes.clone(),
            task_families: self.task_families.clone(),
        }
    }

    pub fn hash(&self) -> String {
        crate::hash::sha256_hex(
            serde_json::to_string(self)
                .expect("contract serializes")
                .as_bytes(),
        )
    }
}

pub const OBJECT_CLASSES: [&str; 19] = [
    "apple",
    "book",
    "bowl",
    "bread",
    "cellphone",
    "creditcard",
    "cup",
    "desklamp",
    "egg",
    "keychain",
    "knife",
    "lettuce",
    "mug",
    "pen",
    "pencil",
    "plate",
    "potato",
    "spoon",
    "tomato",
];

pub const RECEPTACLE_CLASSES: [&str; 12] = [
    "cabinet",
    "countertop",
    "desk",
    "diningtable",
    "drawer",
    "fridge",
    "garbagecan",
    "microwave",
    "safe",
    "shelf",
    "sidetable",
    "sinkbasin",
];

pub fn household_contract() -> InterfaceContract {
    let mutation_surface = crate::diff::admission_matrix()
        .into_iter()
        .filter(|(layer, _)| *layer != LayerId::S0)
        .map(|(layer, ops)| {
            (
                layer,
                ops.into_iter()
                    .map(|(op, _)| op.as_str().to_string())
                    .collect(),
            )
        })
        .collect();
    InterfaceContract {
        name: "household".into(),
        version: "1".into(),
        observation_fields: BTreeMap::from([
            ("admissible_commands".to_string(), "command_list".to_string()),
            ("feedback".to_string(), "text".to_string()),
        ]),
        observation_grammar: vec![
            "Your task is to {goal}. You see {receptacle}, ....".into(),
            "You arrive at {receptacle}. It is closed.".into(),
            "You arrive at {receptacle}. It is open. In it, you see {object}, ....".into(),
            "You arrive at {receptacle}. On it, you see {object}, ....".into(),
            "You open {receptacle}. In it, you see {object}, ....".into(),
            "You close {receptacle}.".into(),
            "You pick up {object} from {receptacle}.".into(),
            "You move {object} to {receptacle}.".into(),
            "You turn on {object}.".into(),
            "You {verb} {object} with {receptacle}.".into(),
            "You are at {receptacle}.".into(),
            "You are in the middle of the room.".into(),
            "You are carrying: {object}.".into(),
            "You are not carrying anything.".into(),
            "Nothing happens.".into(),
        ],
        actions: vec![
            "go to {receptacle}".into(),
            "open {receptacle}".into(),
            "close {receptacle}".into(),
            "take {object} from {receptacle}".into(),
            "move {object} to {receptacle}".into(),
            "use {object}".into(),
            "clean {object} with {receptacle}".into(),
            "heat {object} with {receptacle}".into(),
            "cool {object} with {receptacle}".into(),
            "look".into(),
            "inventory".into(),
        ],
        success_signal: "the environment's task predicate over world state: target placed in a goal-class receptacle \
                         (processed first for clean/heat/cool, two of them for two-object tasks), or the target held \
                         while a desk lamp is turned on"
            .into(),
        object_classes: OBJECT_CLASSES.iter().map(|s| s.to_string()).collect(),
        receptacle_classes: RECEPTACLE_CLASSES.iter().map(|s| s.to_string()).collect(),
        task_families: Family::ALL.iter().map(|f| f.as_str().to_string()).collect(),
        notes: vec![
            "Inventory holds one object.".into(),
            "Processing requires the object inside the tool receptacle, which must be open if openable.".into(),
            "Light tasks require the target to be held when the lamp is used.".into(),
            "Inadmissible commands leave the world unchanged and return `Nothing happens.`".into(),
        ],
        mutation_surface,
    }
}

/// One live episode over a generated task.
#[derive(Debug, Clone)]
pub struct HouseholdEnv {
    world: World,
    state: WorldState,
    rejected: usize,
}

impl HouseholdEnv {
    pub fn new(task: &TaskSpec) -> Self {
        let world = World::new(task.clone());
        let state = world.initial();
        HouseholdEnv {
            world,
            state,
            rejected: 0,
        }
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    pub fn admissible(&self) -> Vec<String> {
        self.world.admissible(&self.state)
    }

    pub fn success(&self) -> bool {
        self.world.success(&self.state)
    }

    /// Commands the environment refused this episode.
    pub fn rejected_count(&self) -> usize {
        self.rejected
    }

    fn observation(&self, feedback: String) -> Observation {
        Observation::new(feedback, self.admissible())
    }
}

impl Environment for HouseholdEnv {
    fn reset(&mut self) -> Observation {
        self.state = self.world.initial();
        self.rejected = 0;
        self.observation(self.world.reset_text())
    }

    fn step(&mut self, command: &str) -> StepOutcome {
        match self.world.find_action(&self.state, command) {
            Some(a) => {
                let text = self.world.apply(&mut self.state, &a);
                let success = self.success();
                StepOutcome {
                    observation: self.observation(text),
                    done: success,
                    success,
                    admissible: true,
                }
            }
            None => {
                self.rejected += 1;
                StepOutcome {
                    observation: self.observation("Nothing happens.".into()),
                    done: false,
                    success: false,
                    admissible: false,
                }
            }
        }
    }

    fn task_id(&self) -> &str {
        &self.world.task.id
    }

    fn rejected_commands(&self) -> usize {
        self.rejected
    }
}

#[cfg(test)]
mod tests;
