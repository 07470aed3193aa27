use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::world::{
    is_openable, tool_verb, ObjectSpec, ReceptacleSpec, World, WorldSpec, LAMP_CLASS,
};
use super::{solve, Family, TaskBank, TaskSpec, OBJECT_CLASSES};

pub const DEFAULT_HORIZON: usize = 50;

const PLACE_RECEPS: [&str; 8] = [
    "cabinet",
    "drawer",
    "countertop",
    "shelf",
    "desk",
    "sidetable",
    "diningtable",
    "safe",
];
const FILLER_RECEPS: [&str; 12] = [
    "cabinet",
    "cabinet",
    "drawer",
    "countertop",
    "shelf",
    "desk",
    "sidetable",
    "diningtable",
    "garbagecan",
    "sinkbasin",
    "fridge",
    "microwave",
];
const LAMP_SURFACES: [&str; 3] = ["desk", "sidetable", "shelf"];
const LIGHT_TARGETS: [&str; 6] = [
    "book",
    "pen",
    "pencil",
    "cellphone",
    "keychain",
    "creditcard",
];
const CLEAN_TARGETS: [&str; 9] = [
    "apple", "tomato", "lettuce", "cup", "mug", "plate", "bowl", "spoon", "knife",
];
const HEAT_TARGETS: [&str; 7] = ["potato", "apple", "tomato", "egg", "bread", "cup", "mug"];
const COOL_TARGETS: [&str; 8] = [
    "apple", "potato", "tomato", "lettuce", "egg", "bread", "cup", "mug",
];
const PICK_TARGETS: [&str; 12] = [
    "apple",
    "book",
    "bowl",
    "cellphone",
    "cup",
    "keychain",
    "mug",
    "pen",
    "plate",
    "potato",
    "spoon",
    "tomato",
];

fn tool_class(verb: &str) -> &'static str {
    match verb {
        "clean" => "sinkbasin",
        "heat" => "microwave",
        _ => "fridge",
    }
}

fn task_seed(seed: u64, index: usize) -> u64 {
    // splitmix64 finalizer over (seed, index)
    let mut z = seed
        ^ (index as u64)
            .wrapping_add(1)
            .wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generates a bank in fixed family order (pick, light, clean, heat, cool,
/// two). Every task is certified solvable within the default horizon.
pub fn generate_bank(name: &str, seed: u64, mix: &BTreeMap<Family, usize>) -> TaskBank {
    let mut tasks = Vec::new();
    for family in Family::ALL {
        for _ in 0..mix.get(&family).copied().unwrap_or(0) {
            let index = tasks.len();
            tasks.push(generate_task(seed, index, family));
        }
    }
    let mix = mix
        .iter()
        .filter(|(_, n)| **n > 0)
        .map(|(f, n)| (*f, *n))
        .collect();
    TaskBank {
        name: name.to_string(),
        seed,
        mix,
        horizon: DEFAULT_HORIZON,
        tasks,
    }
}

/// Generates task `index` of a bank; retries the draw until the solver
/// certifies a plan within the horizon.
pub fn generate_task(seed: u64, index: usize, family: Family) -> TaskSpec {
    let tseed = task_seed(seed, index);
    let mut rng = ChaCha8Rng::seed_from_u64(tseed);
    loop {
        let mut task = draw(&mut rng, family);
        task.id = format!("{}-{index:03}", family.short());
        task.seed = tseed;
        if let Some(plan) = solve(&World::new(task.clone()), DEFAULT_HORIZON) {
            if !plan.is_empty() {
                task.certificate = plan;
                return task;
            }
        }
    }
}

fn draw(rng: &mut ChaCha8Rng, family: Family) -> TaskSpec {
    let target: &str = match family {
        Family::Light => LIGHT_TARGETS.choose(rng),
        Family::Clean => CLEAN_TARGETS.choose(rng),
        Family::Heat => HEAT_TARGETS.choose(rng),
        Family::Cool => COOL_TARGETS.choose(rng),
        Family::Pick | Family::Two => PICK_TARGETS.choose(rng),
    }
    .copied()
    .expect("non-empty class list");
    let recep: &str = if family == Family::Light {
        LAMP_CLASS
    } else {
        PLACE_RECEPS.choose(rng).copied().expect("non-empty")
    };

    // Receptacles: mandatory classes first, then fillers.
    let n_recs = rng.random_range(4..=8usize);
    let mut classes: Vec<&str> = Vec::new();
    if family == Family::Light {
        classes.push(LAMP_SURFACES.choose(rng).copied().expect("non-empty"));
    } else {
        classes.push(recep);
    }
    if let Some(v) = family.process_verb() {
        classes.push(tool_class(v));
    }
    // A storage receptacle that is neither goal nor tool, so targets have somewhere to start.
    let storage: Vec<&str> = PLACE_RECEPS
        .iter()
        .copied()
        .filter(|c| *c != recep)
        .collect();
    classes.push(storage.choose(rng).copied().expect("non-empty"));
    while classes.len() < n_recs {
        classes.push(FILLER_RECEPS.choose(rng).copied().expect("non-empty"));
    }
    classes.shuffle(rng);
    let mut counters: BTreeMap<&str, usize> = BTreeMap::new();
    let receptacles: Vec<ReceptacleSpec> = classes
        .iter()
        .map(|c| {
            let n = counters.entry(c).or_insert(0);
            *n += 1;
            let openable = is_openable(c);
            let open = openable && tool_verb(c).is_none() && rng.random_bool(0.25);
            ReceptacleSpec {
                id: format!("{c}_{n}"),
                class: c.to_string(),
                openable,
                open,
            }
        })
        .collect();

    let target_homes: Vec<usize> = (0..receptacles.len())
        .filter(|&i| {
            let c = receptacles[i].class.as_str();
            c != recep && tool_verb(c).is_none()
        })
        .collect();
    let lamp_homes: Vec<usize> = (0..receptacles.len())
        .filter(|&i| !receptacles[i].openable)
        .collect();

    // Objects: targets, the lamp for light tasks, then distractors.
    let n_objs = rng.random_range(6..=12usize);
    let n_targets = match family {
        Family::Two => rng.random_range(2..=3usize),
        _ => rng.random_range(1..=2usize),
    };
    let mut placed: Vec<(String, usize, bool)> = Vec::new();
    for _ in 0..n_targets {
        placed.push((
            target.to_string(),
            *target_homes.choose(rng).expect("storage exists"),
            true,
        ));
    }
    if family == Family::Light {
        let home = lamp_homes
            .iter()
            .copied()
            .find(|&i| receptacles[i].class != "sinkbasin" && receptacles[i].class != "garbagecan")
            .or_else(|| lamp_homes.first().copied())
            .expect("lamp surface exists");
        placed.push((LAMP_CLASS.to_string(), home, false));
    }
    let distractors: Vec<&str> = OBJECT_CLASSES
        .iter()
        .copied()
        .filter(|c| *c != target && *c != LAMP_CLASS)
        .collect();
    while placed.len() < n_objs {
        let class = distractors.choose(rng).copied().expect("non-empty");
        let home = rng.random_range(0..receptacles.len());
        placed.push((class.to_string(), home, true));
    }
    placed.shuffle(rng);
    let mut counters: BTreeMap<String, usize> = BTreeMap::new();
    let objects: Vec<ObjectSpec> = placed
        .into_iter()
        .map(|(class, home, takeable)| {
            let n = counters.entry(class.clone()).or_insert(0);
            *n += 1;
            ObjectSpec {
                id: format!("{class}_{n}"),
                class,
                location: receptacles[home].id.clone(),
                takeable,
            }
        })
        .collect();

    let goal = match family {
        Family::Pick => format!("put a {target} in a {recep}"),
        Family::Two => format!("put two {target}s in a {recep}"),
        Family::Light => format!("look at a {target} under the {recep}"),
        Family::Clean | Family::Heat | Family::Cool => {
            format!(
                "{} a {target} and put it in a {recep}",
                family.process_verb().unwrap_or_default()
            )
        }
    };
    TaskSpec {
        id: String::new(),
        family,
        target_class: target.to_string(),
        recep_class: recep.to_string(),
        seed: 0,
        goal,
        world: WorldSpec {
            receptacles,
            objects,
        },
        certificate: Vec::new(),
    }
}
