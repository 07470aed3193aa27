use std::collections::BTreeMap;

use super::*;
use crate::exec::Environment;

fn small_bank() -> TaskBank {
    let mix = Family::ALL.into_iter().map(|f| (f, 2)).collect();
    generate_bank("small", 11, &mix)
}

#[test]
fn reset_lists_receptacles_and_goal() {
    let bank = small_bank();
    let task = &bank.tasks[0];
    let mut env = HouseholdEnv::new(task);
    let obs = env.reset();
    let fb = obs.feedback().unwrap();
    assert!(fb.starts_with(&format!("Your task is to {}. You see ", task.goal)));
    for r in &task.world.receptacles {
        assert!(fb.contains(&display_id(&r.id)), "{fb}");
    }
    let adm = obs.admissible().unwrap();
    assert!(adm.contains(&"look".to_string()));
    assert!(adm.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn generation_is_deterministic() {
    assert_eq!(small_bank(), small_bank());
    assert_eq!(small_bank().to_json(), small_bank().to_json());
}

#[test]
fn certificates_replay_to_success() {
    for task in &small_bank().tasks {
        let mut env = HouseholdEnv::new(task);
        env.reset();
        let mut last = None;
        for cmd in &task.certificate {
            let out = env.step(cmd);
            assert!(out.admissible, "{}: `{cmd}` rejected", task.id);
            last = Some(out);
        }
        assert!(last.is_some_and(|o| o.success && o.done), "{}", task.id);
        assert_eq!(env.rejected_commands(), 0);
    }
}

#[test]
fn admissible_commands_are_accepted() {
    let bank = small_bank();
    let task = &bank.tasks[1];
    let mut env = HouseholdEnv::new(task);
    let obs = env.reset();
    for cmd in obs.admissible().unwrap() {
        let mut probe = env.clone();
        assert!(probe.step(&cmd).admissible, "{cmd}");
    }
    let out = env.step("fly to the moon");
    assert!(!out.admissible);
    assert_eq!(out.observation.feedback(), Some("Nothing happens."));
    assert_eq!(env.rejected_commands(), 1);
}

#[test]
fn closed_receptacle_blocks_move_until_opened() {
    let bank = small_bank();
    let task = bank
        .tasks
        .iter()
        .find(|t| t.world.receptacles.iter().any(|r| r.openable && !r.open))
        .unwrap();
    let closed = task
        .world
        .receptacles
        .iter()
        .find(|r| r.openable && !r.open)
        .unwrap();
    let takeable = task
        .world
        .objects
        .iter()
        .find(|o| o.takeable && o.location != closed.id)
        .unwrap();
    let mut env = HouseholdEnv::new(task);
    env.reset();
    let home = display_id(&takeable.location);
    assert!(env.step(&format!("go to {home}")).admissible);
    let home_spec = task
        .world
        .receptacles
        .iter()
        .find(|r| r.id == takeable.location)
        .unwrap();
    if home_spec.openable && !home_spec.open {
        assert!(env.step(&format!("open {home}")).admissible);
    }
    let obj = display_id(&takeable.id);
    assert!(env.step(&format!("take {obj} from {home}")).admissible);
    let dest = display_id(&closed.id);
    let arrive = env.step(&format!("go to {dest}"));
    assert_eq!(
        arrive.observation.feedback(),
        Some(format!("You arrive at {dest}. It is closed.").as_str())
    );
    assert!(!env.step(&format!("move {obj} to {dest}")).admissible);
    assert!(env.step(&format!("open {dest}")).admissible);
    let moved = env.step(&format!("move {obj} to {dest}"));
    assert!(moved.admissible);
    assert_eq!(
        moved.observation.feedback(),
        Some(format!("You move {obj} to {dest}.").as_str())
    );
}

#[test]
fn heat_sets_processed_bit() {
    let bank = small_bank();
    let task = bank
        .tasks
        .iter()
        .find(|t| t.family == Family::Heat)
        .unwrap();
    let mut env = HouseholdEnv::new(task);
    env.reset();
    let heat = task
        .certificate
        .iter()
        .position(|c| c.starts_with("heat "))
        .expect("certificate heats");
    for cmd in &task.certificate[..heat] {
        env.step(cmd);
    }
    let target = env
        .world()
        .task
        .world
        .objects
        .iter()
        .position(|o| o.class == task.target_class)
        .unwrap();
    let before: Vec<u8> = env.state().processed.clone();
    env.step(&task.certificate[heat]);
    assert!(env
        .state()
        .processed
        .iter()
        .zip(&before)
        .any(|(a, b)| a & 2 != 0 && b & 2 == 0));
    let _ = target;
}

#[test]
fn success_needs_processing_for_process_families() {
    let bank = small_bank();
    for task in bank.tasks.iter().filter(|t| t.family.is_process()) {
        let verb = task.family.process_verb().unwrap();
        let skipped: Vec<&String> = task
            .certificate
            .iter()
            .filter(|c| !c.starts_with(verb))
            .collect();
        let mut env = HouseholdEnv::new(task);
        env.reset();
        for cmd in skipped {
            env.step(cmd);
        }
        assert!(!env.success(), "{} succeeded without `{verb}`", task.id);
    }
}

#[test]
fn desk_bank_shape() {
    let bank = desk_bank();
    assert_eq!(bank.len(), 30);
    let mut counts: BTreeMap<Family, usize> = BTreeMap::new();
    for t in &bank.tasks {
        *counts.entry(t.family).or_default() += 1;
        let plan = solve(&World::new(t.clone()), DEFAULT_HORIZON).expect("solvable");
        assert_eq!(plan.len(), t.certificate.len(), "{}", t.id);
        assert!(plan.len() <= DEFAULT_HORIZON);
    }
    assert_eq!(counts, bank.mix);
    assert_eq!(bank.tasks[0].id, "pick-000");
}

#[test]
fn zero_mix_is_empty() {
    let mix = Family::ALL.into_iter().map(|f| (f, 0)).collect();
    assert!(generate_bank("none", 1, &mix).is_empty());
}

#[test]
fn contract_round_trips() {
    let c = household_contract();
    let back: InterfaceContract =
        serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
    assert_eq!(c, back);
    assert_eq!(c.hash(), back.hash());
    assert!(!c.mutation_surface.contains_key(&LayerId::S0));
    assert!(c.mutation_surface[&LayerId::L4].contains(&"add_rule".to_string()));
}
