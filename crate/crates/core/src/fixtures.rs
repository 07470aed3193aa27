//! Shipped knowledge bases and diffs: the household scaffold, the
//! three-round replay script, and the applier smoke suite.

use std::collections::BTreeMap;

use crate::cond::ConditionExpr;
use crate::diff::{apply_diff, parse_diff, KbDiff};
use crate::env::{
    household_contract, is_openable, tool_verb, LAMP_CLASS, OBJECT_CLASSES, RECEPTACLE_CLASSES,
};
use crate::kb::{
    extractor_fields, ArgSource, EntryContent, ExtractorKind, GoalSchemaDef, GroundingDef, KbEntry,
    KnowledgeBase, MonitorDef, ObjectFact, OperatorDef, ParamDecl, PredicateDef, ProvenanceRecord,
    RuleDef, SemType, SkillBinding, SkillDef, SkillParam, SkillStep, SpatialPrior, Threshold,
};
use crate::value::Value;

pub const PICK_PLACE_DIFF: &str = include_str!("../fixtures/diffs/pick_place.yaml");
pub const LIGHT_USE_DIFF: &str = include_str!("../fixtures/diffs/light_use.yaml");
pub const PROCESS_TOOL_DIFF: &str = include_str!("../fixtures/diffs/process_tool.yaml");
pub const OPEN_GOAL_RECEP_DIFF: &str = include_str!("../fixtures/diffs/open_goal_recep.yaml");

/// Applier smoke suite: one valid and one corrupted diff for each of seven ops.
pub const SMOKE_SUITE: [SmokeFixture; 14] = [
    SmokeFixture {
        name: "01_modify_threshold.valid",
        text: include_str!("../fixtures/smoke/01_modify_threshold.valid.yaml"),
        valid: true,
    },
    SmokeFixture {
        name: "02_modify_threshold.corrupt",
        text: include_str!("../fixtures/smoke/02_modify_threshold.corrupt.yaml"),
        valid: false,
    },
    SmokeFixture {
        name: "03_add_predicate.valid",
        text: include_str!("../fixtures/smoke/03_add_predicate.valid.yaml"),
        valid: true,
    },
    SmokeFixture {
        name: "04_add_predicate.corrupt",
        text: include_str!("../fixtures/smoke/04_add_predicate.corrupt.yaml"),
        valid: false,
    },
    SmokeFixture {
        name: "05_add_rule.valid",
        text: include_str!("../fixtures/smoke/05_add_rule.valid.yaml"),
        valid: true,
    },
    SmokeFixture {
        name: "06_add_rule.corrupt",
        text: include_str!("../fixtures/smoke/06_add_rule.corrupt.yaml"),
        valid: false,
    },
    SmokeFixture {
        name: "07_modify_rule_guard.valid",
        text: include_str!("../fixtures/smoke/07_modify_rule_guard.valid.yaml"),
        valid: true,
    },
    SmokeFixture {
        name: "08_modify_rule_guard.corrupt",
        text: include_str!("../fixtures/smoke/08_modify_rule_guard.corrupt.yaml"),
        valid: false,
    },
    SmokeFixture {
        name: "09_extend_skill_body.valid",
        text: include_str!("../fixtures/smoke/09_extend_skill_body.valid.yaml"),
        valid: true,
    },
    SmokeFixture {
        name: "10_extend_skill_body.corrupt",
        text: include_str!("../fixtures/smoke/10_extend_skill_body.corrupt.yaml"),
        valid: false,
    },
    SmokeFixture {
        name: "11_add_object_fact.valid",
        text: include_str!("../fixtures/smoke/11_add_object_fact.valid.yaml"),
        valid: true,
    },
    SmokeFixture {
        name: "12_add_object_fact.corrupt",
        text: include_str!("../fixtures/smoke/12_add_object_fact.corrupt.yaml"),
        valid: false,
    },
    SmokeFixture {
        name: "13_modify_priority.valid",
        text: include_str!("../fixtures/smoke/13_modify_priority.valid.yaml"),
        valid: true,
    },
    SmokeFixture {
        name: "14_modify_priority.corrupt",
        text: include_str!("../fixtures/smoke/14_modify_priority.corrupt.yaml"),
        valid: false,
    },
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SmokeFixture {
    pub name: &'static str,
    pub text: &'static str,
    /// Whether the fixture is expected to apply.
    pub valid: bool,
}

fn cond(src: &str) -> ConditionExpr {
    src.parse()
        .unwrap_or_else(|e| panic!("fixture condition `{src}`: {e}"))
}

fn entry(content: EntryContent) -> KbEntry {
    KbEntry::new(content, vec![ProvenanceRecord::scaffold()])
}

fn predicate(
    name: &str,
    params: &[(&str, SemType)],
    rule: &str,
    threshold: Option<Threshold>,
) -> KbEntry {
    entry(EntryContent::Predicate(PredicateDef {
        name: name.into(),
        params: params
            .iter()
            .map(|(n, t)| ParamDecl {
                name: n.to_string(),
                sem_type: *t,
            })
            .collect(),
        eval_rule: cond(rule),
        threshold,
    }))
}

fn skill(
    name: &str,
    params: &[(&str, SemType, ArgSource)],
    body: &[(Option<&str>, &str)],
) -> KbEntry {
    entry(EntryContent::Skill(SkillDef {
        name: name.into(),
        params: params
            .iter()
            .map(|(n, t, s)| SkillParam {
                name: n.to_string(),
                sem_type: *t,
                source: *s,
            })
            .collect(),
        body: body
            .iter()
            .map(|(w, c)| SkillStep {
                when: w.map(cond),
                command: c.to_string(),
            })
            .collect(),
    }))
}

fn operator(name: &str, pre: &[&str], effects: &[&str], skill: &str, args: &[&str]) -> KbEntry {
    entry(EntryContent::Operator(OperatorDef {
        name: name.into(),
        params: Vec::new(),
        preconditions: pre.iter().map(|s| s.to_string()).collect(),
        effects: effects.iter().map(|s| s.to_string()).collect(),
        bound_skill: SkillBinding {
            skill: skill.into(),
            args: args.iter().map(|s| s.to_string()).collect(),
        },
    }))
}

fn goal(
    name: &str,
    family: &str,
    pattern: &str,
    decomposition: &[&str],
    terminal: &str,
    facts: &[(&str, Value)],
) -> KbEntry {
    entry(EntryContent::GoalSchema(GoalSchemaDef {
        name: name.into(),
        task_family: family.into(),
        pattern: pattern.into(),
        decomposition: decomposition.iter().map(|s| s.to_string()).collect(),
        terminal_condition: cond(terminal),
        facts: facts
            .iter()
            .map(|(k, v)| (k.to_string(), v.clone()))
            .collect(),
    }))
}

/// Predicates of the scaffold: named tests over grounded fields.
fn scaffold_predicates() -> Vec<KbEntry> {
    use SemType::None as Untyped;
    let p = |name: &str, rule: &str| predicate(name, &[], rule, None);
    vec![
        p("always", "all()"),
        p("task_bound", "task.bound = true"),
        p("task_uses_deposit", "task.uses_deposit = true"),
        p("task_uses_light", "task.uses_light = true"),
        p("task_uses_process", "task.uses_process = true"),
        predicate(
            "task_verb",
            &[("verb", Untyped)],
            "task.process_verb = $verb",
            None,
        ),
        p("holds_nothing", "inventory.count = 0"),
        p("holds_target", "held.is_target = true"),
        p("holds_other", "all(not(holds_nothing), not(holds_target))"),
        p("target_processed", "held.task_processed = true"),
        p(
            "ready_to_deposit",
            "all(holds_target, any(not(task_uses_process), target_processed))",
        ),
        p("at_receptacle", "current.present = true"),
        p("at_goal_recep", "current.is_goal = true"),
        p("current_openable_closed", "current.open_state = closed"),
        p(
            "current_accessible",
            "current.open_state in [open, not_openable]",
        ),
        p("current_unsearched", "current.searched = false"),
        p("target_here", "current.takeable_target_count > 0"),
        p(
            "target_known_elsewhere",
            "search.known_target_elsewhere = true",
        ),
        predicate(
            "unsearched_remaining",
            &[],
            "search.unsearched_count > $threshold",
            Some(Threshold {
                value: 0.0,
                min: 0.0,
                max: 8.0,
            }),
        ),
        p("placed_all", "goal.remaining <= 0"),
        predicate(
            "at_process_tool",
            &[("verb", Untyped)],
            "current.tool_for = $verb",
            None,
        ),
        p("at_task_tool", "current.is_task_tool = true"),
        p(
            "target_in_tool_here",
            "current.unprocessed_target_count > 0",
        ),
        p(
            "process_pending_here",
            "any(all(holds_target, not(target_processed)), target_in_tool_here)",
        ),
        p("tool_known", "tool.known = true"),
        p("lamp_known", "lamp.known = true"),
        p("lamp_here", "current.has_lamp = true"),
        p("lamp_used", "lamp.used = true"),
        p("command_inadmissible", "policy.inadmissible = true"),
        p("bind_failed", "policy.bind_failed = true"),
        p("no_rule_fired", "policy.no_rule = true"),
    ]
}

fn scaffold_ontology() -> Vec<KbEntry> {
    let mut out = Vec::new();
    for class in RECEPTACLE_CLASSES {
        let mut facts = BTreeMap::from([
            ("kind".to_string(), Value::from("receptacle")),
            ("openable".to_string(), Value::Bool(is_openable(class))),
        ]);
        if let Some(v) = tool_verb(class) {
            facts.insert("tool_for".into(), Value::from(v));
        }
        out.push(entry(EntryContent::ObjectFact(ObjectFact {
            class: class.into(),
            facts,
        })));
    }
    for class in OBJECT_CLASSES {
        let lamp = class == LAMP_CLASS;
        let mut facts = BTreeMap::from([
            ("kind".to_string(), Value::from("object")),
            ("takeable".to_string(), Value::Bool(!lamp)),
        ]);
        if lamp {
            facts.insert("light_source".into(), Value::Bool(true));
        }
        out.push(entry(EntryContent::ObjectFact(ObjectFact {
            class: class.into(),
            facts,
        })));
    }
    let priors: [(&str, &[&str]); 6] = [
        (LAMP_CLASS, &["desk", "sidetable", "shelf"]),
        ("book", &["desk", "shelf", "sidetable", "drawer"]),
        ("pen", &["desk", "drawer", "sidetable"]),
        ("pencil", &["desk", "drawer", "sidetable"]),
        ("apple", &["countertop", "diningtable", "cabinet"]),
        ("cup", &["cabinet", "countertop", "diningtable"]),
    ];
    for (class, ranked) in priors {
        out.push(entry(EntryContent::SpatialPrior(SpatialPrior {
            class: class.into(),
            ranked: ranked.iter().map(|s| s.to_string()).collect(),
        })));
    }
    out
}

fn scaffold_skills() -> Vec<KbEntry> {
    use ArgSource::*;
    use SemType::{Object, Receptacle, Tool};
    let go = |name: &str, ty: SemType, src: ArgSource| {
        skill(name, &[("recep", ty, src)], &[(None, "go to {recep}")])
    };
    vec![
        skill("LOOK", &[], &[(None, "look")]),
        go("GOTO_UNSEARCHED", Receptacle, UnsearchedForTarget),
        go("GOTO_UNSEARCHED_LAMP", Receptacle, UnvisitedForLamp),
        go("GOTO_TARGET", Receptacle, TargetElsewhere),
        go("GOTO_GOAL", Receptacle, GoalReceptacles),
        go("GOTO_TOOL", Tool, TaskTools),
        go("GOTO_LAMP", Receptacle, LampReceptacles),
        skill(
            "OPEN",
            &[("recep", Receptacle, Current)],
            &[(None, "open {recep}")],
        ),
        skill(
            "TAKE",
            &[("obj", Object, TargetHere), ("recep", Receptacle, Current)],
            &[(None, "take {obj} from {recep}")],
        ),
        skill(
            "PUT",
            &[("obj", Object, Held), ("recep", Receptacle, Current)],
            &[(None, "move {obj} to {recep}")],
        ),
        skill(
            "USE",
            &[("lamp", Object, LampHere)],
            &[(None, "use {lamp}")],
        ),
        skill(
            "PROCESS_HERE",
            &[
                ("tool", Tool, Current),
                ("obj", Object, Held),
                ("target", Object, UnprocessedTargetHere),
                ("verb", SemType::None, TaskVerb),
            ],
            &[
                (Some("current_openable_closed"), "open {tool}"),
                (Some("holds_target"), "move {obj} to {tool}"),
                (Some("target_in_tool_here"), "{verb} {target} with {tool}"),
            ],
        ),
    ]
}

fn scaffold_operators() -> Vec<KbEntry> {
    vec![
        operator(
            "search",
            &["task_bound", "holds_nothing"],
            &["+at_receptacle"],
            "GOTO_UNSEARCHED",
            &["recep"],
        ),
        operator(
            "search_lamp",
            &["task_uses_light", "holds_target"],
            &["+at_receptacle"],
            "GOTO_UNSEARCHED_LAMP",
            &["recep"],
        ),
        operator(
            "take_target",
            &["holds_nothing", "target_here", "current_accessible"],
            &["+holds_target", "-holds_nothing"],
            "TAKE",
            &["obj", "recep"],
        ),
        operator(
            "open_receptacle",
            &["current_openable_closed"],
            &["+current_accessible", "-current_openable_closed"],
            "OPEN",
            &["recep"],
        ),
        operator(
            "transport",
            &["ready_to_deposit"],
            &["+at_goal_recep"],
            "GOTO_GOAL",
            &["recep"],
        ),
        operator(
            "deposit_held",
            &["holds_target", "at_goal_recep", "current_accessible"],
            &["+holds_nothing", "-holds_target"],
            "PUT",
            &["obj", "recep"],
        ),
        operator(
            "goto_tool",
            &["holds_target"],
            &["+at_task_tool"],
            "GOTO_TOOL",
            &["recep"],
        ),
        operator(
            "process_object",
            &["at_task_tool", "process_pending_here"],
            &["-process_pending_here"],
            "PROCESS_HERE",
            &["tool", "obj", "target", "verb"],
        ),
        operator(
            "goto_lamp",
            &["holds_target", "lamp_known"],
            &["+lamp_here"],
            "GOTO_LAMP",
            &["recep"],
        ),
        operator(
            "use_lamp",
            &["holds_target", "lamp_here"],
            &["+lamp_used"],
            "USE",
            &["lamp"],
        ),
    ]
}

fn scaffold_goals() -> Vec<KbEntry> {
    let deposit = ["search", "take_target", "transport", "deposit_held"];
    let process = [
        "search",
        "take_target",
        "goto_tool",
        "process_object",
        "transport",
        "deposit_held",
    ];
    let mut out = vec![
        goal(
            "PickAndPlace",
            "pick_and_place",
            "put a {target} in a {recep}",
            &deposit,
            "placed_all",
            &[
                ("uses_deposit", Value::Bool(true)),
                ("count", Value::Int(1)),
            ],
        ),
        goal(
            "LookInLight",
            "look_at_obj_in_light",
            "look at a {target} under the {lamp}",
            &["search", "take_target", "goto_lamp", "use_lamp"],
            "lamp_used",
            &[("uses_light", Value::Bool(true))],
        ),
    ];
    for (name, family, verb) in [
        ("CleanAndPlace", "pick_clean_then_place", "clean"),
        ("HeatAndPlace", "pick_heat_then_place", "heat"),
        ("CoolAndPlace", "pick_cool_then_place", "cool"),
    ] {
        out.push(goal(
            name,
            family,
            &format!("{verb} a {{target}} and put it in a {{recep}}"),
            &process,
            "placed_all",
            &[
                ("uses_deposit", Value::Bool(true)),
                ("process_verb", Value::from(verb)),
            ],
        ));
    }
    out.push(goal(
        "PickTwoAndPlace",
        "pick_two_obj_and_place",
        "put two {target}s in a {recep}",
        &deposit,
        "placed_all",
        &[
            ("uses_deposit", Value::Bool(true)),
            ("count", Value::Int(2)),
        ],
    ));
    out
}

/// Entries of the scaffold before any learned policy: contract, grounding,
/// predicates, ontology, skills, operators, the LOOK fallback rule, the
/// admissible-command recovery contract and goal schemas.
pub fn scaffold_entries() -> Vec<KbEntry> {
    let mut out = vec![entry(EntryContent::SourceContract(
        household_contract().to_source_contract(),
    ))];
    for kind in ExtractorKind::ALL {
        let source = if kind == ExtractorKind::Status {
            "admissible_commands"
        } else {
            "feedback"
        };
        out.push(entry(EntryContent::Grounding(GroundingDef {
            extractor: kind,
            source_field: source.into(),
            fields: extractor_fields(kind)
                .iter()
                .map(|s| s.to_string())
                .collect(),
        })));
    }
    out.extend(scaffold_predicates());
    out.extend(scaffold_ontology());
    out.extend(scaffold_skills());
    out.extend(scaffold_operators());
    out.push(entry(EntryContent::Rule(RuleDef {
        name: "Fallback".into(),
        priority: 0,
        cond: cond("always"),
        action: "LOOK".into(),
        rationale: "observe when no other rule applies".into(),
        expected_effect: "refreshes the grounded state".into(),
    })));
    out.push(entry(EntryContent::Recovery(MonitorDef {
        name: "AdmissibleFallback".into(),
        trigger: cond("any(command_inadmissible, bind_failed, no_rule_fired)"),
        repair_target: "LOOK".into(),
        protected_scope: "all".into(),
    })));
    out.extend(scaffold_goals());
    out
}

pub fn scaffold_kb() -> KnowledgeBase {
    KnowledgeBase::from_entries("household-scaffold", scaffold_entries())
        .expect("scaffold keys are unique")
}

/// The scripted three-round replay: pick/place, light, then process tools.
pub fn replay_diffs() -> Vec<KbDiff> {
    [PICK_PLACE_DIFF, LIGHT_USE_DIFF, PROCESS_TOOL_DIFF]
        .iter()
        .map(|t| parse_diff(t).expect("shipped diff parses"))
        .collect()
}

/// Scaffold with every replay round applied.
pub fn solved_kb() -> KnowledgeBase {
    let mut kb = scaffold_kb();
    for d in replay_diffs() {
        kb = apply_diff(&kb, &d).expect("replay diff applies").0;
    }
    kb
}

/// The pick/place schema without its goal-opening rule.
pub fn pick_without_open_kb() -> KnowledgeBase {
    let mut d = replay_diffs().remove(0);
    if let crate::diff::Payload::PolicySchema(s) = &mut d.payload {
        s.rules.retain(|r| r.name != "OpenGoalRecep");
    }
    apply_diff(&scaffold_kb(), &d)
        .expect("pick schema applies")
        .0
}

pub fn open_goal_recep_diff() -> KbDiff {
    parse_diff(OPEN_GOAL_RECEP_DIFF).expect("shipped diff parses")
}
