//! Random diff generation for property checks on the applier and the gate.
//!
//! Diffs are generated as documents: well-formed ones are derived from the
//! entries of the KB they target, and a configurable share is then
//! corrupted at the document level before parsing.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Map, Value as Json};

use crate::diff::{apply_diff, diff_from_json, Op, RejectionKind};
use crate::edit::{Editor, EditorError, EditorRequest, Proposal};
use crate::kb::{
    canonical_serialize, parse_kb, resolve_references, type_check_kb, EntryContent, EntryType,
    KnowledgeBase,
};
use crate::layer::LayerId;

/// Document-level corruptions.
pub const MUTATIONS: [&str; 9] = [
    "drop_field",
    "retype_leaf",
    "dangling_name",
    "swap_layer",
    "swap_op",
    "blank_rationale",
    "bad_path",
    "unknown_field",
    "payload_not_mapping",
];

const NOISE: [&str; 8] = [
    "zz_missing",
    "ghost",
    "Unknown",
    "x.y.z",
    "",
    "42",
    "not(",
    "all(nope)",
];

fn fresh_name(rng: &mut ChaCha8Rng, base: &str) -> String {
    format!("{base}_fz{}", rng.random_range(0..100_000u32))
}

fn op_for(t: EntryType) -> (Op, &'static str) {
    match t {
        EntryType::SourceContract => (Op::DeclareSourceBinding, "contract"),
        EntryType::Grounding => (Op::DeclareSourceBinding, "extractor"),
        EntryType::Predicate => (Op::AddPredicate, "predicate"),
        EntryType::ObjectFact => (Op::AddObjectFact, "object"),
        EntryType::SpatialPrior => (Op::AddObjectFact, "prior"),
        EntryType::Operator => (Op::AddOperatorSchema, "operator"),
        EntryType::Skill => (Op::AddSkill, "skill"),
        EntryType::Rule => (Op::AddRule, "rule"),
        EntryType::PolicySchema => (Op::AddPolicySchema, "schema"),
        EntryType::Monitor => (Op::AddMonitor, "monitor"),
        EntryType::Recovery => (Op::AddRecoveryRule, "recovery"),
        EntryType::Experience => (Op::AppendExperience, "record"),
        EntryType::GoalSchema => (Op::AddTaskSchema, "schema"),
    }
}

fn name_field(t: EntryType) -> &'static str {
    match t {
        EntryType::SourceContract => "source",
        EntryType::Grounding => "extractor",
        EntryType::ObjectFact | EntryType::SpatialPrior => "class",
        EntryType::Experience => "evidence_id",
        _ => "name",
    }
}

fn doc(layer: LayerId, key: String, op: Op, path: String, payload: Json) -> Json {
    json!({
        "layer": layer.as_str(),
        "key": key,
        "op": op.as_str(),
        "path": path,
        "payload": payload,
        "evidence": ["fuzz"],
        "rationale": "generated edit",
        "expected_effect": "none in particular",
    })
}

/// A copy of an existing entry under a fresh name, with nested rule names
/// renamed so they stay unique.
fn add_doc(kb: &KnowledgeBase, rng: &mut ChaCha8Rng) -> Option<Json> {
    let e = kb.entries().choose(rng)?;
    let t = e.entry_type();
    let (op, field) = op_for(t);
    let mut content = e.content.to_json();
    let obj = content.as_object_mut()?;
    let name = match t {
        EntryType::Grounding => e.content.name().to_string(),
        EntryType::ObjectFact if rng.random_bool(0.5) => {
            let fact = fresh_name(rng, "fact");
            obj.insert("facts".into(), json!({ fact: true }));
            e.content.name().to_string()
        }
        _ => {
            let n = fresh_name(rng, e.content.name());
            obj.insert(name_field(t).into(), json!(n));
            n
        }
    };
    if let Some(Json::Array(rules)) = obj.get_mut("rules") {
        for r in rules {
            if let Some(n) = r.get("name").and_then(Json::as_str).map(str::to_string) {
                r["name"] = json!(fresh_name(rng, &n));
            }
        }
    }
    if t == EntryType::Rule && rng.random_bool(0.5) {
        obj.remove("priority");
    }
    let container = format!("{}.{}", t.layer().section(), t.container());
    Some(doc(
        t.layer(),
        t.qualify(&name),
        op,
        container,
        json!({ field: content }),
    ))
}

fn random_cond(kb: &KnowledgeBase, rng: &mut ChaCha8Rng, depth: usize) -> String {
    let preds: Vec<&str> = kb
        .entries()
        .iter()
        .filter_map(|e| match &e.content {
            EntryContent::Predicate(p) if p.params.is_empty() => Some(p.name.as_str()),
            _ => None,
        })
        .collect();
    let atom = |rng: &mut ChaCha8Rng| {
        preds
            .choose(rng)
            .map_or("always".to_string(), |p| p.to_string())
    };
    if depth == 0 {
        return atom(rng);
    }
    match rng.random_range(0..4) {
        0 => format!("not({})", random_cond(kb, rng, depth - 1)),
        1 => format!(
            "all({}, {})",
            random_cond(kb, rng, depth - 1),
            random_cond(kb, rng, depth - 1)
        ),
        2 => format!(
            "any({}, {})",
            random_cond(kb, rng, depth - 1),
            random_cond(kb, rng, depth - 1)
        ),
        _ => atom(rng),
    }
}

/// An edit of an existing entry: threshold, guard, priority, skill body or goal fact.
fn modify_doc(kb: &KnowledgeBase, rng: &mut ChaCha8Rng) -> Option<Json> {
    match rng.random_range(0..5) {
        0 => {
            let (name, t) = kb.entries().iter().find_map(|e| match &e.content {
                EntryContent::Predicate(p) => {
                    p.threshold.as_ref().map(|t| (p.name.clone(), t.clone()))
                }
                _ => None,
            })?;
            let v = if rng.random_bool(0.8) {
                rng.random_range(t.min..=t.max)
            } else {
                t.max + 1.0
            };
            Some(doc(
                LayerId::L1,
                format!("predicate.{name}"),
                Op::ModifyThreshold,
                format!("logic.predicates.{name}.threshold"),
                json!({ "value": v.round() }),
            ))
        }
        1 | 2 => {
            let rules = kb.all_rules();
            let (e, schema, r) = rules.choose(rng)?;
            let path = match schema {
                Some(s) => format!("procedural.schemas.{}.rules.{}", s.name, r.name),
                None => format!("procedural.rules.{}", r.name),
            };
            let (op, suffix, payload) = if rng.random_bool(0.5) {
                (
                    Op::ModifyRuleGuard,
                    "cond",
                    json!({ "cond": random_cond(kb, rng, 2) }),
                )
            } else {
                (
                    Op::ModifyPriority,
                    "priority",
                    json!({ "priority": rng.random_range(-20..40) }),
                )
            };
            Some(doc(
                LayerId::L4,
                e.key.clone(),
                op,
                format!("{path}.{suffix}"),
                payload,
            ))
        }
        3 => {
            let skills: Vec<_> = kb
                .entries()
                .iter()
                .filter_map(|e| match &e.content {
                    EntryContent::Skill(s) => Some(s),
                    _ => None,
                })
                .collect();
            let s = skills.choose(rng)?;
            let step = s.body.choose(rng)?;
            Some(doc(
                LayerId::L3,
                format!("skill.{}", s.name),
                Op::ExtendSkillBody,
                format!("causal.skills.{}.body", s.name),
                json!({ "steps": [step] }),
            ))
        }
        _ => {
            let (e, g) = kb.goal_schemas().collect::<Vec<_>>().choose(rng).copied()?;
            let (fact, value) = match rng.random_range(0..3) {
                0 => ("count", json!(rng.random_range(1..3))),
                1 => ("uses_light", json!(rng.random_bool(0.5))),
                _ => (
                    "process_verb",
                    json!(["clean", "heat", "cool", "melt"].choose(rng)),
                ),
            };
            Some(doc(
                LayerId::L7,
                e.key.clone(),
                Op::AddGoalFact,
                format!("goals.schemas.{}.facts", g.name),
                json!({ "fact": fact, "value": value }),
            ))
        }
    }
}

fn leaves(v: &Json, path: &mut Vec<String>, out: &mut Vec<Vec<String>>) {
    match v {
        Json::Object(m) => {
            for (k, x) in m {
                path.push(k.clone());
                leaves(x, path, out);
                path.pop();
            }
        }
        Json::Array(a) => {
            for (i, x) in a.iter().enumerate() {
                path.push(i.to_string());
                leaves(x, path, out);
                path.pop();
            }
        }
        _ => out.push(path.clone()),
    }
}

fn edit_at(obj: &mut Map<String, Json>, path: &[String], f: impl FnOnce(&mut Json)) {
    let mut whole = Json::Object(std::mem::take(obj));
    let target = path.iter().try_fold(&mut whole, |cur, seg| match cur {
        Json::Object(m) => m.get_mut(seg),
        Json::Array(a) => seg.parse::<usize>().ok().and_then(|i| a.get_mut(i)),
        _ => None,
    });
    if let Some(v) = target {
        f(v);
    }
    if let Json::Object(m) = whole {
        *obj = m;
    }
}

/// Applies one named corruption to a diff document.
pub fn corrupt(doc: &mut Json, mutation: &str, rng: &mut ChaCha8Rng) {
    let mut paths = Vec::new();
    leaves(doc, &mut Vec::new(), &mut paths);
    let obj = doc.as_object_mut().expect("diff documents are mappings");
    match mutation {
        "drop_field" => {
            let payload: Vec<&Vec<String>> = paths
                .iter()
                .filter(|p| p.len() > 1 && p[0] == "payload")
                .collect();
            match payload.choose(rng) {
                Some(p) if rng.random_bool(0.7) => {
                    let (last, parent) = p.split_last().expect("non-empty path");
                    edit_at(obj, parent, |v| match v {
                        Json::Object(m) => {
                            m.remove(last);
                        }
                        Json::Array(a) => {
                            if let Ok(i) = last.parse::<usize>() {
                                a.remove(i);
                            }
                        }
                        _ => {}
                    });
                }
                _ => {
                    let k = ["layer", "key", "op", "path", "payload", "rationale"]
                        .choose(rng)
                        .expect("non-empty");
                    obj.remove(*k);
                }
            }
        }
        "retype_leaf" => {
            if let Some(p) = paths.choose(rng) {
                let n = rng.random_range(0..9);
                edit_at(obj, p, |v| {
                    *v = match v {
                        Json::String(_) => json!(n),
                        Json::Number(_) => json!("seven"),
                        Json::Bool(_) => json!([]),
                        _ => json!({ "x": 1 }),
                    }
                });
            }
        }
        "dangling_name" => {
            let payload: Vec<&Vec<String>> = paths
                .iter()
                .filter(|p| p.first().is_some_and(|s| s == "payload"))
                .collect();
            if let Some(p) = payload.choose(rng) {
                let noise = *NOISE.choose(rng).expect("non-empty");
                edit_at(obj, p, |v| *v = json!(noise));
            }
        }
        "swap_layer" => {
            obj.insert(
                "layer".into(),
                json!(LayerId::ALL.choose(rng).expect("non-empty").as_str()),
            );
        }
        "swap_op" => {
            obj.insert(
                "op".into(),
                json!(Op::ALL.choose(rng).expect("non-empty").as_str()),
            );
        }
        "blank_rationale" => {
            obj.insert(
                if rng.random_bool(0.5) {
                    "rationale"
                } else {
                    "expected_effect"
                }
                .into(),
                json!("  "),
            );
        }
        "bad_path" => {
            let p = obj
                .get("path")
                .and_then(Json::as_str)
                .unwrap_or_default()
                .to_string();
            obj.insert(
                "path".into(),
                json!(format!("{p}.{}", NOISE.choose(rng).expect("non-empty"))),
            );
        }
        "unknown_field" => {
            obj.insert("comment".into(), json!("extra"));
        }
        _ => {
            obj.insert("payload".into(), json!("not a mapping"));
        }
    }
}

/// A diff document for `kb`; corrupted with probability `corrupt_ratio`.
/// Returns the document and the applied mutation, if any.
pub fn generate_doc(
    kb: &KnowledgeBase,
    rng: &mut ChaCha8Rng,
    corrupt_ratio: f64,
) -> (Json, Option<&'static str>) {
    let mut d = loop {
        let d = if rng.random_bool(0.5) {
            add_doc(kb, rng)
        } else {
            modify_doc(kb, rng)
        };
        if let Some(d) = d {
            break d;
        }
    };
    if rng.random_bool(corrupt_ratio) {
        let m = *MUTATIONS.choose(rng).expect("non-empty");
        corrupt(&mut d, m, rng);
        (d, Some(m))
    } else {
        (d, None)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FuzzConfig {
    pub cases: usize,
    pub corrupt_ratio: f64,
    pub seed: u64,
    /// Applied results become the base of the next case; the walk returns
    /// to a fixture KB after this many steps.
    pub walk: usize,
}

impl Default for FuzzConfig {
    fn default() -> Self {
        FuzzConfig {
            cases: 1000,
            corrupt_ratio: 0.5,
            seed: 0,
            walk: 16,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct FuzzReport {
    pub cases: usize,
    pub corrupted: usize,
    pub schema_rejected: usize,
    pub apply_rejected: usize,
    pub applied: usize,
    /// Counts per rejection kind: admission, path, payload, reference.
    pub by_kind: [usize; 4],
    pub violations: Vec<String>,
}

impl FuzzReport {
    pub fn rejected(&self) -> usize {
        self.schema_rejected + self.apply_rejected
    }
}

/// Checks a KB produced by an accepted diff.
fn closure_violations(kb: &KnowledgeBase) -> Vec<String> {
    let mut out = Vec::new();
    let checked = type_check_kb(kb);
    if !checked.is_ok() {
        out.push(format!("type check: {}", checked.diagnostics[0]));
    }
    let refs = resolve_references(kb);
    if !refs.is_empty() {
        out.push(format!(
            "references: {} unresolved, first {:?}",
            refs.len(),
            refs.findings[0]
        ));
    }
    let text = canonical_serialize(kb);
    match parse_kb(&text) {
        Ok(back) if back.hash() == kb.hash() => {}
        Ok(_) => out.push("canonical round trip changed the hash".into()),
        Err(e) => out.push(format!("canonical text does not parse: {e}")),
    }
    out
}

/// Generates `cases` diffs against the fixture KBs and checks that every
/// applied diff yields a well-typed, reference-closed KB and that every
/// rejection leaves its input KB unchanged.
pub fn fuzz_apply(fixtures: &[KnowledgeBase], config: &FuzzConfig) -> FuzzReport {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut report = FuzzReport::default();
    for (i, kb) in fixtures.iter().enumerate() {
        for v in closure_violations(kb) {
            report.violations.push(format!("fixture {i}: {v}"));
        }
    }
    if fixtures.is_empty() {
        return report;
    }
    let mut base = fixtures[0].clone();
    for case in 0..config.cases {
        if config.walk == 0 || case % config.walk == 0 {
            base = fixtures[(case / config.walk.max(1)) % fixtures.len()].clone();
        }
        let before = base.hash();
        let (doc, mutation) = generate_doc(&base, &mut rng, config.corrupt_ratio);
        report.cases += 1;
        report.corrupted += mutation.is_some() as usize;
        match diff_from_json(&doc) {
            Err(_) => report.schema_rejected += 1,
            Ok(diff) => match apply_diff(&base, &diff) {
                Err(rej) => {
                    report.apply_rejected += 1;
                    if base.hash() != before {
                        report
                            .violations
                            .push(format!("case {case}: rejected diff changed its input KB"));
                    }
                    report.by_kind[match rej.kind {
                        RejectionKind::Admission => 0,
                        RejectionKind::Path => 1,
                        RejectionKind::Payload => 2,
                        RejectionKind::Reference => 3,
                    }] += 1;
                }
                Ok((next, _)) => {
                    report.applied += 1;
                    for v in closure_violations(&next) {
                        report
                            .violations
                            .push(format!("case {case} ({} {}): {v}", diff.op, diff.key));
                    }
                    if next.version != base.version + 1 {
                        report.violations.push(format!(
                            "case {case}: version {} -> {}",
                            base.version, next.version
                        ));
                    }
                    base = next;
                }
            },
        }
    }
    report
}

/// Proposes one generated diff per request, against the KB text it is shown.
#[derive(Debug, Clone)]
pub struct FuzzEditor {
    rng: ChaCha8Rng,
    corrupt_ratio: f64,
}

impl FuzzEditor {
    pub fn new(seed: u64, corrupt_ratio: f64) -> Self {
        FuzzEditor {
            rng: ChaCha8Rng::seed_from_u64(seed),
            corrupt_ratio,
        }
    }
}

impl Editor for FuzzEditor {
    fn id(&self) -> String {
        "fuzz".into()
    }

    fn propose(&mut self, request: &EditorRequest) -> Result<Proposal, EditorError> {
        let kb = parse_kb(&request.kb_text).map_err(|e| EditorError::Protocol(e.to_string()))?;
        let (doc, _) = generate_doc(&kb, &mut self.rng, self.corrupt_ratio);
        let diff = diff_from_json(&doc).map_err(|e| EditorError::Protocol(e.to_string()))?;
        Ok(Proposal {
            layer_hypothesis: Some(diff.layer),
            diff: Some(diff),
            editor_id: self.id(),
            note: None,
        })
    }
}
