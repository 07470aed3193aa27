//! Typed knowledge-base edits: parsing, validation against the layer
//! admission matrix, and deterministic application with audit records.

mod op;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value as Json};

use crate::cond::ConditionExpr;
use crate::kb::{
    doc::read_document, resolve_references, type_check_entry, CheckResult, CommitRecord,
    EntryContent, EntryType, ExperienceRecord, GoalSchemaDef, GroundingDef, KbEntry, KnowledgeBase,
    MonitorDef, ObjectFact, OperatorDef, PolicySchemaDef, PredicateDef, ProvenanceRecord, RuleDef,
    SkillDef, SkillStep, SourceContract, SpatialPrior,
};
use crate::layer::LayerId;
use crate::value::Value;

pub use op::{admission_matrix, admits, target_types, Op};

/// Op-specific payload of a diff.
#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Predicate(PredicateDef),
    Threshold(f64),
    Rule {
        rule: RuleDef,
        explicit_priority: bool,
    },
    Guard(ConditionExpr),
    Priority(i64),
    PolicySchema(PolicySchemaDef),
    Skill(SkillDef),
    SkillSteps(Vec<SkillStep>),
    Operator(OperatorDef),
    ObjectFact(ObjectFact),
    SpatialPrior(SpatialPrior),
    Monitor(MonitorDef),
    Recovery(MonitorDef),
    Experience(ExperienceRecord),
    TaskSchema(GoalSchemaDef),
    GoalFact {
        fact: String,
        value: Value,
    },
    SourceContract(SourceContract),
    Extractor(GroundingDef),
}

impl Payload {
    pub fn to_json(&self) -> Json {
        let v = |x: Result<Json, serde_json::Error>| x.expect("payload is representable as JSON");
        match self {
            Payload::Predicate(p) => json!({ "predicate": v(serde_json::to_value(p)) }),
            Payload::Threshold(x) => json!({ "value": x }),
            Payload::Rule {
                rule,
                explicit_priority,
            } => {
                let mut r = v(serde_json::to_value(rule));
                if !explicit_priority {
                    r.as_object_mut()
                        .expect("rule is an object")
                        .remove("priority");
                }
                json!({ "rule": r })
            }
            Payload::Guard(c) => json!({ "cond": c.to_string() }),
            Payload::Priority(p) => json!({ "priority": p }),
            Payload::PolicySchema(s) => json!({ "schema": v(serde_json::to_value(s)) }),
            Payload::Skill(s) => json!({ "skill": v(serde_json::to_value(s)) }),
            Payload::SkillSteps(s) => json!({ "steps": v(serde_json::to_value(s)) }),
            Payload::Operator(o) => json!({ "operator": v(serde_json::to_value(o)) }),
            Payload::ObjectFact(o) => json!({ "object": v(serde_json::to_value(o)) }),
            Payload::SpatialPrior(p) => json!({ "prior": v(serde_json::to_value(p)) }),
            Payload::Monitor(m) => json!({ "monitor": v(serde_json::to_value(m)) }),
            Payload::Recovery(m) => json!({ "recovery": v(serde_json::to_value(m)) }),
            Payload::Experience(r) => json!({ "record": v(serde_json::to_value(r)) }),
            Payload::TaskSchema(g) => json!({ "schema": v(serde_json::to_value(g)) }),
            Payload::GoalFact { fact, value } => {
                json!({ "fact": fact, "value": v(serde_json::to_value(value)) })
            }
            Payload::SourceContract(c) => json!({ "contract": v(serde_json::to_value(c)) }),
            Payload::Extractor(g) => json!({ "extractor": v(serde_json::to_value(g)) }),
        }
    }

    /// The entry content this payload creates, for add-ops.
    fn new_content(&self) -> Option<EntryContent> {
        Some(match self {
            Payload::Predicate(p) => EntryContent::Predicate(p.clone()),
            Payload::Rule { rule, .. } => EntryContent::Rule(rule.clone()),
            Payload::PolicySchema(s) => EntryContent::PolicySchema(s.clone()),
            Payload::Skill(s) => EntryContent::Skill(s.clone()),
            Payload::Operator(o) => EntryContent::Operator(o.clone()),
            Payload::ObjectFact(o) => EntryContent::ObjectFact(o.clone()),
            Payload::SpatialPrior(p) => EntryContent::SpatialPrior(p.clone()),
            Payload::Monitor(m) => EntryContent::Monitor(m.clone()),
            Payload::Recovery(m) => EntryContent::Recovery(m.clone()),
            Payload::Experience(r) => EntryContent::Experience(r.clone()),
            Payload::TaskSchema(g) => EntryContent::GoalSchema(g.clone()),
            Payload::SourceContract(c) => EntryContent::SourceContract(c.clone()),
            Payload::Extractor(g) => EntryContent::Grounding(g.clone()),
            _ => return None,
        })
    }
}

/// One typed edit proposal.
#[derive(Debug, Clone, PartialEq)]
pub struct KbDiff {
    pub layer: LayerId,
    pub key: String,
    pub op: Op,
    pub path: String,
    pub payload: Payload,
    pub evidence: Vec<String>,
    pub metric: String,
    pub regression_set: String,
    pub rationale: String,
    pub expected_effect: String,
}

impl KbDiff {
    pub fn to_document(&self) -> Json {
        json!({
            "layer": self.layer.as_str(),
            "key": self.key,
            "op": self.op.as_str(),
            "path": self.path,
            "payload": self.payload.to_json(),
            "evidence": self.evidence,
            "metric": self.metric,
            "regression_set": self.regression_set,
            "rationale": self.rationale,
            "expected_effect": self.expected_effect,
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_document()).expect("diff serializes");
        s.push('\n');
        s
    }

    pub fn digest(&self) -> String {
        crate::hash::sha256_hex(
            serde_json::to_string(&self.to_document()).expect("diff serializes"),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize)]
#[error("{message}")]
pub struct SchemaError {
    pub field: String,
    pub message: String,
}

impl SchemaError {
    fn missing(field: &str) -> Self {
        SchemaError {
            field: field.to_string(),
            message: format!("{field} missing"),
        }
    }

    fn invalid(field: &str, detail: impl std::fmt::Display) -> Self {
        SchemaError {
            field: field.to_string(),
            message: format!("{field} invalid: {detail}"),
        }
    }
}

const REQUIRED: [&str; 7] = [
    "layer",
    "key",
    "op",
    "path",
    "payload",
    "rationale",
    "expected_effect",
];
const OPTIONAL: [&str; 3] = ["evidence", "metric", "regression_set"];

/// Parses a diff document (JSON or YAML).
pub fn parse_diff(text: &str) -> Result<KbDiff, SchemaError> {
    let doc = read_document(text).map_err(|e| SchemaError {
        field: String::new(),
        message: e.to_string(),
    })?;
    diff_from_json(&doc)
}

pub fn diff_from_json(doc: &Json) -> Result<KbDiff, SchemaError> {
    let obj = doc
        .as_object()
        .ok_or_else(|| SchemaError::invalid("document", "expected a mapping"))?;
    for k in obj.keys() {
        if !REQUIRED.contains(&k.as_str()) && !OPTIONAL.contains(&k.as_str()) {
            return Err(SchemaError {
                field: k.clone(),
                message: format!("unknown field `{k}`"),
            });
        }
    }
    for f in REQUIRED {
        if obj.get(f).is_none_or(Json::is_null) {
            return Err(SchemaError::missing(f));
        }
    }
    let text = |f: &str| -> Result<String, SchemaError> {
        match obj.get(f) {
            None | Some(Json::Null) => Ok(String::new()),
            Some(Json::String(s)) => Ok(s.clone()),
            Some(_) => Err(SchemaError::invalid(f, "expected a string")),
        }
    };
    let op: Op = text("op")?.parse().map_err(|m: String| SchemaError {
        field: "op".into(),
        message: m,
    })?;
    let layer: LayerId = text("layer")?
        .parse()
        .map_err(|m| SchemaError::invalid("layer", m))?;
    let rationale = text("rationale")?;
    let expected_effect = text("expected_effect")?;
    for (f, v) in [
        ("rationale", &rationale),
        ("expected_effect", &expected_effect),
    ] {
        if v.trim().is_empty() {
            return Err(SchemaError {
                field: f.into(),
                message: format!("{f} is empty"),
            });
        }
    }
    let evidence = match obj.get("evidence") {
        None | Some(Json::Null) => Vec::new(),
        Some(v) => {
            serde_json::from_value(v.clone()).map_err(|e| SchemaError::invalid("evidence", e))?
        }
    };
    let payload = parse_payload(op, &obj["payload"])?;
    Ok(KbDiff {
        layer,
        key: text("key")?,
        op,
        path: text("path")?,
        payload,
        evidence,
        metric: text("metric")?,
        regression_set: text("regression_set")?,
        rationale,
        expected_effect,
    })
}

fn de<T: serde::de::DeserializeOwned>(prefix: &str, v: &Json) -> Result<T, SchemaError> {
    serde_path_to_error::deserialize(v).map_err(|e| {
        let path = e.path().to_string();
        let base = if path == "." {
            prefix.to_string()
        } else {
            format!("{prefix}.{path}")
        };
        let inner = e.inner().to_string();
        match inner
            .strip_prefix("missing field `")
            .and_then(|r| r.split('`').next())
        {
            Some(field) => SchemaError::missing(&format!("{base}.{field}")),
            None => SchemaError::invalid(&base, inner),
        }
    })
}

fn parse_payload(op: Op, payload: &Json) -> Result<Payload, SchemaError> {
    let obj = payload
        .as_object()
        .ok_or_else(|| SchemaError::invalid("payload", "expected a mapping"))?;
    let field = |name: &str| -> Result<&Json, SchemaError> {
        obj.get(name)
            .filter(|v| !v.is_null())
            .ok_or_else(|| SchemaError::missing(&format!("payload.{name}")))
    };
    let one_of = |names: &[&str]| -> Result<&'static str, SchemaError> {
        for n in names {
            if obj.contains_key(*n) {
                return Ok(match *n {
                    "object" => "object",
                    "prior" => "prior",
                    "contract" => "contract",
                    _ => "extractor",
                });
            }
        }
        Err(SchemaError::missing(&format!(
            "payload.{}",
            names.join("|")
        )))
    };
    Ok(match op {
        Op::AddPredicate => Payload::Predicate(de("payload.predicate", field("predicate")?)?),
        Op::ModifyThreshold => Payload::Threshold(de("payload.value", field("value")?)?),
        Op::AddRule => {
            let mut rule = field("rule")?.clone();
            let explicit_priority = rule.get("priority").is_some();
            if let Some(m) = rule.as_object_mut() {
                m.entry("priority").or_insert(json!(0));
            }
            Payload::Rule {
                rule: de("payload.rule", &rule)?,
                explicit_priority,
            }
        }
        Op::ModifyRuleGuard => Payload::Guard(de("payload.cond", field("cond")?)?),
        Op::ModifyPriority => Payload::Priority(de("payload.priority", field("priority")?)?),
        Op::AddPolicySchema => Payload::PolicySchema(de("payload.schema", field("schema")?)?),
        Op::AddSkill => Payload::Skill(de("payload.skill", field("skill")?)?),
        Op::ExtendSkillBody => Payload::SkillSteps(de("payload.steps", field("steps")?)?),
        Op::AddOperatorSchema => Payload::Operator(de("payload.operator", field("operator")?)?),
        Op::AddObjectFact => match one_of(&["object", "prior"])? {
            "object" => Payload::ObjectFact(de("payload.object", field("object")?)?),
            _ => Payload::SpatialPrior(de("payload.prior", field("prior")?)?),
        },
        Op::AddMonitor => Payload::Monitor(de("payload.monitor", field("monitor")?)?),
        Op::AddRecoveryRule => Payload::Recovery(de("payload.recovery", field("recovery")?)?),
        Op::AppendExperience => Payload::Experience(de("payload.record", field("record")?)?),
        Op::AddTaskSchema => Payload::TaskSchema(de("payload.schema", field("schema")?)?),
        Op::AddGoalFact => Payload::GoalFact {
            fact: de("payload.fact", field("fact")?)?,
            value: de("payload.value", field("value")?)?,
        },
        Op::DeclareSourceBinding => match one_of(&["contract", "extractor"])? {
            "contract" => Payload::SourceContract(de("payload.contract", field("contract")?)?),
            _ => Payload::Extractor(de("payload.extractor", field("extractor")?)?),
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectionKind {
    Admission,
    Path,
    Payload,
    Reference,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditOutcome {
    Applied,
    ApplyFailed(String),
}

/// Record of one application attempt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApplyAudit {
    pub op: String,
    pub layer: LayerId,
    pub key: String,
    pub path: String,
    pub rationale: String,
    pub expected_effect: String,
    pub diff_digest: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub before_snippet: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub after_snippet: Option<String>,
    pub outcome: AuditOutcome,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{kind:?} rejection: {reason}")]
pub struct Rejection {
    pub kind: RejectionKind,
    pub reason: String,
    pub diagnostics: CheckResult,
    pub audit: ApplyAudit,
}

struct Failure {
    kind: RejectionKind,
    diagnostics: CheckResult,
}

impl Failure {
    fn new(kind: RejectionKind, path: &str, message: impl Into<String>) -> Self {
        let mut diagnostics = CheckResult::ok();
        diagnostics.push(path, message);
        Failure { kind, diagnostics }
    }
}

fn normalize_key(t: EntryType, key: &str) -> String {
    match key.split_once('.') {
        Some((prefix, _)) if EntryType::from_prefix(prefix) == Some(t) => key.to_string(),
        _ => t.qualify(key),
    }
}

fn strip_suffix<'a>(path: &'a str, suffixes: &[&str]) -> &'a str {
    for s in suffixes {
        if let Some(p) = path.strip_suffix(&format!(".{s}")) {
            return p;
        }
    }
    path
}

/// Rule addressed by a modify path: `procedural.rules.R` or `procedural.schemas.S.rules.R`.
enum RuleTarget {
    Standalone(String),
    InSchema(String, String),
}

fn rule_target(path: &str) -> Option<RuleTarget> {
    let p = strip_suffix(path, &["cond", "priority"]);
    let segs: Vec<&str> = p.split('.').collect();
    match segs.as_slice() {
        ["procedural", "rules", r] => Some(RuleTarget::Standalone(r.to_string())),
        ["procedural", "schemas", s, "rules", r] => {
            Some(RuleTarget::InSchema(s.to_string(), r.to_string()))
        }
        _ => None,
    }
}

fn all_rule_names(kb: &KnowledgeBase) -> Vec<&str> {
    kb.all_rules()
        .into_iter()
        .map(|(_, _, r)| r.name.as_str())
        .collect()
}

/// Builds the post-edit KB, or the first failing check.
fn plan(kb: &KnowledgeBase, d: &KbDiff) -> Result<(KnowledgeBase, String), Failure> {
    if !admits(d.layer, d.op) {
        return Err(Failure::new(
            RejectionKind::Admission,
            "op",
            format!("op `{}` not admitted in layer {}", d.op, d.layer),
        ));
    }
    let mut new = kb.clone();
    let provenance = ProvenanceRecord {
        origin: "diff".into(),
        op: d.op.as_str().into(),
        evidence: d.evidence.clone(),
        diff_digest: d.digest(),
        version: kb.version + 1,
    };

    let touched = if let Some(mut content) = d.payload.new_content() {
        let t = content.entry_type();
        if t.layer() != d.layer || !target_types(d.op).contains(&t) {
            return Err(Failure::new(
                RejectionKind::Admission,
                "payload",
                format!("{} entries not admitted in layer {}", t.as_str(), d.layer),
            ));
        }
        let container = format!("{}.{}", d.layer.section(), t.container());
        let name = content.name().to_string();
        if d.path != container && d.path != format!("{container}.{name}") {
            return Err(Failure::new(
                RejectionKind::Path,
                "path",
                format!("path missing: `{}` (expected `{container}`)", d.path),
            ));
        }
        let key = t.qualify(&name);
        if normalize_key(t, &d.key) != key {
            return Err(Failure::new(
                RejectionKind::Path,
                "key",
                format!("key `{}` does not match payload name `{name}`", d.key),
            ));
        }
        if let EntryContent::Rule(rule) = &mut content {
            if all_rule_names(kb).contains(&rule.name.as_str()) {
                return Err(Failure::new(
                    RejectionKind::Payload,
                    "payload.rule.name",
                    format!("duplicate rule name `{}`", rule.name),
                ));
            }
            if let Payload::Rule {
                explicit_priority: false,
                ..
            } = d.payload
            {
                let max = kb
                    .all_rules()
                    .iter()
                    .map(|(_, _, r)| r.priority)
                    .max()
                    .unwrap_or(0);
                rule.priority = max + 10;
            }
        }
        if let EntryContent::PolicySchema(s) = &content {
            let existing = all_rule_names(kb);
            if let Some(r) = s.rules.iter().find(|r| existing.contains(&r.name.as_str())) {
                return Err(Failure::new(
                    RejectionKind::Payload,
                    "payload.schema.rules",
                    format!("duplicate rule name `{}`", r.name),
                ));
            }
        }
        match (&content, new.get_mut(d.layer, &key)) {
            (EntryContent::ObjectFact(add), Some(existing)) => {
                let EntryContent::ObjectFact(cur) = &mut existing.content else {
                    unreachable!("object key")
                };
                if let Some(k) = add.facts.keys().find(|k| cur.facts.contains_key(*k)) {
                    return Err(Failure::new(
                        RejectionKind::Payload,
                        "payload.object.facts",
                        format!("fact `{k}` already declared for `{name}`"),
                    ));
                }
                cur.facts.extend(add.facts.clone());
                existing.provenance.push(provenance);
            }
            (_, Some(_)) => {
                return Err(Failure::new(
                    RejectionKind::Payload,
                    "key",
                    format!("duplicate key `{key}`"),
                ));
            }
            (_, None) => {
                new.insert(KbEntry {
                    layer: d.layer,
                    key: key.clone(),
                    content,
                    provenance: vec![provenance],
                })
                .map_err(|e| {
                    Failure::new(
                        RejectionKind::Payload,
                        "key",
                        format!("duplicate key `{}`", e.key),
                    )
                })?;
            }
        }
        key
    } else {
        let missing = || {
            Failure::new(
                RejectionKind::Path,
                "path",
                format!("path missing: `{}`", d.path),
            )
        };
        match (&d.payload, d.op) {
            (Payload::Threshold(v), Op::ModifyThreshold) => {
                let p = strip_suffix(&d.path, &["value"]);
                let name = p
                    .strip_prefix("logic.predicates.")
                    .and_then(|r| r.strip_suffix(".threshold"))
                    .ok_or_else(missing)?;
                let key = EntryType::Predicate.qualify(name);
                let e = new.get_mut(LayerId::L1, &key).ok_or_else(missing)?;
                let EntryContent::Predicate(pred) = &mut e.content else {
                    return Err(missing());
                };
                let t = pred.threshold.as_mut().ok_or_else(missing)?;
                t.value = *v;
                e.provenance.push(provenance);
                key
            }
            (Payload::Guard(_) | Payload::Priority(_), _) => {
                let target = rule_target(&d.path).ok_or_else(missing)?;
                let (key, rule_name) = match &target {
                    RuleTarget::Standalone(r) => (EntryType::Rule.qualify(r), r.clone()),
                    RuleTarget::InSchema(s, r) => (EntryType::PolicySchema.qualify(s), r.clone()),
                };
                let e = new.get_mut(LayerId::L4, &key).ok_or_else(missing)?;
                let rule = match &mut e.content {
                    EntryContent::Rule(r) => Some(r),
                    EntryContent::PolicySchema(s) => {
                        s.rules.iter_mut().find(|r| r.name == rule_name)
                    }
                    _ => None,
                }
                .ok_or_else(missing)?;
                match &d.payload {
                    Payload::Guard(c) => rule.cond = c.clone(),
                    Payload::Priority(p) => rule.priority = *p,
                    _ => unreachable!("guard or priority"),
                }
                e.provenance.push(provenance);
                key
            }
            (Payload::SkillSteps(steps), _) => {
                let name = strip_suffix(&d.path, &["body"])
                    .strip_prefix("causal.skills.")
                    .ok_or_else(missing)?;
                let key = EntryType::Skill.qualify(name);
                let e = new.get_mut(LayerId::L3, &key).ok_or_else(missing)?;
                let EntryContent::Skill(s) = &mut e.content else {
                    return Err(missing());
                };
                s.body.extend(steps.iter().cloned());
                e.provenance.push(provenance);
                key
            }
            (Payload::GoalFact { fact, value }, _) => {
                let name = strip_suffix(&d.path, &["facts"])
                    .strip_prefix("goals.schemas.")
                    .ok_or_else(missing)?;
                let key = EntryType::GoalSchema.qualify(name);
                let e = new.get_mut(LayerId::L7, &key).ok_or_else(missing)?;
                let EntryContent::GoalSchema(g) = &mut e.content else {
                    return Err(missing());
                };
                if g.facts.contains_key(fact) {
                    return Err(Failure::new(
                        RejectionKind::Payload,
                        "payload.fact",
                        format!("fact `{fact}` already declared"),
                    ));
                }
                g.facts.insert(fact.clone(), value.clone());
                e.provenance.push(provenance);
                key
            }
            _ => {
                return Err(Failure::new(
                    RejectionKind::Payload,
                    "payload",
                    format!("payload does not match op `{}`", d.op),
                ))
            }
        }
    };

    let entry = new.get(d.layer, &touched).expect("touched entry exists");
    let checked = type_check_entry(entry, d.layer);
    if !checked.is_ok() {
        return Err(Failure {
            kind: RejectionKind::Payload,
            diagnostics: checked,
        });
    }
    let before = resolve_references(kb);
    let after = resolve_references(&new);
    let introduced: Vec<_> = after
        .findings
        .iter()
        .filter(|f| !before.findings.contains(f))
        .collect();
    if !introduced.is_empty() {
        let mut diagnostics = CheckResult::ok();
        for f in introduced {
            diagnostics.push(format!("{}.{}", f.layer, f.entry), f.detail.clone());
        }
        return Err(Failure {
            kind: RejectionKind::Reference,
            diagnostics,
        });
    }
    new.version = kb.version + 1;
    new.metadata.commits.push(CommitRecord {
        version: new.version,
        op: d.op.as_str().into(),
        key: touched.clone(),
        diff_digest: d.digest(),
        evidence_id: d.evidence.first().cloned().unwrap_or_default(),
    });
    Ok((new, touched))
}

/// Checks a diff against a KB without applying it.
pub fn validate_diff(kb: &KnowledgeBase, diff: &KbDiff) -> CheckResult {
    match plan(kb, diff) {
        Ok(_) => CheckResult::ok(),
        Err(f) => f.diagnostics,
    }
}

fn snippet(kb: &KnowledgeBase, layer: LayerId, key: &str) -> String {
    match kb.get(layer, key) {
        Some(e) => {
            let mut m = Map::new();
            m.insert(e.doc_path(), crate::kb::doc::entry_json(e, false));
            serde_json::to_string_pretty(&Json::Object(m)).expect("snippet serializes")
        }
        None => "null".into(),
    }
}

/// Applies a diff, returning a new KB. The input KB is never modified.
#[allow(clippy::result_large_err)]
pub fn apply_diff(
    kb: &KnowledgeBase,
    diff: &KbDiff,
) -> Result<(KnowledgeBase, ApplyAudit), Rejection> {
    let mut audit = ApplyAudit {
        op: diff.op.as_str().into(),
        layer: diff.layer,
        key: diff.key.clone(),
        path: diff.path.clone(),
        rationale: diff.rationale.clone(),
        expected_effect: diff.expected_effect.clone(),
        diff_digest: diff.digest(),
        before_snippet: None,
        after_snippet: None,
        outcome: AuditOutcome::Applied,
    };
    match plan(kb, diff) {
        Ok((new, key)) => {
            audit.key = key.clone();
            audit.before_snippet = Some(snippet(kb, diff.layer, &key));
            audit.after_snippet = Some(snippet(&new, diff.layer, &key));
            Ok((new, audit))
        }
        Err(f) => {
            let reason = f
                .diagnostics
                .diagnostics
                .first()
                .map_or_else(String::new, |d| d.to_string());
            audit.outcome = AuditOutcome::ApplyFailed(reason.clone());
            Err(Rejection {
                kind: f.kind,
                reason,
                diagnostics: f.diagnostics,
                audit,
            })
        }
    }
}

#[cfg(test)]
mod tests;
