//! The typed knowledge-base document: layered entries with provenance, type
//! checking, reference resolution, canonical serialization and dot-path
//! addressing.

mod check;
pub(crate) mod doc;
mod path;
mod refs;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cond::ConditionExpr;
use crate::layer::LayerId;
use crate::value::Value;

pub use check::{
    extractor_fields, template_slots, type_check_entry, type_check_kb, CheckResult, Diagnostic,
    GOAL_FACT_KEYS, GOAL_SLOTS, OBJECT_FACT_KEYS, PROCESS_VERBS,
};
pub use doc::{canonical_serialize, parse_kb, to_document, ParseError, FORMAT};
pub use path::{resolve_path, NodeLocation, PathError};
pub use refs::{resolve_references, Finding, RefKind, ReferenceReport};

/// Schema name of an entry. Each type lives in exactly one layer container.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryType {
    SourceContract,
    Grounding,
    Predicate,
    ObjectFact,
    SpatialPrior,
    Operator,
    Skill,
    Rule,
    PolicySchema,
    Monitor,
    Recovery,
    Experience,
    GoalSchema,
}

impl EntryType {
    pub const ALL: [EntryType; 13] = [
        EntryType::SourceContract,
        EntryType::Grounding,
        EntryType::Predicate,
        EntryType::ObjectFact,
        EntryType::SpatialPrior,
        EntryType::Operator,
        EntryType::Skill,
        EntryType::Rule,
        EntryType::PolicySchema,
        EntryType::Monitor,
        EntryType::Recovery,
        EntryType::Experience,
        EntryType::GoalSchema,
    ];

    pub fn layer(self) -> LayerId {
        match self {
            EntryType::SourceContract => LayerId::S0,
            EntryType::Grounding => LayerId::L0,
            EntryType::Predicate => LayerId::L1,
            EntryType::ObjectFact | EntryType::SpatialPrior => LayerId::L2,
            EntryType::Operator | EntryType::Skill => LayerId::L3,
            EntryType::Rule | EntryType::PolicySchema => LayerId::L4,
            EntryType::Monitor | EntryType::Recovery => LayerId::L5,
            EntryType::Experience => LayerId::L6,
            EntryType::GoalSchema => LayerId::L7,
        }
    }

    /// Container name inside the layer's document section.
    pub fn container(self) -> &'static str {
        match self {
            EntryType::SourceContract => "contracts",
            EntryType::Grounding => "extractors",
            EntryType::Predicate => "predicates",
            EntryType::ObjectFact => "objects",
            EntryType::SpatialPrior => "spatial_priors",
            EntryType::Operator => "operators",
            EntryType::Skill => "skills",
            EntryType::Rule => "rules",
            EntryType::PolicySchema | EntryType::GoalSchema => "schemas",
            EntryType::Monitor => "monitors",
            EntryType::Recovery => "recovery",
            EntryType::Experience => "records",
        }
    }

    /// Prefix of the qualified entry key, e.g. `rule.OpenGoalRecep`.
    pub fn prefix(self) -> &'static str {
        match self {
            EntryType::SourceContract => "contract",
            EntryType::Grounding => "extractor",
            EntryType::Predicate => "predicate",
            EntryType::ObjectFact => "object",
            EntryType::SpatialPrior => "prior",
            EntryType::Operator => "operator",
            EntryType::Skill => "skill",
            EntryType::Rule => "rule",
            EntryType::PolicySchema => "schema",
            EntryType::Monitor => "monitor",
            EntryType::Recovery => "recovery",
            EntryType::Experience => "record",
            EntryType::GoalSchema => "goal",
        }
    }

    /// List containers keep declaration order; map containers are keyed.
    pub fn is_list(self) -> bool {
        matches!(
            self,
            EntryType::Rule
                | EntryType::PolicySchema
                | EntryType::Experience
                | EntryType::GoalSchema
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EntryType::SourceContract => "source_contract",
            EntryType::Grounding => "grounding",
            EntryType::Predicate => "predicate",
            EntryType::ObjectFact => "object_fact",
            EntryType::SpatialPrior => "spatial_prior",
            EntryType::Operator => "operator",
            EntryType::Skill => "skill",
            EntryType::Rule => "rule",
            EntryType::PolicySchema => "policy_schema",
            EntryType::Monitor => "monitor",
            EntryType::Recovery => "recovery",
            EntryType::Experience => "experience",
            EntryType::GoalSchema => "goal_schema",
        }
    }

    pub fn from_container(layer: LayerId, container: &str) -> Option<EntryType> {
        EntryType::ALL
            .into_iter()
            .find(|t| t.layer() == layer && t.container() == container)
    }

    pub fn from_prefix(prefix: &str) -> Option<EntryType> {
        EntryType::ALL.into_iter().find(|t| t.prefix() == prefix)
    }

    pub fn qualify(self, name: &str) -> String {
        format!("{}.{name}", self.prefix())
    }

    pub(crate) fn order(self) -> usize {
        EntryType::ALL
            .iter()
            .position(|t| *t == self)
            .unwrap_or(usize::MAX)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SemType {
    Object,
    Receptacle,
    Tool,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamDecl {
    pub name: String,
    pub sem_type: SemType,
}

/// S0: how the environment exposes state and accepts actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceContract {
    pub source: String,
    /// Observation field name to semantic type.
    pub observation_fields: BTreeMap<String, String>,
    /// Action forms such as `take {object} from {receptacle}`.
    pub actions: Vec<String>,
    pub success_signal: String,
    pub object_classes: Vec<String>,
    pub receptacle_classes: Vec<String>,
    pub task_families: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractorKind {
    Location,
    Inventory,
    Contents,
    Frontier,
    Semantics,
    Task,
    Status,
}

impl ExtractorKind {
    pub const ALL: [ExtractorKind; 7] = [
        ExtractorKind::Location,
        ExtractorKind::Inventory,
        ExtractorKind::Contents,
        ExtractorKind::Frontier,
        ExtractorKind::Semantics,
        ExtractorKind::Task,
        ExtractorKind::Status,
    ];
}

/// L0: binds an observation field to a family of grounded state fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundingDef {
    pub extractor: ExtractorKind,
    pub source_field: String,
    pub fields: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Threshold {
    pub value: f64,
    pub min: f64,
    pub max: f64,
}

/// L1: a named boolean test over grounded fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredicateDef {
    pub name: String,
    #[serde(default)]
    pub params: Vec<ParamDecl>,
    pub eval_rule: ConditionExpr,
    #[serde(default)]
    pub threshold: Option<Threshold>,
}

/// L2: facts about an object or receptacle class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectFact {
    pub class: String,
    pub facts: BTreeMap<String, Value>,
}

/// L2: receptacle classes ranked by how likely they hold the class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpatialPrior {
    pub class: String,
    pub ranked: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkillBinding {
    pub skill: String,
    #[serde(default)]
    pub args: Vec<String>,
}

/// L3: symbolic operator with signed predicate effects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorDef {
    pub name: String,
    #[serde(default)]
    pub params: Vec<ParamDecl>,
    pub preconditions: Vec<String>,
    /// `+pred` adds, `-pred` deletes.
    pub effects: Vec<String>,
    pub bound_skill: SkillBinding,
}

/// Where a skill argument gets its candidate values from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArgSource {
    Current,
    Held,
    TargetHere,
    UnprocessedTargetHere,
    LampHere,
    UnsearchedForTarget,
    UnvisitedForLamp,
    TargetElsewhere,
    GoalReceptacles,
    TaskTools,
    LampReceptacles,
    TaskVerb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkillParam {
    pub name: String,
    pub sem_type: SemType,
    pub source: ArgSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkillStep {
    #[serde(default)]
    pub when: Option<ConditionExpr>,
    pub command: String,
}

/// L3: maps an action schema to an environment command template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkillDef {
    pub name: String,
    #[serde(default)]
    pub params: Vec<SkillParam>,
    pub body: Vec<SkillStep>,
}

/// L4: a prioritized condition/action rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleDef {
    pub name: String,
    pub priority: i64,
    pub cond: ConditionExpr,
    pub action: String,
    #[serde(default)]
    pub rationale: String,
    #[serde(default)]
    pub expected_effect: String,
}

/// L4: a named bundle of rules gated by task family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySchemaDef {
    pub name: String,
    /// Task families the schema is active for; empty means all.
    #[serde(default)]
    pub applies_to: Vec<String>,
    pub rules: Vec<RuleDef>,
}

/// L5: a monitor or recovery contract.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitorDef {
    pub name: String,
    pub trigger: ConditionExpr,
    pub repair_target: String,
    pub protected_scope: String,
}

pub type RecoveryDef = MonitorDef;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperienceStatus {
    Kept,
    Reverted,
    ApplyFailed,
}

/// L6: the audit summary of one edit hypothesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperienceRecord {
    pub evidence_id: String,
    #[serde(default)]
    pub trajectory_refs: Vec<String>,
    pub hypothesis: serde_json::Value,
    pub focused_before: String,
    pub focused_after: String,
    pub protected_before: String,
    pub protected_after: String,
    pub status: ExperienceStatus,
}

/// L7: goal template, decomposition and terminal test for a task family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoalSchemaDef {
    pub name: String,
    pub task_family: String,
    /// Goal sentence template with `{slot}` placeholders.
    pub pattern: String,
    pub decomposition: Vec<String>,
    pub terminal_condition: ConditionExpr,
    #[serde(default)]
    pub facts: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EntryContent {
    SourceContract(SourceContract),
    Grounding(GroundingDef),
    Predicate(PredicateDef),
    ObjectFact(ObjectFact),
    SpatialPrior(SpatialPrior),
    Operator(OperatorDef),
    Skill(SkillDef),
    Rule(RuleDef),
    PolicySchema(PolicySchemaDef),
    Monitor(MonitorDef),
    Recovery(RecoveryDef),
    Experience(ExperienceRecord),
    GoalSchema(GoalSchemaDef),
}

impl EntryContent {
    pub fn entry_type(&self) -> EntryType {
        match self {
            EntryContent::SourceContract(_) => EntryType::SourceContract,
            EntryContent::Grounding(_) => EntryType::Grounding,
            EntryContent::Predicate(_) => EntryType::Predicate,
            EntryContent::ObjectFact(_) => EntryType::ObjectFact,
            EntryContent::SpatialPrior(_) => EntryType::SpatialPrior,
            EntryContent::Operator(_) => EntryType::Operator,
            EntryContent::Skill(_) => EntryType::Skill,
            EntryContent::Rule(_) => EntryType::Rule,
            EntryContent::PolicySchema(_) => EntryType::PolicySchema,
            EntryContent::Monitor(_) => EntryType::Monitor,
            EntryContent::Recovery(_) => EntryType::Recovery,
            EntryContent::Experience(_) => EntryType::Experience,
            EntryContent::GoalSchema(_) => EntryType::GoalSchema,
        }
    }

    /// The name the entry key must carry after its prefix.
    pub fn name(&self) -> &str {
        match self {
            EntryContent::SourceContract(c) => &c.source,
            EntryContent::Grounding(g) => extractor_name(g.extractor),
            EntryContent::Predicate(p) => &p.name,
            EntryContent::ObjectFact(o) => &o.class,
            EntryContent::SpatialPrior(p) => &p.class,
            EntryContent::Operator(o) => &o.name,
            EntryContent::Skill(s) => &s.name,
            EntryContent::Rule(r) => &r.name,
            EntryContent::PolicySchema(s) => &s.name,
            EntryContent::Monitor(m) | EntryContent::Recovery(m) => &m.name,
            EntryContent::Experience(e) => &e.evidence_id,
            EntryContent::GoalSchema(g) => &g.name,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let v = match self {
            EntryContent::SourceContract(c) => serde_json::to_value(c),
            EntryContent::Grounding(c) => serde_json::to_value(c),
            EntryContent::Predicate(c) => serde_json::to_value(c),
            EntryContent::ObjectFact(c) => serde_json::to_value(c),
            EntryContent::SpatialPrior(c) => serde_json::to_value(c),
            EntryContent::Operator(c) => serde_json::to_value(c),
            EntryContent::Skill(c) => serde_json::to_value(c),
            EntryContent::Rule(c) => serde_json::to_value(c),
            EntryContent::PolicySchema(c) => serde_json::to_value(c),
            EntryContent::Monitor(c) | EntryContent::Recovery(c) => serde_json::to_value(c),
            EntryContent::Experience(c) => serde_json::to_value(c),
            EntryContent::GoalSchema(c) => serde_json::to_value(c),
        };
        v.expect("entry content is always representable as JSON")
    }

    /// Decodes content of the given type from a JSON value; errors name the
    /// offending field path.
    pub fn from_json(
        entry_type: EntryType,
        value: &serde_json::Value,
    ) -> Result<Self, (String, String)> {
        fn de<T: serde::de::DeserializeOwned>(
            v: &serde_json::Value,
        ) -> Result<T, (String, String)> {
            serde_path_to_error::deserialize(v)
                .map_err(|e| (e.path().to_string(), e.inner().to_string()))
        }
        Ok(match entry_type {
            EntryType::SourceContract => EntryContent::SourceContract(de(value)?),
            EntryType::Grounding => EntryContent::Grounding(de(value)?),
            EntryType::Predicate => EntryContent::Predicate(de(value)?),
            EntryType::ObjectFact => EntryContent::ObjectFact(de(value)?),
            EntryType::SpatialPrior => EntryContent::SpatialPrior(de(value)?),
            EntryType::Operator => EntryContent::Operator(de(value)?),
            EntryType::Skill => EntryContent::Skill(de(value)?),
            EntryType::Rule => EntryContent::Rule(de(value)?),
            EntryType::PolicySchema => EntryContent::PolicySchema(de(value)?),
            EntryType::Monitor => EntryContent::Monitor(de(value)?),
            EntryType::Recovery => EntryContent::Recovery(de(value)?),
            EntryType::Experience => EntryContent::Experience(de(value)?),
            EntryType::GoalSchema => EntryContent::GoalSchema(de(value)?),
        })
    }
}

pub fn extractor_name(kind: ExtractorKind) -> &'static str {
    match kind {
        ExtractorKind::Location => "location",
        ExtractorKind::Inventory => "inventory",
        ExtractorKind::Contents => "contents",
        ExtractorKind::Frontier => "frontier",
        ExtractorKind::Semantics => "semantics",
        ExtractorKind::Task => "task",
        ExtractorKind::Status => "status",
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProvenanceRecord {
    /// `scaffold`, `diff`, `commit`, ...
    pub origin: String,
    #[serde(default)]
    pub op: String,
    #[serde(default)]
    pub evidence: Vec<String>,
    #[serde(default)]
    pub diff_digest: String,
    #[serde(default)]
    pub version: u64,
}

impl ProvenanceRecord {
    pub fn scaffold() -> Self {
        ProvenanceRecord {
            origin: "scaffold".into(),
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KbEntry {
    pub layer: LayerId,
    /// Qualified key, `<type prefix>.<name>`.
    pub key: String,
    pub content: EntryContent,
    pub provenance: Vec<ProvenanceRecord>,
}

impl KbEntry {
    /// Builds an entry whose layer and key follow from its content.
    pub fn new(content: EntryContent, provenance: Vec<ProvenanceRecord>) -> Self {
        let t = content.entry_type();
        KbEntry {
            layer: t.layer(),
            key: t.qualify(content.name()),
            content,
            provenance,
        }
    }

    pub fn entry_type(&self) -> EntryType {
        self.content.entry_type()
    }

    /// The key without its type prefix.
    pub fn name(&self) -> &str {
        self.key
            .split_once('.')
            .map_or(self.key.as_str(), |(_, n)| n)
    }

    /// Document path of this entry, e.g. `procedural.rules.OpenGoalRecep`.
    pub fn doc_path(&self) -> String {
        format!(
            "{}.{}.{}",
            self.layer.section(),
            self.entry_type().container(),
            self.name()
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommitRecord {
    pub version: u64,
    pub op: String,
    pub key: String,
    pub diff_digest: String,
    pub evidence_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KbMetadata {
    pub name: String,
    #[serde(default)]
    pub commits: Vec<CommitRecord>,
    /// Set on ablation interventions; such KBs are for diagnostics only.
    #[serde(default)]
    pub non_deployable: bool,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("duplicate entry ({layer}, {key})")]
pub struct DuplicateEntry {
    pub layer: LayerId,
    pub key: String,
}

/// A versioned knowledge base. Entries are kept in canonical order: layer,
/// then container, then key for keyed containers and declaration order for
/// list containers.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeBase {
    pub version: u64,
    pub metadata: KbMetadata,
    entries: Vec<KbEntry>,
}

impl KnowledgeBase {
    pub fn new(name: &str) -> Self {
        KnowledgeBase {
            version: 0,
            metadata: KbMetadata {
                name: name.to_string(),
                ..Default::default()
            },
            entries: Vec::new(),
        }
    }

    pub fn from_entries(name: &str, entries: Vec<KbEntry>) -> Result<Self, DuplicateEntry> {
        let mut kb = KnowledgeBase::new(name);
        for e in entries {
            kb.insert(e)?;
        }
        Ok(kb)
    }

    pub fn entries(&self) -> &[KbEntry] {
        &self.entries
    }

    pub fn insert(&mut self, entry: KbEntry) -> Result<(), DuplicateEntry> {
        if self.get(entry.layer, &entry.key).is_some() {
            return Err(DuplicateEntry {
                layer: entry.layer,
                key: entry.key,
            });
        }
        let pos = self
            .entries
            .iter()
            .position(|e| sort_key(e) > sort_key(&entry))
            .unwrap_or(self.entries.len());
        self.entries.insert(pos, entry);
        Ok(())
    }

    pub fn get(&self, layer: LayerId, key: &str) -> Option<&KbEntry> {
        self.entries
            .iter()
            .find(|e| e.layer == layer && e.key == key)
    }

    pub fn get_mut(&mut self, layer: LayerId, key: &str) -> Option<&mut KbEntry> {
        self.entries
            .iter_mut()
            .find(|e| e.layer == layer && e.key == key)
    }

    pub fn contains(&self, layer: LayerId, key: &str) -> bool {
        self.get(layer, key).is_some()
    }

    pub fn retain(&mut self, f: impl FnMut(&KbEntry) -> bool) {
        self.entries.retain(f);
    }

    pub fn entries_mut(&mut self) -> impl Iterator<Item = &mut KbEntry> {
        self.entries.iter_mut()
    }

    pub fn layer_entries(&self, layer: LayerId) -> impl Iterator<Item = &KbEntry> {
        self.entries.iter().filter(move |e| e.layer == layer)
    }

    pub fn contract(&self) -> Option<&SourceContract> {
        self.entries.iter().find_map(|e| match &e.content {
            EntryContent::SourceContract(c) => Some(c),
            _ => None,
        })
    }

    pub fn predicate(&self, name: &str) -> Option<&PredicateDef> {
        self.get(LayerId::L1, &EntryType::Predicate.qualify(name))
            .and_then(|e| match &e.content {
                EntryContent::Predicate(p) => Some(p),
                _ => None,
            })
    }

    pub fn skill(&self, name: &str) -> Option<&SkillDef> {
        self.get(LayerId::L3, &EntryType::Skill.qualify(name))
            .and_then(|e| match &e.content {
                EntryContent::Skill(s) => Some(s),
                _ => None,
            })
    }

    pub fn operator(&self, name: &str) -> Option<&OperatorDef> {
        self.get(LayerId::L3, &EntryType::Operator.qualify(name))
            .and_then(|e| match &e.content {
                EntryContent::Operator(o) => Some(o),
                _ => None,
            })
    }

    pub fn goal_schemas(&self) -> impl Iterator<Item = (&KbEntry, &GoalSchemaDef)> {
        self.entries.iter().filter_map(|e| match &e.content {
            EntryContent::GoalSchema(g) => Some((e, g)),
            _ => None,
        })
    }

    /// Every rule with the entry that declares it, in declaration order:
    /// standalone rules first, then rules inside policy schemas.
    pub fn all_rules(&self) -> Vec<(&KbEntry, Option<&PolicySchemaDef>, &RuleDef)> {
        let mut out = Vec::new();
        for e in &self.entries {
            if let EntryContent::Rule(r) = &e.content {
                out.push((e, None, r));
            }
        }
        for e in &self.entries {
            if let EntryContent::PolicySchema(s) = &e.content {
                for r in &s.rules {
                    out.push((e, Some(s), r));
                }
            }
        }
        out
    }

    /// All object/receptacle classes known from the contract or L2.
    pub fn known_classes(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        if let Some(c) = self.contract() {
            out.extend(c.object_classes.iter().map(String::as_str));
            out.extend(c.receptacle_classes.iter().map(String::as_str));
        }
        for e in &self.entries {
            if let EntryContent::ObjectFact(o) = &e.content {
                out.push(&o.class);
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        crate::hash::sha256_hex(canonical_serialize(self).as_bytes())
    }
}

fn sort_key(e: &KbEntry) -> (LayerId, usize, &str) {
    let t = e.entry_type();
    (e.layer, t.order(), if t.is_list() { "" } else { e.name() })
}
