use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::check::template_slots;
use super::{extractor_fields, EntryContent, KbEntry, KnowledgeBase, SemType, SkillDef};
use crate::cond::ConditionExpr;
use crate::layer::LayerId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RefKind {
    Contract,
    Predicate,
    Arity,
    Field,
    Skill,
    Operator,
    ObjectClass,
    TaskFamily,
    RepairTarget,
    ContractAction,
    SourceField,
    Cycle,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Finding {
    pub layer: LayerId,
    /// Qualified key of the entry holding the reference.
    pub entry: String,
    pub reference: String,
    pub kind: RefKind,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct ReferenceReport {
    pub findings: Vec<Finding>,
}

impl ReferenceReport {
    pub fn is_empty(&self) -> bool {
        self.findings.is_empty()
    }

    pub fn len(&self) -> usize {
        self.findings.len()
    }
}

impl std::fmt::Display for ReferenceReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (i, x) in self.findings.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{}.{}: {}", x.layer, x.entry, x.detail)?;
        }
        Ok(())
    }
}

/// Lists every identifier that fails to resolve. An empty report means the
/// KB is closed.
pub fn resolve_references(kb: &KnowledgeBase) -> ReferenceReport {
    let mut r = Resolver::new(kb);
    r.run();
    ReferenceReport {
        findings: r.findings,
    }
}

struct Resolver<'a> {
    kb: &'a KnowledgeBase,
    fields: BTreeSet<&'static str>,
    arity: BTreeMap<&'a str, usize>,
    families: Option<BTreeSet<&'a str>>,
    findings: Vec<Finding>,
}

impl<'a> Resolver<'a> {
    fn new(kb: &'a KnowledgeBase) -> Self {
        let mut fields = BTreeSet::new();
        let mut arity = BTreeMap::new();
        for e in kb.entries() {
            match &e.content {
                EntryContent::Grounding(g) => {
                    let available = extractor_fields(g.extractor);
                    for f in &g.fields {
                        if let Some(s) = available.iter().find(|a| **a == f.as_str()) {
                            fields.insert(*s);
                        }
                    }
                }
                EntryContent::Predicate(p) => {
                    arity.insert(p.name.as_str(), p.params.len());
                }
                _ => {}
            }
        }
        let families = kb
            .contract()
            .map(|c| c.task_families.iter().map(String::as_str).collect());
        Resolver {
            kb,
            fields,
            arity,
            families,
            findings: Vec::new(),
        }
    }

    fn find(&mut self, e: &KbEntry, reference: &str, kind: RefKind, detail: String) {
        self.findings.push(Finding {
            layer: e.layer,
            entry: e.key.clone(),
            reference: reference.to_string(),
            kind,
            detail,
        });
    }

    fn pred_ref(&mut self, e: &KbEntry, name: &str, args: usize) {
        match self.arity.get(name) {
            None => self.find(
                e,
                name,
                RefKind::Predicate,
                format!("unresolved predicate `{name}`"),
            ),
            Some(&n) if n != args => self.find(
                e,
                name,
                RefKind::Arity,
                format!("predicate `{name}` takes {n} argument(s), called with {args}"),
            ),
            _ => {}
        }
    }

    fn cond(&mut self, e: &KbEntry, c: &ConditionExpr) {
        for (name, args) in c.predicate_refs() {
            self.pred_ref(e, name, args);
        }
        for path in c.field_paths() {
            if !self.fields.contains(path) {
                self.find(
                    e,
                    path,
                    RefKind::Field,
                    format!("field `{path}` is not provided by any grounding entry"),
                );
            }
        }
    }

    fn skill_ref(&mut self, e: &KbEntry, name: &str, kind: RefKind) {
        if self.kb.skill(name).is_none() {
            self.find(e, name, kind, format!("unresolved skill `{name}`"));
        }
    }

    fn family(&mut self, e: &KbEntry, family: &str) {
        if let Some(fams) = &self.families {
            if !fams.contains(family) {
                self.find(
                    e,
                    family,
                    RefKind::TaskFamily,
                    format!("task family `{family}` not in the source contract"),
                );
            }
        }
    }

    fn run(&mut self) {
        let kb = self.kb;
        let contract = kb.contract();
        let has_policy = kb
            .entries()
            .iter()
            .any(|e| e.layer != LayerId::S0 && e.layer != LayerId::L6);
        if contract.is_none() && has_policy {
            if let Some(first) = kb.entries().iter().find(|e| e.layer != LayerId::S0) {
                self.find(
                    first,
                    "source",
                    RefKind::Contract,
                    "no source contract declared".into(),
                );
            }
        }
        let classes: BTreeSet<&str> = kb.known_classes().into_iter().collect();

        for e in kb.entries() {
            match &e.content {
                EntryContent::SourceContract(_) | EntryContent::Experience(_) => {}
                EntryContent::Grounding(g) => {
                    if let Some(c) = contract {
                        if !c.observation_fields.contains_key(&g.source_field) {
                            self.find(
                                e,
                                &g.source_field,
                                RefKind::SourceField,
                                format!(
                                    "observation field `{}` not declared by the source contract",
                                    g.source_field
                                ),
                            );
                        }
                    }
                }
                EntryContent::Predicate(p) => self.cond(e, &p.eval_rule),
                EntryContent::ObjectFact(_) => {}
                EntryContent::SpatialPrior(p) => {
                    for c in std::iter::once(&p.class).chain(&p.ranked) {
                        if !classes.contains(c.as_str()) {
                            self.find(e, c, RefKind::ObjectClass, format!("unknown class `{c}`"));
                        }
                    }
                }
                EntryContent::Operator(o) => {
                    for p in &o.preconditions {
                        self.pred_ref(e, p, 0);
                    }
                    for eff in &o.effects {
                        let name = eff.trim_start_matches(['+', '-']);
                        self.pred_ref(e, name, 0);
                    }
                    match kb.skill(&o.bound_skill.skill) {
                        None => self.skill_ref(e, &o.bound_skill.skill, RefKind::Skill),
                        Some(s) => {
                            let expected: Vec<&str> =
                                s.params.iter().map(|p| p.name.as_str()).collect();
                            let got: Vec<&str> =
                                o.bound_skill.args.iter().map(String::as_str).collect();
                            if expected != got {
                                self.find(
                                    e,
                                    &s.name,
                                    RefKind::Arity,
                                    format!(
                                        "skill `{}` binds {} argument(s) [{}], operator supplies {} [{}]",
                                        s.name,
                                        expected.len(),
                                        expected.join(", "),
                                        got.len(),
                                        got.join(", ")
                                    ),
                                );
                            }
                        }
                    }
                }
                EntryContent::Skill(s) => {
                    for step in &s.body {
                        if let Some(w) = &step.when {
                            self.cond(e, w);
                        }
                        if let Some(c) = contract {
                            if !c
                                .actions
                                .iter()
                                .any(|a| template_matches(s, &step.command, a))
                            {
                                self.find(
                                    e,
                                    &step.command,
                                    RefKind::ContractAction,
                                    format!(
                                        "command `{}` matches no contract action form",
                                        step.command
                                    ),
                                );
                            }
                        }
                    }
                }
                EntryContent::Rule(rule) => {
                    self.cond(e, &rule.cond);
                    self.skill_ref(e, &rule.action, RefKind::Skill);
                }
                EntryContent::PolicySchema(s) => {
                    for f in &s.applies_to {
                        self.family(e, f);
                    }
                    for rule in &s.rules {
                        self.cond(e, &rule.cond);
                        self.skill_ref(e, &rule.action, RefKind::Skill);
                    }
                }
                EntryContent::Monitor(m) | EntryContent::Recovery(m) => {
                    self.cond(e, &m.trigger);
                    self.skill_ref(e, &m.repair_target, RefKind::RepairTarget);
                }
                EntryContent::GoalSchema(g) => {
                    self.family(e, &g.task_family);
                    for step in &g.decomposition {
                        let is_schema = kb
                            .all_rules()
                            .iter()
                            .any(|(_, s, _)| s.is_some_and(|s| &s.name == step));
                        if kb.operator(step).is_none() && !is_schema {
                            self.find(
                                e,
                                step,
                                RefKind::Operator,
                                format!("decomposition step `{step}` does not resolve"),
                            );
                        }
                    }
                    self.cond(e, &g.terminal_condition);
                }
            }
        }
        self.cycles();
    }

    /// Predicates whose definitions refer back to themselves.
    fn cycles(&mut self) {
        let kb = self.kb;
        let mut graph: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for e in kb.entries() {
            if let EntryContent::Predicate(p) = &e.content {
                graph.insert(
                    &p.name,
                    p.eval_rule
                        .predicate_refs()
                        .into_iter()
                        .map(|(n, _)| n)
                        .collect(),
                );
            }
        }
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            Open,
            Done,
        }
        fn visit<'g>(
            n: &'g str,
            graph: &BTreeMap<&'g str, Vec<&'g str>>,
            marks: &mut BTreeMap<&'g str, Mark>,
            cyclic: &mut BTreeSet<&'g str>,
        ) {
            match marks.get(n) {
                Some(Mark::Done) => return,
                Some(Mark::Open) => {
                    cyclic.insert(n);
                    return;
                }
                None => {}
            }
            marks.insert(n, Mark::Open);
            for m in graph.get(n).into_iter().flatten() {
                if graph.contains_key(m) {
                    visit(m, graph, marks, cyclic);
                }
            }
            marks.insert(n, Mark::Done);
        }
        let mut marks = BTreeMap::new();
        let mut cyclic = BTreeSet::new();
        for n in graph.keys() {
            visit(n, &graph, &mut marks, &mut cyclic);
        }
        for n in cyclic {
            if let Some(e) = kb.get(LayerId::L1, &super::EntryType::Predicate.qualify(n)) {
                self.find(
                    e,
                    n,
                    RefKind::Cycle,
                    format!("predicate `{n}` is defined in terms of itself"),
                );
            }
        }
    }
}

/// Whether a skill command template instantiates a contract action form.
/// Object slots fill `{object}`, receptacle and tool slots fill
/// `{receptacle}`, and untyped slots stand for a literal word.
pub(crate) fn template_matches(skill: &SkillDef, template: &str, action: &str) -> bool {
    if template_slots(template).is_err() {
        return false;
    }
    let t: Vec<&str> = template.split_whitespace().collect();
    let a: Vec<&str> = action.split_whitespace().collect();
    if t.len() != a.len() {
        return false;
    }
    t.iter().zip(&a).all(|(tt, at)| {
        let slot = tt.strip_prefix('{').and_then(|s| s.strip_suffix('}'));
        let action_slot = at.strip_prefix('{').and_then(|s| s.strip_suffix('}'));
        match slot {
            None => tt == at,
            Some(name) => {
                let ty = skill
                    .params
                    .iter()
                    .find(|p| p.name == name)
                    .map(|p| p.sem_type);
                matches!(
                    (ty, action_slot),
                    (Some(SemType::Object), Some("object"))
                        | (
                            Some(SemType::Receptacle | SemType::Tool),
                            Some("receptacle")
                        )
                        | (Some(SemType::None), None)
                )
            }
        }
    })
}
